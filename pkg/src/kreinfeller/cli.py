"""Batch front-end: ``python3 -m kreinfeller <command> config.json``.

A config is a JSON object. Keys and defaults:

    command       one of COMMANDS (may also be given on the command line)
    measure_w     measure spec object, or a path to a spec .json / atom .csv
    measure_v     same, for V
    resolution    atoms per continuous component            (1024)
    K             kernel table order                        (8)
    count         number of eigenvalues                     (20)
    bc            "periodic" or "dirichlet"                 ("periodic")
    kappa, beta   Whittle-Matern constants                  (1.0, 1.0)
    alpha         SPDE diffusion constant (beta is shared)  (1.0)
    T, dt         SPDE horizon and step                     (1.0, 0.01)
    M             field samples                             (1000)
    modes         field / SPDE truncation                   (16)
    paths         bridge or SPDE paths                      (100)
    alphas, xs    grids for the trig command                ([1, 5, 10], [0.25, 0.5, 1])
    seed          RNG seed                                  (0)
    tol           numerical tolerance                       (1e-10)
    format        field output, "csv" or "binary"           ("csv")
    output_dir    where artifacts go                        (".")
    cache_dir     cache root; else $KREINFELLER_CACHE, else no cache

Exit codes: 0 success, 1 validate found a failing property, 2 config
error, 3 numerical error, 4 cache error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import re
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from filelock import FileLock, Timeout

from . import dirichlet, fields, gentrig, oracle
from .kernels import KernelError, diagonal_tables, secular_coefficients
from .measure import (LEFT, RIGHT, AtomicMeasure, MeasureError, MeasureSpec,
                      compile_measure, digest_of, read_csv, write_csv)
from .spectrum import (EigenPair, Spectrum, SpectrumError, growth_exponent, solve_spectrum,
                       tail_sum)

log = logging.getLogger("kreinfeller")

COMMANDS = ("measure-compile", "kernels", "trig", "spectrum", "dirichlet-trace",
            "oracle-compare", "field-sample", "spde-evolve", "validate", "report")
CACHE_ENV = "KREINFELLER_CACHE"

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CACHE = 0, 1, 2, 3, 4


class ConfigError(ValueError):
    pass


class CacheError(RuntimeError):
    pass


NUMERIC_ERRORS = (SpectrumError, KernelError, MeasureError, oracle.OracleError,
                  oracle.ConvergenceError, fields.FieldError, dirichlet.DirichletError,
                  FloatingPointError, ArithmeticError)


@dataclass(frozen=True)
class Params:
    resolution: int = 1024
    K: int = 8
    count: int = 20
    bc: str = "periodic"
    kappa: float = 1.0
    beta: float = 1.0
    alpha: float = 1.0
    T: float = 1.0
    dt: float = 0.01
    M: int = 1000
    modes: int = 16
    paths: int = 100
    alphas: tuple = (1.0, 5.0, 10.0)
    xs: tuple = (0.25, 0.5, 1.0)
    seed: int = 0
    tol: float = 1e-10
    format: str = "csv"


PARAM_KEYS = set(Params.__dataclass_fields__)
TOP_KEYS = {"command", "measure_w", "measure_v", "output_dir", "cache_dir"}
SPECTRUM_KEYS = ("resolution", "K", "count", "bc")


@dataclass(frozen=True)
class RunConfig:
    command: str
    measure_w: dict          # {"spec": {...}} or {"csv": path}
    measure_v: dict
    params: Params = field(default_factory=Params)
    output_dir: str = "."
    cache_dir: str | None = None
    threads: int = 1


# ------------------------------------------------------------------ parsing

def _line_of(text: str, key: str) -> int:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else 0


def _measure_ref(value, chirality: str, base: Path, name: str) -> dict:
    if isinstance(value, str):
        path = (base / value).resolve()
        if not path.is_file():
            raise ConfigError(f"{name}: file {value!r} not found")
        if path.suffix == ".csv":
            m = read_csv(path)
            if m.chirality != chirality:
                raise ConfigError(f"{name}: atoms in {value!r} are {m.chirality}, need {chirality}")
            return {"csv": str(path), "digest": m.digest()}
        try:
            value = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{name}: {value!r} line {e.lineno}: {e.msg}") from None
    if not isinstance(value, dict):
        raise ConfigError(f"{name}: expected a measure spec object or a file path")
    d = dict(value)
    d.setdefault("chirality", chirality)
    if d["chirality"] != chirality:
        raise ConfigError(f"{name}: chirality must be {chirality}")
    try:
        spec = MeasureSpec.from_dict(d)
    except (MeasureError, KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"{name}: {e}") from None
    return {"spec": spec.to_dict()}


def _check_params(p: Params) -> None:
    ints = ("resolution", "K", "count", "M", "modes", "paths")
    for k in ints:
        v = getattr(p, k)
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise ConfigError(f"{k} must be a positive integer, got {v!r}")
    for k in ("kappa", "beta", "alpha", "T", "dt", "tol"):
        v = getattr(p, k)
        if not isinstance(v, (int, float)) or not math.isfinite(v) or v <= 0:
            raise ConfigError(f"{k} must be a positive number, got {v!r}")
    if p.bc not in ("periodic", "dirichlet"):
        raise ConfigError(f"bc must be 'periodic' or 'dirichlet', got {p.bc!r}")
    if p.format not in ("csv", "binary"):
        raise ConfigError(f"format must be 'csv' or 'binary', got {p.format!r}")
    if p.T < p.dt:
        raise ConfigError("T must be at least dt")
    if any(a < 0 for a in p.alphas) or any(not 0 <= x <= 1 for x in p.xs):
        raise ConfigError("alphas must be nonnegative and xs in [0, 1]")
    if not isinstance(p.seed, int) or not 0 <= p.seed < 2 ** 64:
        raise ConfigError("seed must be a 64-bit nonnegative integer")


def parse_config(path, command: str | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    unknown = sorted(set(raw) - TOP_KEYS - PARAM_KEYS)
    if unknown:
        where = ", ".join(f"{k!r} (line {_line_of(text, k)})" for k in unknown)
        raise ConfigError(f"{path}: unknown key(s) {where}")
    cmd = command or raw.get("command")
    if cmd not in COMMANDS:
        raise ConfigError(f"command must be one of {', '.join(COMMANDS)}; got {cmd!r}")
    for k in ("measure_w", "measure_v"):
        if k not in raw:
            raise ConfigError(f"{path}: missing {k!r}")
    base = path.parent
    mw = _measure_ref(raw["measure_w"], RIGHT, base, "measure_w")
    mv = _measure_ref(raw["measure_v"], LEFT, base, "measure_v")
    kw = {k: raw[k] for k in PARAM_KEYS if k in raw}
    for k in ("alphas", "xs"):
        if k in kw:
            kw[k] = tuple(kw[k])
    try:
        params = Params(**kw)
    except TypeError as e:
        raise ConfigError(str(e)) from None
    _check_params(params)
    out = raw.get("output_dir", ".")
    out = str((base / out).resolve()) if not Path(out).is_absolute() else out
    cache = raw.get("cache_dir")
    if cache is not None and not Path(cache).is_absolute():
        cache = str((base / cache).resolve())
    return RunConfig(cmd, mw, mv, params, out, cache)


# -------------------------------------------------------------------- cache

def cache_key(cfg: RunConfig, keys=None) -> str:
    """Digest of the canonical measure descriptions and numeric parameters
    (all of them, or only `keys`)."""
    p = asdict(cfg.params)
    if keys is not None:
        p = {k: p[k] for k in keys}
    strip = lambda m: {k: v for k, v in m.items() if k != "csv"}   # noqa: E731
    return digest_of({"w": strip(cfg.measure_w), "v": strip(cfg.measure_v), "params": p})


def _cache_root(cfg: RunConfig) -> Path | None:
    root = cfg.cache_dir or os.environ.get(CACHE_ENV)
    if not root:
        return None
    root = Path(root)
    try:
        root.mkdir(parents=True, exist_ok=True)
        probe = root / ".probe"
        probe.write_text("")
        probe.unlink()
    except OSError as e:
        raise CacheError(f"cache directory {root} not writable: {e}") from None
    return root


def _spectrum_to_npz(spec: Spectrum, path: Path) -> None:
    meta = {"bc": spec.bc, "count": spec.count_requested,
            "lambda_max": spec.lambda_max_scanned, "digest": spec.measure_digest,
            "diagnostics": spec.diagnostics}
    tmp = path.with_suffix(".tmp.npz")
    np.savez(tmp, lam=spec.eigenvalues, mult=spec.multiplicities,
             a=np.array([p.a for p in spec.pairs]), b=np.array([p.b for p in spec.pairs]),
             res=np.array([p.secular_residual for p in spec.pairs]), vec=spec.vectors(),
             meta=np.array(json.dumps(meta, default=float)))
    os.replace(tmp, path)


def _spectrum_from_npz(path: Path) -> Spectrum:
    with np.load(path) as z:
        meta = json.loads(str(z["meta"]))
        pairs = [EigenPair(float(l), float(a), float(b), z["vec"][:, i].copy(), int(m),
                           float(r), meta["bc"])
                 for i, (l, m, a, b, r) in enumerate(zip(z["lam"], z["mult"], z["a"], z["b"],
                                                         z["res"]))]
    return Spectrum(meta["bc"], pairs, meta["count"], meta["lambda_max"],
                    meta["diagnostics"], meta["digest"])


# ------------------------------------------------------------------ pipeline

class Pipeline:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.p = cfg.params
        self.out = Path(cfg.output_dir)
        self.cache = _cache_root(cfg)
        self._W = self._V = None

    def _measure(self, ref: dict) -> AtomicMeasure:
        if "csv" in ref:
            return read_csv(ref["csv"])
        return compile_measure(MeasureSpec.from_dict(ref["spec"]), self.p.resolution)

    @property
    def W(self) -> AtomicMeasure:
        if self._W is None:
            self._W = self._measure(self.cfg.measure_w)
        return self._W

    @property
    def V(self) -> AtomicMeasure:
        if self._V is None:
            self._V = self._measure(self.cfg.measure_v)
        return self._V

    def table(self, K: int | None = None):
        return diagonal_tables(self.W, self.V, K or self.p.K)

    def spectrum(self, bc: str | None = None, count: int | None = None) -> Spectrum:
        bc = bc or self.p.bc
        count = count or self.p.count
        cfg = replace(self.cfg, params=replace(self.p, bc=bc, count=count))
        key = cache_key(cfg, SPECTRUM_KEYS)
        if self.cache is None:
            return solve_spectrum(self.table(1), bc, count)
        path = self.cache / f"spectrum-{key}.npz"
        try:
            with FileLock(str(path) + ".lock", timeout=600):
                if path.exists():
                    log.info("cache hit %s", path.name)
                    return _spectrum_from_npz(path)
                log.info("cache miss %s", path.name)
                spec = solve_spectrum(self.table(1), bc, count)
                _spectrum_to_npz(spec, path)
                return spec
        except Timeout:
            raise CacheError(f"timed out waiting for lock on {path}") from None
        except OSError as e:
            raise CacheError(f"cache I/O failed: {e}") from None

    def write(self, name: str, payload) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        path = self.out / name
        if isinstance(payload, (dict, list)):
            path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")
        else:
            path.write_text(payload)
        return path


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serialisable: {type(x)}")


def _finite(x):
    return x if x is None or math.isfinite(x) else str(x)


# ----------------------------------------------------------------- commands

def cmd_measure_compile(pl: Pipeline) -> int:
    pl.out.mkdir(parents=True, exist_ok=True)
    write_csv(pl.W, pl.out / "measure_w.csv")
    write_csv(pl.V, pl.out / "measure_v.csv")
    pl.write("measures.json", {"w": {"atoms": pl.W.n, "total_mass": pl.W.total_mass},
                               "v": {"atoms": pl.V.n, "total_mass": pl.V.total_mass}})
    return EXIT_OK


def cmd_kernels(pl: Pipeline) -> int:
    t = pl.table()
    pl.out.mkdir(parents=True, exist_ok=True)
    t.to_csv(pl.out / "kernels.csv")
    pl.write("kernels.json", {"order": t.order, "termination_order": t.termination_order(),
                              "F2_total": t.F2_total, "G2_total": t.G2_total,
                              "secular_coefficients": secular_coefficients(t).tolist()})
    return EXIT_OK


def cmd_trig(pl: Pipeline) -> int:
    t = pl.table()
    ev = gentrig.EventList.build(pl.W, pl.V)
    rows = ["alpha,x,c_wv,s_wv,c_vw,s_vw,err_bound,method,pythagorean_residual"]
    for a in pl.p.alphas:
        for x in pl.p.xs:
            r = gentrig.trig_eval(t, float(a), float(x), events=ev)
            pyth = abs(r.c_wv * r.c_vw + r.s_wv * r.s_vw - 1.0)
            rows.append(",".join(repr(float(v)) for v in r.as_row()) + f",{r.method},{pyth!r}")
    pl.write("trig.csv", "\n".join(rows) + "\n")
    return EXIT_OK


def _growth_or_none(coeffs, lam):
    try:
        return growth_exponent(coeffs, lam if lam.size >= 3 else None)
    except SpectrumError:
        return None


def cmd_spectrum(pl: Pipeline) -> int:
    spec = pl.spectrum()
    g = _growth_or_none(secular_coefficients(pl.table()), spec.nonzero())
    pl.out.mkdir(parents=True, exist_ok=True)
    spec.write_json(pl.out / "spectrum.json", g)
    spec.write_csv(pl.out / "spectrum.csv")
    return EXIT_OK


def _trace_payload(pl: Pipeline) -> dict:
    k = dirichlet.BridgeKernel(pl.W)
    spec = pl.spectrum("dirichlet")
    rep = dirichlet.trace_report(k, pl.V, spec.eigenvalues)
    try:
        ts = tail_sum(spec, 1.0)
        rep["remainder_estimate"] = _finite(ts.remainder)
        rep["partial_plus_remainder"] = _finite(ts.total)
    except SpectrumError:
        # too few eigenvalues to fit a growth law
        rep["remainder_estimate"] = rep["partial_plus_remainder"] = None
    rep["eigenvalues_used"] = len(spec.pairs)
    return rep


def cmd_dirichlet_trace(pl: Pipeline) -> int:
    pl.write("trace.json", _trace_payload(pl))
    return EXIT_OK


def _oracle_payload(pl: Pipeline, bc: str) -> dict:
    op = oracle.assemble_cycle(pl.W, pl.V, bc)
    lam, F = oracle.dense_spectrum(op)
    ev = gentrig.EventList.build(pl.W, pl.V)
    from .spectrum import effective_sites
    n_d, n_p = effective_sites(ev)
    spec = pl.spectrum(bc, n_p if bc == "periodic" else n_d)
    rep = oracle.compare_spectra(spec.eigenvalues, lam, spec.vectors(), op.embed(F), pl.V.masses)
    rep["bc"] = bc
    return rep


def cmd_oracle_compare(pl: Pipeline) -> int:
    pl.write("oracle.json", _oracle_payload(pl, pl.p.bc))
    return EXIT_OK


def cmd_field_sample(pl: Pipeline, threads: int = 1) -> int:
    spec = pl.spectrum(count=max(pl.p.count, pl.p.modes))
    cfg = fields.FieldConfig(pl.p.kappa, pl.p.beta, pl.p.modes, pl.p.M, pl.p.seed)
    fs = fields.sample_whittle_matern(spec, cfg, threads=threads)
    pl.out.mkdir(parents=True, exist_ok=True)
    if pl.p.format == "binary":
        fields.write_ensemble_binary(pl.out / "field.bin", fs.values)
    else:
        fields.write_ensemble_csv(pl.out / "field.csv", fs.values, pl.V.positions)
    pl.write("field.json", {"mode_weights": fs.mode_weights.tolist(), "seed": fs.seed,
                            "validity_flag": fs.validity_flag, "rho_hat": fs.rho_hat,
                            "tail_mass": _finite(fs.tail_mass)})
    return EXIT_OK


def cmd_spde_evolve(pl: Pipeline) -> int:
    spec = pl.spectrum(count=max(pl.p.count, pl.p.modes))
    ens = fields.evolve_parabolic(spec, pl.p.alpha, pl.p.beta, pl.p.T, pl.p.dt, pl.p.modes,
                                  pl.p.seed, n_paths=pl.p.paths)
    rows = ["path,time,mode,lambda,value"]
    for n in range(ens.paths.shape[0]):
        for s, tm in enumerate(ens.times.tolist()):
            rows.extend(f"{n},{tm!r},{i},{float(ens.lambdas[i])!r},{float(ens.paths[n, s, i])!r}"
                        for i in range(ens.lambdas.size))
    pl.write("spde.csv", "\n".join(rows) + "\n")
    fin = ens.paths[:, -1, :]
    pl.write("spde.json", {"stationary_variance": fields.ou_stationary_variance(pl.p.alpha, pl.p.beta),
                           "final_variance": fin.var(axis=0).tolist(),
                           "lambdas": ens.lambdas.tolist()})
    return EXIT_OK


def run_validate(pl: Pipeline) -> dict:
    """Identity suite at the configured tolerance; returns the report."""
    p = pl.p
    checks = {}
    t = pl.table()
    ev = gentrig.EventList.build(pl.W, pl.V)
    rng = np.random.default_rng(p.seed)
    worst, allowed = 0.0, True
    for a, x in zip(rng.uniform(0, 20, 20), rng.uniform(0, 1, 20)):
        r = gentrig.trig_eval(t, float(a), float(x), events=ev)
        res = abs(r.c_wv * r.c_vw + r.s_wv * r.s_vw - 1.0)
        worst = max(worst, res)
        allowed &= res <= max(2.0 * r.err_bound, p.tol)
    checks["pythagorean"] = {"pass": bool(allowed), "max_residual": worst}
    parts = gentrig.derivative_relation_residual(t, pl.W, pl.V, 3.0)
    scale = max(1.0, t.w_total, t.v_total) * 3.0
    checks["derivative_relations"] = {"pass": parts <= max(p.tol, 1e3 * gentrig.EPS) * scale ** 2,
                                      "max_residual": parts}
    tr = _trace_payload(pl)
    if pl.V.n <= 200:
        # the full Dirichlet spectrum is available: the identity is exact
        try:
            lam, _ = oracle.dense_spectrum(oracle.assemble_cycle(pl.W, pl.V, "dirichlet"))
            route = "oracle"
        except oracle.OracleError:
            from .spectrum import effective_sites
            n_d, _ = effective_sites(ev)
            lam = pl.spectrum("dirichlet", n_d).eigenvalues
            route = "series"
        exact = dirichlet.trace_report(dirichlet.BridgeKernel(pl.W), pl.V, lam)
        checks["trace"] = {"pass": exact["relative_gap"] <= max(p.tol, 1e-10), "route": route,
                           **exact}
    else:
        tot = tr["partial_plus_remainder"]
        gap = abs(tot - tr["trace_integral"]) / tr["trace_integral"] if isinstance(tot, float) else math.inf
        checks["trace"] = {**tr, "pass": gap <= 0.01, "total_gap": gap}
    if pl.V.n <= 200:
        for bc in ("periodic", "dirichlet"):
            try:
                rep = _oracle_payload(pl, bc)
            except oracle.OracleError as e:
                # the finite model is undefined for these measures (zero-mass gap)
                checks[f"oracle_{bc}"] = {"pass": True, "skipped": str(e)}
                continue
            ok = rep["count_series"] == rep["count_oracle"] and rep["max_rel_gap"] <= max(p.tol, 1e-8)
            ok = ok and (rep["min_cosine"] is None or rep["min_cosine"] >= 0.999)
            checks[f"oracle_{bc}"] = {"pass": bool(ok), **rep}
    return {"checks": checks, "pass": all(c["pass"] for c in checks.values())}


def cmd_validate(pl: Pipeline) -> int:
    rep = run_validate(pl)
    pl.write("validate.json", rep)
    for name, c in rep["checks"].items():
        print(f"{'SKIP' if 'skipped' in c else 'PASS' if c['pass'] else 'FAIL'} {name}")
    return EXIT_OK if rep["pass"] else EXIT_FAIL


def cmd_report(pl: Pipeline) -> int:
    spec = pl.spectrum()
    t = pl.table()
    lam = spec.nonzero()
    g = _growth_or_none(secular_coefficients(t), lam)
    n = np.arange(1, lam.size + 1)
    rows = ["n,lambda,log_n,log_lambda,fitted_lower_bound"]
    C, rho = (g.fit_constant, g.rho_fit) if g else (None, None)
    for k, l in zip(n.tolist(), lam.tolist()):
        lb = C * k ** (1.0 / rho) if C and rho else float("nan")
        rows.append(f"{k},{l!r},{math.log(k)!r},{math.log(l)!r},{lb!r}")
    pl.write("report_growth.csv", "\n".join(rows) + "\n")
    pl.write("report.json", {"bc": spec.bc, "eigenvalues": spec.eigenvalues.tolist(),
                             "rho_fit": rho, "rho_coeff": g.rho_coeff if g else None, "fit_constant": C,
                             "measure_digest": spec.measure_digest,
                             "w_atoms": pl.W.n, "v_atoms": pl.V.n})
    return EXIT_OK


def dispatch(cfg: RunConfig) -> int:
    pl = Pipeline(cfg)
    handlers = {"measure-compile": cmd_measure_compile, "kernels": cmd_kernels,
                "trig": cmd_trig, "spectrum": cmd_spectrum,
                "dirichlet-trace": cmd_dirichlet_trace, "oracle-compare": cmd_oracle_compare,
                "field-sample": lambda p: cmd_field_sample(p, cfg.threads),
                "spde-evolve": cmd_spde_evolve, "validate": cmd_validate, "report": cmd_report}
    return handlers[cfg.command](pl)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="kreinfeller", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("config", help="JSON run configuration")
    ap.add_argument("--seed", type=int, help="override the config seed")
    ap.add_argument("--tol", type=float, help="override the config tolerance")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for sampling")
    ap.add_argument("--output-dir", help="override the config output_dir")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = parse_config(args.config, args.command)
        over = {}
        if args.seed is not None:
            over["seed"] = args.seed
        if args.tol is not None:
            over["tol"] = args.tol
        cfg = replace(cfg, params=replace(cfg.params, **over), threads=max(1, args.threads))
        if over:
            _check_params(cfg.params)
        if args.output_dir:
            cfg = replace(cfg, output_dir=str(Path(args.output_dir).resolve()))
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return dispatch(cfg)
    except CacheError as e:
        print(f"cache error: {e}", file=sys.stderr)
        return EXIT_CACHE
    except NUMERIC_ERRORS as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
