"""Finite atomic measures on the torus [0, 1) and their Stieltjes calculus.

A measure is stored as sorted atom positions with positive masses plus a
chirality flag. ``right_continuous`` measures play the role of W (cadlag
distribution function, integrals over half-open ``(a, b]``), while
``left_continuous`` measures play the role of V (caglad, ``[a, b)``).
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

RIGHT = "right_continuous"
LEFT = "left_continuous"
CHIRALITIES = (RIGHT, LEFT)

CLOSURES = ("left_open_right_closed", "left_closed_right_open", "closed", "open")

COMPONENT_KEYS = {
    "uniform": {"kind", "mass"},
    "piecewise_linear": {"kind", "breakpoints", "slopes"},
    "atoms": {"kind", "atoms"},
    "ifs_self_similar": {"kind", "ratios", "weights", "depth", "offsets", "mass"},
}


class MeasureError(ValueError):
    """Invalid measure specification or misuse of a measure operation."""


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def digest_of(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]


def compensated_cumsum(values) -> np.ndarray:
    """Inclusive running sums with Neumaier compensation, in input order."""
    vals = np.asarray(values, dtype=float)
    out = np.empty_like(vals)
    s = 0.0
    comp = 0.0
    for i, v in enumerate(vals.tolist()):
        t = s + v
        if abs(s) >= abs(v):
            comp += (s - t) + v
        else:
            comp += (v - t) + s
        s = t
        out[i] = s + comp
    return out


@dataclass(frozen=True)
class MeasureSpec:
    components: list
    chirality: str = RIGHT
    label: str = ""

    def to_dict(self) -> dict:
        return {"components": self.components, "chirality": self.chirality, "label": self.label}

    @classmethod
    def from_dict(cls, d: dict) -> "MeasureSpec":
        unknown = set(d) - {"components", "chirality", "label"}
        if unknown:
            raise MeasureError(f"unknown measure key(s): {sorted(unknown)}")
        if "components" not in d:
            raise MeasureError("measure spec needs 'components'")
        spec = cls(list(d["components"]), d.get("chirality", RIGHT), d.get("label", ""))
        spec.validate()
        return spec

    @classmethod
    def from_json(cls, text: str) -> "MeasureSpec":
        return cls.from_dict(json.loads(text))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def digest(self) -> str:
        return digest_of(self.to_dict())

    def validate(self) -> None:
        if self.chirality not in CHIRALITIES:
            raise MeasureError(f"chirality must be one of {CHIRALITIES}, got {self.chirality!r}")
        if not self.components:
            raise MeasureError("measure spec has no components")
        seen_atoms: set[float] = set()
        for comp in self.components:
            kind = comp.get("kind")
            if kind not in COMPONENT_KEYS:
                raise MeasureError(f"unknown component kind {kind!r}")
            extra = set(comp) - COMPONENT_KEYS[kind]
            if extra:
                raise MeasureError(f"unknown key(s) {sorted(extra)} in {kind} component")
            if kind == "uniform":
                _positive(comp.get("mass", 1.0), "uniform mass")
            elif kind == "piecewise_linear":
                _check_piecewise(comp)
            elif kind == "atoms":
                if not comp["atoms"]:
                    raise MeasureError("atoms component lists no atoms (zero total mass)")
                for pos, mass in comp["atoms"]:
                    if not 0.0 <= pos < 1.0:
                        raise MeasureError(f"atom position {pos} outside [0, 1)")
                    _positive(mass, "atom mass")
                    if pos in seen_atoms:
                        raise MeasureError(f"duplicate declared atom at {pos}")
                    seen_atoms.add(pos)
                    if pos == 0.0 and self.chirality == RIGHT:
                        raise MeasureError(
                            "a right-continuous measure cannot carry an atom at 0 "
                            "(W(0)=0); put it just below 1 instead")
            else:
                _check_ifs(comp)


def _positive(x, what):
    if not (isinstance(x, (int, float)) and math.isfinite(x) and x > 0):
        raise MeasureError(f"{what} must be a finite positive number, got {x!r}")


def _check_piecewise(comp):
    bps = comp["breakpoints"]
    slopes = comp["slopes"]
    if len(bps) != len(slopes) + 1 or len(slopes) == 0:
        raise MeasureError("piecewise_linear needs len(breakpoints) == len(slopes) + 1")
    if bps[0] < 0.0 or bps[-1] > 1.0:
        raise MeasureError("piecewise_linear breakpoints must lie in [0, 1]")
    if any(b >= a for a, b in zip(bps[1:], bps[:-1])):
        raise MeasureError("piecewise_linear breakpoints must be strictly increasing")
    for s in slopes:
        _positive(s, "piecewise_linear slope")


def _check_ifs(comp):
    ratios = comp["ratios"]
    weights = comp["weights"]
    if len(ratios) != len(weights) or not ratios:
        raise MeasureError("ifs_self_similar needs matching ratios and weights")
    for r in ratios:
        if not 0.0 < r < 1.0:
            raise MeasureError(f"IFS contraction ratio {r} not in (0, 1)")
    for w in weights:
        _positive(w, "IFS weight")
    if not (isinstance(comp["depth"], int) and comp["depth"] >= 0):
        raise MeasureError("IFS depth must be a nonnegative integer")
    offsets = _ifs_offsets(comp)
    for r, b in zip(ratios, offsets):
        if b < 0.0 or b + r > 1.0 + 1e-15:
            raise MeasureError("IFS maps must send [0, 1] into itself")
    _positive(comp.get("mass", 1.0), "IFS mass")


def _ifs_offsets(comp):
    ratios = comp["ratios"]
    if "offsets" in comp:
        if len(comp["offsets"]) != len(ratios):
            raise MeasureError("IFS offsets must match ratios")
        return list(comp["offsets"])
    # first map pinned at 0, last at 1, equal gaps in between
    gap = (1.0 - sum(ratios)) / max(len(ratios) - 1, 1)
    if gap < 0:
        raise MeasureError("IFS images overlap; give explicit offsets")
    out, b = [], 0.0
    for r in ratios:
        out.append(b)
        b += r + gap
    return out


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    positions: np.ndarray
    masses: np.ndarray
    chirality: str
    resolution: int = 1
    origin_spec_digest: str = ""
    _cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        mass = np.asarray(self.masses, dtype=float)
        if pos.ndim != 1 or pos.shape != mass.shape:
            raise MeasureError("positions and masses must be 1-d arrays of equal length")
        if pos.size == 0:
            raise MeasureError("empty measure")
        if np.any(np.diff(pos) <= 0):
            raise MeasureError("atom positions must be strictly increasing")
        if pos[0] < 0.0 or pos[-1] >= 1.0:
            raise MeasureError("atom positions must lie in [0, 1)")
        if np.any(mass <= 0) or not np.all(np.isfinite(mass)):
            raise MeasureError("atom masses must be finite and positive")
        if self.chirality not in CHIRALITIES:
            raise MeasureError(f"bad chirality {self.chirality!r}")
        if self.chirality == RIGHT and pos[0] == 0.0:
            raise MeasureError("right-continuous measure with an atom at 0 violates W(0)=0")
        pos.setflags(write=False)
        mass.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "masses", mass)
        cum = np.concatenate([[0.0], compensated_cumsum(mass)])
        cum.setflags(write=False)
        object.__setattr__(self, "_cum", cum)

    @property
    def n(self) -> int:
        return int(self.positions.size)

    @property
    def total_mass(self) -> float:
        return math.fsum(self.masses.tolist())

    @property
    def is_right(self) -> bool:
        return self.chirality == RIGHT

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.chirality.encode())
        h.update(self.positions.tobytes())
        h.update(self.masses.tobytes())
        return h.hexdigest()[:16]


def from_atoms(positions, masses, chirality=RIGHT) -> AtomicMeasure:
    """Build an atomic measure directly, merging repeated positions."""
    pos = np.asarray(positions, dtype=float)
    mass = np.asarray(masses, dtype=float)
    order = np.argsort(pos, kind="stable")
    pos, mass = pos[order], mass[order]
    upos, inv = np.unique(pos, return_inverse=True)
    merged = np.zeros(upos.size)
    np.add.at(merged, inv, mass)
    return AtomicMeasure(upos, merged, chirality)


def _continuous_atoms(cdf_inv, total, resolution):
    q = (np.arange(resolution) + 0.5) / resolution
    return cdf_inv(q), np.full(resolution, total / resolution)


def _piecewise_inverse(bps, slopes):
    bps = np.asarray(bps, float)
    slopes = np.asarray(slopes, float)
    seg_mass = slopes * np.diff(bps)
    cum = np.concatenate([[0.0], np.cumsum(seg_mass)])
    total = cum[-1]

    def inv(q):
        target = q * total
        k = np.clip(np.searchsorted(cum, target, side="right") - 1, 0, slopes.size - 1)
        return bps[k] + (target - cum[k]) / slopes[k]

    return inv, total


def _ifs_atoms(comp):
    ratios = np.asarray(comp["ratios"], float)
    weights = np.asarray(comp["weights"], float)
    weights = weights / weights.sum()
    offsets = np.asarray(_ifs_offsets(comp), float)
    lo = np.array([0.0])
    width = np.array([1.0])
    prob = np.array([1.0])
    for _ in range(comp["depth"]):
        # word w.i maps [0,1] through f_w o f_i, so the new letter acts innermost
        lo = (lo[:, None] + width[:, None] * offsets[None, :]).ravel()
        width = (width[:, None] * ratios[None, :]).ravel()
        prob = (prob[:, None] * weights[None, :]).ravel()
    return lo + 0.5 * width, prob * comp.get("mass", 1.0)


def compile_measure(spec: MeasureSpec, resolution: int) -> AtomicMeasure:
    """Bin a declarative spec into an exact atomic measure."""
    spec.validate()
    if not (isinstance(resolution, (int, np.integer)) and resolution >= 1):
        raise MeasureError("resolution must be a positive integer")
    pos_parts, mass_parts = [], []
    for comp in spec.components:
        kind = comp["kind"]
        if kind == "uniform":
            total = comp.get("mass", 1.0)
            p, m = _continuous_atoms(lambda q: q, total, resolution)
        elif kind == "piecewise_linear":
            inv, total = _piecewise_inverse(comp["breakpoints"], comp["slopes"])
            p, m = _continuous_atoms(inv, total, resolution)
        elif kind == "atoms":
            p = np.array([a[0] for a in comp["atoms"]], float)
            m = np.array([a[1] for a in comp["atoms"]], float)
        else:
            p, m = _ifs_atoms(comp)
        pos_parts.append(p)
        mass_parts.append(m)
    pos = np.concatenate(pos_parts)
    mass = np.concatenate(mass_parts)
    if not mass.sum() > 0:
        raise MeasureError("measure has zero total mass")
    merged = from_atoms(pos, mass, spec.chirality)
    return AtomicMeasure(merged.positions, merged.masses, spec.chirality,
                         int(resolution), spec.digest())


def evaluate(m: AtomicMeasure, x, side: str = "value"):
    """Cumulative value (or the opposite one-sided limit) at x in [0, 1]."""
    if side not in ("value", "opposite_limit"):
        raise MeasureError(f"side must be 'value' or 'opposite_limit', got {side!r}")
    inclusive = m.is_right == (side == "value")
    idx = np.searchsorted(m.positions, x, side="right" if inclusive else "left")
    out = m._cum[idx]
    return float(out) if np.ndim(out) == 0 else out


def _mask(m: AtomicMeasure, a: float, b: float, closure: str) -> np.ndarray:
    if closure not in CLOSURES:
        raise MeasureError(f"closure must be one of {CLOSURES}")
    if a > b:
        raise MeasureError(f"empty interval: a={a} > b={b}")
    p = m.positions
    left = p >= a if closure in ("left_closed_right_open", "closed") else p > a
    right = p <= b if closure in ("left_open_right_closed", "closed") else p < b
    return left & right


def interval_mass(m: AtomicMeasure, a: float, b: float,
                  closure: str = "left_open_right_closed") -> float:
    return math.fsum(m.masses[_mask(m, a, b, closure)].tolist())


def stieltjes_sum(f, m: AtomicMeasure, a: float = 0.0, b: float = 1.0,
                  closure: str | None = None) -> float:
    """Sum of f(u_k) m_k over atoms in the interval.

    ``f`` holds one value per atom of ``m``. The default closure follows the
    chirality: ``(a, b]`` for W and ``[a, b)`` for V.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != m.masses.shape:
        raise MeasureError(f"f has {f.size} values but the measure has {m.n} atoms")
    if closure is None:
        closure = "left_open_right_closed" if m.is_right else "left_closed_right_open"
    sel = _mask(m, a, b, closure)
    return math.fsum((f[sel] * m.masses[sel]).tolist())


def discrete_derivative(f, m: AtomicMeasure, boundary: float | None = None) -> np.ndarray:
    """One-sided difference quotient of a step function adapted to ``m``.

    W (right-continuous): (f(u_k) - f(u_{k-1})) / m_k, where f(u_0) is
    ``boundary`` if given, else the periodic wrap f(u_N).
    V (left-continuous): (f(u_{k+1}) - f(u_k)) / m_k, where f(u_{N+1}) is
    ``boundary`` if given, else f(u_1).
    """
    f = np.asarray(f, dtype=float)
    if m.n < 2 and boundary is None:
        raise MeasureError("discrete derivative needs at least 2 atoms")
    if f.shape != m.masses.shape:
        raise MeasureError("f must have one value per atom")
    if m.is_right:
        prev = np.concatenate([[f[-1] if boundary is None else boundary], f[:-1]])
        return (f - prev) / m.masses
    nxt = np.concatenate([f[1:], [f[0] if boundary is None else boundary]])
    return (nxt - f) / m.masses


def write_csv(m: AtomicMeasure, path) -> None:
    lines = [f"# chirality={m.chirality} resolution={m.resolution} "
             f"digest={m.origin_spec_digest or m.digest()}", "position,mass"]
    lines += [f"{p!r},{w!r}" for p, w in zip(m.positions.tolist(), m.masses.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path) -> AtomicMeasure:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("#"):
        raise MeasureError("atomic measure CSV must start with a '#' header line")
    meta = dict(tok.split("=", 1) for tok in text[0][1:].split())
    rows = [ln.split(",") for ln in text[2:] if ln.strip()]
    pos = [float(r[0]) for r in rows]
    mass = [float(r[1]) for r in rows]
    return AtomicMeasure(np.array(pos), np.array(mass), meta["chirality"],
                         int(meta.get("resolution", 1)), meta.get("digest", ""))


def uniform_spec(chirality: str = RIGHT, mass: float = 1.0) -> MeasureSpec:
    return MeasureSpec([{"kind": "uniform", "mass": mass}], chirality, "uniform")


def cantor_spec(depth: int, chirality: str = RIGHT) -> MeasureSpec:
    comp = {"kind": "ifs_self_similar", "ratios": [1 / 3, 1 / 3],
            "weights": [0.5, 0.5], "depth": depth}
    return MeasureSpec([comp], chirality, f"cantor-{depth}")
