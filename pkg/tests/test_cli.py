import json
import logging
import os

import pytest

from kreinfeller import cli
from kreinfeller.cli import (COMMANDS, SPECTRUM_KEYS, ConfigError, Params, cache_key, main,
                             parse_config)

UNIFORM = {"components": [{"kind": "uniform"}]}


def write_cfg(tmp_path, name="cfg.json", text=None, **kw):
    cfg = {"measure_w": UNIFORM, "measure_v": UNIFORM, "resolution": 128, "count": 8,
           "K": 6, "M": 50, "modes": 8, "paths": 20, "T": 0.1, "dt": 0.01,
           "output_dir": "out"}
    cfg.update(kw)
    p = tmp_path / name
    p.write_text(text if text is not None else json.dumps(cfg, indent=2))
    return p


def test_minimal_config_defaults(tmp_path):
    p = tmp_path / "min.json"
    p.write_text(json.dumps({"command": "spectrum", "measure_w": UNIFORM, "measure_v": UNIFORM}))
    cfg = parse_config(p)
    assert cfg.command == "spectrum"
    assert cfg.params == Params()
    assert cfg.params.resolution == 1024 and cfg.params.bc == "periodic"
    assert cfg.measure_w["spec"]["chirality"] == "right_continuous"
    assert cfg.measure_v["spec"]["chirality"] == "left_continuous"


def test_unknown_key_reports_line(tmp_path):
    text = '{\n  "command": "spectrum",\n  "measure_w": {"components": [{"kind": "uniform"}]},\n' \
           '  "khappa": 2.0,\n  "measure_v": {"components": [{"kind": "uniform"}]}\n}\n'
    p = write_cfg(tmp_path, text=text)
    with pytest.raises(ConfigError, match=r"'khappa' \(line 4\)"):
        parse_config(p)
    assert main(["spectrum", str(p)]) == 2


@pytest.mark.parametrize("bad", [
    {"measure_w": {"components": [{"kind": "atoms", "atoms": [[0.5, 0.0]]}]}},
    {"measure_w": {"components": [{"kind": "atoms", "atoms": []}]}},
    {"count": 0},
    {"bc": "neumann"},
    {"dt": -1.0},
    {"format": "hdf5"},
    {"measure_v": {"components": [{"kind": "uniform"}], "chirality": "right_continuous"}},
    {"measure_w": "missing.json"},
])
def test_config_errors(tmp_path, bad):
    p = write_cfg(tmp_path, **bad)
    with pytest.raises(ConfigError):
        parse_config(p, "spectrum")
    assert main(["spectrum", str(p)]) == 2


def test_malformed_json(tmp_path):
    p = write_cfg(tmp_path, text='{"measure_w": ,}')
    with pytest.raises(ConfigError, match="line 1"):
        parse_config(p, "spectrum")


def test_measure_from_files(tmp_path):
    atoms = {"components": [{"kind": "atoms", "atoms": [[0.3, 0.5], [0.8, 0.5]]}]}
    (tmp_path / "w.json").write_text(json.dumps(atoms))
    p = write_cfg(tmp_path, measure_w="w.json", measure_v={"components": [
        {"kind": "atoms", "atoms": [[0.1, 0.5], [0.6, 0.5]]}]}, count=2)
    assert main(["spectrum", str(p)]) == 0
    spec = json.loads((tmp_path / "out" / "spectrum.json").read_text())
    assert len(spec["eigenvalues"]) == 2 and spec["eigenvalues"][0] == 0.0


@pytest.mark.parametrize("command", COMMANDS)
def test_every_command_runs(tmp_path, command):
    p = write_cfg(tmp_path)
    assert main([command, str(p)]) == 0
    assert any((tmp_path / "out").iterdir())


def test_spectrum_outputs(tmp_path):
    p = write_cfg(tmp_path)
    assert main(["spectrum", str(p)]) == 0
    out = tmp_path / "out"
    d = json.loads((out / "spectrum.json").read_text())
    assert d["multiplicities"][:3] == [1, 2, 2]
    assert (out / "spectrum.csv").read_text().startswith("index,lambda,multiplicity")


def test_warm_cache_identical_outputs(tmp_path, caplog):
    p = write_cfg(tmp_path, cache_dir="cache")
    caplog.set_level(logging.INFO, logger="kreinfeller")
    assert main(["spectrum", str(p)]) == 0
    first = {f.name: f.read_bytes() for f in (tmp_path / "out").iterdir()}
    assert "cache miss" in caplog.text
    caplog.clear()
    assert main(["spectrum", str(p)]) == 0
    assert "cache hit" in caplog.text
    second = {f.name: f.read_bytes() for f in (tmp_path / "out").iterdir()}
    assert first == second


def test_env_cache_root(tmp_path, monkeypatch, caplog):
    monkeypatch.setenv(cli.CACHE_ENV, str(tmp_path / "envcache"))
    p = write_cfg(tmp_path)
    assert main(["spectrum", str(p)]) == 0
    assert any(f.suffix == ".npz" for f in (tmp_path / "envcache").iterdir())


def test_cache_key_rules(tmp_path):
    a = parse_config(write_cfg(tmp_path, "a.json"), "spectrum")
    b = parse_config(write_cfg(tmp_path, "b.json"), "spectrum")
    assert cache_key(a) == cache_key(b)
    c = parse_config(write_cfg(tmp_path, "c.json", resolution=256), "spectrum")
    assert cache_key(a) != cache_key(c)
    assert cache_key(a, SPECTRUM_KEYS) != cache_key(c, SPECTRUM_KEYS)
    # seed does not enter the spectrum key
    d = parse_config(write_cfg(tmp_path, "d.json", seed=5), "spectrum")
    assert cache_key(a, SPECTRUM_KEYS) == cache_key(d, SPECTRUM_KEYS)
    raw = json.loads((tmp_path / "a.json").read_text())
    rev = {k: raw[k] for k in sorted(raw, reverse=True)}
    e = parse_config(write_cfg(tmp_path, "e.json", text=json.dumps(rev)), "spectrum")
    assert cache_key(a) == cache_key(e)


def test_cache_error_exit(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    p = write_cfg(tmp_path, cache_dir=str(blocker / "sub"))
    assert main(["spectrum", str(p)]) == 4


def test_numeric_error_exit(tmp_path):
    p = write_cfg(tmp_path, measure_v={"components": [{"kind": "atoms", "atoms": [[0.4, 1.0]]}]},
                  count=5)
    assert main(["spectrum", str(p)]) == 3


def test_validate_exit_codes(tmp_path, monkeypatch, capsys):
    p = write_cfg(tmp_path)
    assert main(["validate", str(p)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert {"PASS oracle_periodic", "PASS oracle_dirichlet", "PASS trace"} <= set(lines)
    assert all(l.startswith("PASS ") for l in lines)
    q = write_cfg(tmp_path, "atomic.json",
                  measure_w={"components": [{"kind": "atoms", "atoms": [[0.2, 0.3], [0.5, 0.4], [0.9, 0.3]]}]},
                  measure_v={"components": [{"kind": "atoms", "atoms": [[0.3, 0.6], [0.7, 0.4]]}]},
                  count=2)
    assert main(["validate", str(q)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert {"PASS oracle_periodic", "PASS oracle_dirichlet", "PASS trace"} <= set(lines)
    monkeypatch.setattr(cli.gentrig, "derivative_relation_residual", lambda *a: 1.0)
    assert main(["validate", str(p)]) == 1
    assert "FAIL derivative_relations" in capsys.readouterr().out


def test_field_determinism_across_threads(tmp_path):
    p = write_cfg(tmp_path)
    assert main(["field-sample", str(p), "--threads", "1", "--output-dir", str(tmp_path / "a")]) == 0
    assert main(["field-sample", str(p), "--threads", "3", "--output-dir", str(tmp_path / "b")]) == 0
    for name in ("field.csv", "field.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert main(["field-sample", str(p), "--seed", "7", "--output-dir", str(tmp_path / "c")]) == 0
    assert (tmp_path / "a" / "field.csv").read_bytes() != (tmp_path / "c" / "field.csv").read_bytes()


def test_binary_field_format(tmp_path):
    from kreinfeller.fields import read_ensemble_binary
    p = write_cfg(tmp_path, format="binary")
    assert main(["field-sample", str(p)]) == 0
    vals = read_ensemble_binary(tmp_path / "out" / "field.bin")
    assert vals.shape == (50, 128)


def test_module_entry_point(tmp_path):
    import subprocess
    import sys
    p = write_cfg(tmp_path)
    r = subprocess.run([sys.executable, "-m", "kreinfeller", "measure-compile", str(p)],
                       capture_output=True, text=True, env={**os.environ})
    assert r.returncode == 0, r.stderr
