import csv
import json
import os

import numpy as np
import pytest

from hcrom import cli
from hcrom.config import PRESETS, load_config, parse_config, preset_text, sampling_spec
from hcrom.errors import ConfigError
from hcrom.mesh import make_partition


def _run(*argv):
    return cli.main([str(a) for a in argv])


def _read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_defaults_and_presets_validate():
    cfg = load_config()
    assert cfg["geometry"] == "lipschitz4" and cfg["cells_per_side"] == 80
    for name in PRESETS:
        c = load_config(preset=name)
        assert c["version"] == 1
        json.loads(preset_text(name))
    with pytest.raises(ConfigError, match="unknown preset"):
        preset_text("fig99")


def test_schema_error_reports_line():
    text = '{\n  "version": 1,\n  "geometry": "lipschitz4",\n  "n_max": 0\n}\n'
    with pytest.raises(ConfigError) as info:
        parse_config(text, "exp.json")
    assert "exp.json:4:" in str(info.value) and "n_max" in str(info.value)


def test_nested_error_reports_line():
    text = '{\n  "version": 1,\n  "training": {\n    "kind": "grid",\n    "T": -3\n  }\n}\n'
    with pytest.raises(ConfigError) as info:
        parse_config(text, "exp.json")
    assert "exp.json:5:" in str(info.value)


def test_json_syntax_error_reports_line():
    with pytest.raises(ConfigError) as info:
        parse_config('{\n  "version": 1,\n  "seed": 1,\n}\n', "bad.json")
    assert "bad.json:4:" in str(info.value)


@pytest.mark.parametrize("text", [
    '{"version": 2}',
    '{"version": 1, "strategies": []}',
    '{"version": 1, "strategies": ["greedy"]}',
    '{"version": 1, "unknown_key": 3}',
    '{"version": 1, "cells_per_side": 10}',
    '[1, 2]',
])
def test_schema_rejects(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_sampling_blocks_replaced_whole():
    cfg = parse_config('{"version": 1, "training": {"kind": "random", "n": 5}}')
    assert cfg["training"] == {"kind": "random", "n": 5}
    spec = sampling_spec(cfg, "training", 4, make_partition("lipschitz4"))
    assert spec["active"] == [0] and spec["seed"] == 0 and spec["d"] == 4
    cfg = parse_config('{"version": 1, "active": ["B", "D"]}')
    assert sampling_spec(cfg, "test", 4, make_partition("lipschitz4"))["active"] == [1, 3]


def test_bad_axis_name():
    cfg = parse_config('{"version": 1, "active": ["Z"]}')
    with pytest.raises(ConfigError):
        sampling_spec(cfg, "training", 4, make_partition("lipschitz4"))


def test_cli_solve_and_homogeneity(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run("solve", "--cells-per-side", 16, "--out", a, "--y", "1,2,inf,4") == 0
    assert _run("solve", "--cells-per-side", 16, "--out", b, "--y", "2,4,inf,8") == 0
    ua = np.loadtxt(a / "u.txt")
    ub = np.loadtxt(b / "u.txt")
    assert np.allclose(ub, ua / 2, rtol=1e-12, atol=1e-16)
    rows = {r["quantity"]: float(r["value"]) for r in _read(a / "norms.csv")}
    assert rows["c_f"] <= rows["h10_norm"] <= rows["y_norm"] * (1 + 1e-12)
    assert np.isclose(rows["y_norm"] ** 2, rows["load_times_u"], rtol=1e-10)
    assert (a / "u.svg").read_text().lstrip().startswith("<?xml")


def test_cli_config_errors_exit_2(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{\n  "version": 1,\n  "strategies": []\n}\n')
    assert _run("study", "--config", cfg, "--out", tmp_path) == 2
    assert "c.json:3:" in capsys.readouterr().err
    assert _run("solve", "--config", tmp_path / "missing.json", "--out", tmp_path) == 2
    assert _run("solve", "--cells-per-side", 10, "--out", tmp_path) == 2
    assert _run("solve", "--cells-per-side", 16, "--out", tmp_path, "--y", "1,2") == 2
    # reconstruction without an archive names the subcommand that builds one
    assert _run("pbdw", "--preset", "pbdw", "--cells-per-side", 16, "--out", tmp_path / "empty") == 2
    assert "basis" in capsys.readouterr().err


def test_cli_numerical_error_exit_3(tmp_path, capsys):
    out = tmp_path / "o"
    assert _run("basis", "--preset", "pbdw", "--cells-per-side", 16, "--out", out) == 0
    cfg = json.loads(preset_text("pbdw"))
    cfg["sensors"] = {"centers": [[0.1, 0.1], [0.1, 0.1]], "side": 0.25}
    path = tmp_path / "dup.json"
    path.write_text(json.dumps(cfg))
    assert _run("pbdw", "--config", path, "--cells-per-side", 16, "--out", out, "--y", "1,1,1,1") == 3
    assert "dependent" in capsys.readouterr().err


def test_cli_surrogate_guard_exit_2(tmp_path):
    path = tmp_path / "big.json"
    path.write_text(json.dumps({"version": 1, "geometry": "grid16", "active": list(range(16)), "k": [2],
                                "test": {"kind": "random", "n": 2}}))
    assert _run("surrogate", "--config", path, "--cells-per-side", 16, "--out", tmp_path) == 2


def _csv_bytes(out):
    return {f: (out / f).read_bytes() for f in sorted(os.listdir(out)) if f.endswith(".csv")}


@pytest.mark.parametrize("preset,command", [("fig5", "study"), ("fig6", "study"),
                                            ("surrogate", "surrogate")])
def test_presets_deterministic(tmp_path, preset, command):
    outs = []
    for run in ("r1", "r2"):
        out = tmp_path / run
        assert _run(command, "--preset", preset, "--cells-per-side", 16, "--out", out) == 0
        outs.append(_csv_bytes(out))
        assert any(f.endswith(".svg") for f in os.listdir(out))
    assert outs[0] and outs[0] == outs[1]


@pytest.mark.slow
def test_sweep_preset(tmp_path):
    out = tmp_path / "s"
    assert _run("study", "--preset", "fig7", "--cells-per-side", 16, "--out", out) == 0
    fits = _read(out / "sweep_fit.csv")
    assert {r["geometry"] for r in fits} == {"lipschitz4", "latin4"}
    for geo in ("lipschitz4", "latin4"):
        c = [float(r["decay_constant"]) for r in fits if r["geometry"] == geo]
        assert all(a > b for a, b in zip(c, c[1:]))


def test_pbdw_and_estimate_presets(tmp_path):
    out = tmp_path / "p"
    for run in ("r1", "r2"):
        o = out / run
        assert _run("basis", "--preset", "pbdw", "--cells-per-side", 16, "--out", o) == 0
        assert _run("pbdw", "--preset", "pbdw", "--cells-per-side", 16, "--out", o) == 0
        assert _run("estimate", "--preset", "pbdw", "--cells-per-side", 16, "--out", o) == 0
    assert _csv_bytes(out / "r1") == _csv_bytes(out / "r2")
    rows = _read(out / "r1" / "pbdw.csv")
    assert len(rows) == 20
    for r in rows:
        assert float(r["max_data_misfit"]) <= 1e-10
        assert float(r["rel_err_u_star"]) <= float(r["mu_n"]) * float(r["rel_dist_Vn"]) * (1 + 1e-8) + 1e-12
    sel = _read(out / "r1" / "selection.csv")
    assert len(sel) == 12 and sel[0]["step"] == "1"


def test_measurement_file_roundtrip(tmp_path):
    o = tmp_path / "m"
    assert _run("basis", "--preset", "pbdw", "--cells-per-side", 16, "--out", o) == 0
    assert _run("pbdw", "--preset", "pbdw", "--cells-per-side", 16, "--out", o, "--y", "inf,2,3,1") == 0
    first = np.loadtxt(o / "u_star.txt")
    assert _run("pbdw", "--preset", "pbdw", "--cells-per-side", 16, "--out", o,
                "--measurements", o / "measurements.csv") == 0
    assert np.array_equal(np.loadtxt(o / "u_star.txt"), first)
    # a selected snapshot is recovered exactly, including its infinite entries
    y = next(r["params"] for r in _read(o / "selection.csv") if r["params"].startswith("inf,"))
    assert _run("estimate", "--preset", "pbdw", "--cells-per-side", 16, "--out", o, "--y", y) == 0
    rows = _read(o / "estimate.csv")
    assert [r["subdomain"] for r in rows] == ["A", "B", "C", "D"]
    assert rows[0]["flag"] == "infinite" and rows[0]["y_star"] == "inf"
    assert all(float(r["rel_inverse_err"]) <= 1e-6 for r in rows)


def test_noise_flag(tmp_path):
    o = tmp_path / "n"
    assert _run("basis", "--preset", "pbdw", "--cells-per-side", 16, "--out", o) == 0
    assert _run("pbdw", "--preset", "pbdw", "--cells-per-side", 16, "--out", o, "--y", "1,2,3,4",
                "--noise", 0.01) == 0
    r = _read(o / "pbdw.csv")[0]
    assert float(r["noise"]) == 0.01
    assert float(r["rel_err_u_star"]) > 0
