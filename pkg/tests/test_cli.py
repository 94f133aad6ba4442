import csv
import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from degcontrol.cli import (DEFAULTS, EXIT_CONFIG, EXIT_NUMERIC, ConfigError, ExperimentConfig,
                            fmt, main, parse_config, serialize_config)


def run(tmp_path, sub, cfg, *extra):
    path = tmp_path / f"{sub}.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "out"
    return main([sub, "--config", str(path), "--out", str(out), *extra]), out


def read(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_config_round_trip():
    cfg = parse_config('{"alpha": 0.3, "K": 7}', "spectrum")
    again = parse_config(serialize_config(cfg), "spectrum")
    assert again == cfg
    assert again.resolved()["oracle_mesh"] == DEFAULTS["spectrum"]["oracle_mesh"]


@settings(max_examples=30, deadline=None)
@given(st.floats(min_value=0, max_value=1.99), st.integers(min_value=1, max_value=500))
def test_round_trip_property(alpha, K):
    cfg = ExperimentConfig("gap", {"alpha": alpha, "K": K})
    assert parse_config(serialize_config(cfg), "gap") == cfg


@pytest.mark.parametrize("text,sub", [
    ('{"alpha": 2.5}', "spectrum"),
    ('{"alpha": -0.1}', "gap"),
    ('{"beta_typo": 1}', "gap"),
    ('[1, 2]', "gap"),
    ('{"K": 2.5}', "kalman"),
    ('{"omega": [0.7, 0.3]}', "spectralineq"),
    ('{"J_list": [3, 2]}', "spectralineq"),
    ('{"T": 0}', "control1d"),
    ('{"taper": 3.5}', "control1d"),
    ('{"w0": "mode99"}', "control1d"),
    ('{"rho": 1.0}', "control2d"),
    ('{"alpha": 0.5}', "control2d"),
    ('{"T_list": []}', "costcurve"),
    ('{"A": [[1, 2]]}', "kalman"),
    ('not json', "gap"),
])
def test_invalid_configs_rejected(text, sub):
    with pytest.raises(ConfigError):
        parse_config(text, sub)


def test_fmt():
    assert fmt(True) == "true" and fmt(3) == "3" and fmt(None) == ""
    assert float(fmt(0.1)) == 0.1 and fmt(float("nan")) == "nan"


def test_exit_code_config(tmp_path, capsys):
    code, _ = run(tmp_path, "spectrum", {"alpha": 2.5})
    assert code == EXIT_CONFIG
    assert "alpha" in capsys.readouterr().err
    assert main(["gap", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    assert main(["gap", "--threads", "0", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_exit_code_refusal(tmp_path, capsys):
    code, _ = run(tmp_path, "control1d", {"A": [[0, 0], [0, 0]], "B": [[1], [1]], "K": 3})
    assert code == EXIT_NUMERIC
    assert "refused" in capsys.readouterr().err


def test_spectrum_classical(tmp_path):
    code, out = run(tmp_path, "spectrum", {"alpha": 0.0, "K": 5, "oracle_mesh": 1000})
    assert code == 0
    rows = read(out / "spectrum.csv")
    assert rows[0] == ["k", "zero", "eigenvalue", "obs_trace", "oracle_eigenvalue", "rel_err"]
    for k, r in enumerate(rows[1:], 1):
        assert float(r[2]) == pytest.approx((k * math.pi) ** 2, rel=1e-12)
        assert float(r[5]) < 1e-3


def test_gap_and_kalman(tmp_path):
    code, out = run(tmp_path, "gap", {"alpha": 0.5, "K": 6})
    assert code == 0
    rows = read(out / "gap.csv")
    assert len(rows) == 1 + 15 and all(r[5] == "true" for r in rows[1:])
    code, out = run(tmp_path, "kalman", {"alpha": 0.5, "K": 4, "A": [[0, 1], [0, 0]], "B": [[0], [1]]})
    assert code == 0
    rows = read(out / "kalman.csv")
    assert [r[3] for r in rows[1:]] == ["true"] * 4


def test_control1d_small(tmp_path):
    code, out = run(tmp_path, "control1d", {"alpha": 0.5, "K": 4, "T": 1.0, "w0": "mode1"})
    assert code == 0
    summary = dict(read(out / "control1d_summary.csv")[1:])
    assert float(summary["final_ratio"]) < 1e-3
    rows = read(out / "control1d.csv")
    assert rows[0] == ["t", "h1"] and len(rows) >= 4097


def test_costcurve_monotone(tmp_path):
    code, out = run(tmp_path, "costcurve", {"alpha": 0.5, "K": 3, "T_list": [1.0, 0.5, 0.25]})
    assert code == 0
    norms = [float(r[1]) for r in read(out / "costcurve.csv")[1:]]
    assert norms[0] <= norms[1] <= norms[2]


def test_spectralineq_rows(tmp_path):
    code, out = run(tmp_path, "spectralineq", {"alpha": 0.5, "omega": [0.3, 0.7], "J_list": [2, 4, 6]})
    assert code == 0
    rows = read(out / "spectralineq.csv")
    assert [r[0] for r in rows[1:]] == ["2", "4", "6"]


def test_control2d_zero_state(tmp_path):
    cfg = {"K": 3, "J": 4, "u0": "zero", "K_stop": 2, "samples": 4, "ny": 3}
    code, out = run(tmp_path, "control2d", cfg)
    assert code == 0
    summary = dict(read(out / "control2d_summary.csv")[1:])
    assert float(summary["final_ratio"]) == 0.0
    assert float(summary["total_control_norm"]) == 0.0


def test_control2d_deterministic(tmp_path):
    cfg = {"K": 3, "J": 6, "u0": "random", "K_stop": 2, "samples": 4, "ny": 3}
    code, out = run(tmp_path, "control2d", cfg, "--seed", "3")
    first = {f: (out / f).read_bytes() for f in ("control2d.csv", "control2d_field.csv",
                                                 "control2d_summary.csv")}
    code2, out2 = run(tmp_path, "control2d", cfg, "--seed", "3")
    assert code == code2 == 0
    for f, data in first.items():
        assert (out2 / f).read_bytes() == data
