"""Command-line experiment runner.

    degcontrol <subcommand> --config run.json --out results/ [--seed 0] [--threads 1]

Subcommands: spectrum, gap, kalman, control1d, costcurve, spectralineq,
control2d.  The config is a JSON object of parameters; missing keys take the
defaults in DEFAULTS.  Every CSV has a header row and floats are written with
17 significant digits, so identical configs give byte-identical files.

Exit codes: 0 success, 2 invalid configuration, 3 numerical refusal.
"""

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, field

EXIT_CONFIG = 2
EXIT_NUMERIC = 3

SCALAR = {"A": [[0.0]], "B": [[1.0]]}

DEFAULTS = {
    "spectrum": {"alpha": 0.0, "K": 10, "oracle_mesh": 4000},
    "gap": {"alpha": 0.5, "K": 50},
    "kalman": {"alpha": 0.5, "K": 16, **SCALAR},
    "control1d": {"alpha": 0.5, "K": 12, "T": 1.0, "w0": "mode1", "taper": "auto",
                  "cond_cap": 1e12, "samples": None, **SCALAR},
    "costcurve": {"alpha": 0.5, "K": 6, "T_list": [1.0, 0.5, 0.33, 0.25], "w0": "mode1",
                  "w0_scale": 1000.0, "weight_power": 0, "cond_cap": 1e12, **SCALAR},
    "spectralineq": {"alpha": 0.5, "omega": [0.3, 0.7], "J_list": list(range(1, 41))},
    "control2d": {"alpha": [0.5, 0.5], "K": 16, "J": 16, "omega": [0.3, 0.7], "T": 1.0,
                  "rho": 0.5, "beta": 2, "K_stop": 4, "u0": "random", "cond_cap": 1e12,
                  "tol": 1e-6, "samples": 64, "ny": 17, **SCALAR},
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    subcommand: str
    params: dict = field(default_factory=dict)

    def resolved(self):
        out = json.loads(json.dumps(DEFAULTS[self.subcommand]))
        out.update(self.params)
        return out


def parse_config(text, subcommand):
    if subcommand not in DEFAULTS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(data) - set(DEFAULTS[subcommand]))
    if unknown:
        raise ConfigError(f"unknown keys for {subcommand}: {unknown}")
    cfg = ExperimentConfig(subcommand, data)
    validate(cfg)
    return cfg


def serialize_config(cfg):
    return json.dumps(cfg.params, indent=2, sort_keys=True)


# --- validation -----------------------------------------------------------

def _num(p, key, lo=None, hi=None, lo_open=False, integer=False):
    v = p[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{key} must be a finite number")
    if integer and int(v) != v:
        raise ConfigError(f"{key} must be an integer")
    if lo is not None and (v < lo or (lo_open and v == lo)):
        raise ConfigError(f"{key} must be {'>' if lo_open else '>='} {lo}")
    if hi is not None and v >= hi:
        raise ConfigError(f"{key} must be < {hi}")
    return int(v) if integer else float(v)


def _alpha(v, key="alpha"):
    return _num({key: v}, key, 0.0, 2.0)


def _matrix(p, key):
    M = p[key]
    if not isinstance(M, list) or not M or not all(isinstance(r, list) and r for r in M):
        raise ConfigError(f"{key} must be a non-empty nested list")
    if len({len(r) for r in M}) != 1:
        raise ConfigError(f"{key} rows must have equal length")
    for r in M:
        for v in r:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{key} entries must be numbers")
    return M


def _omega(p):
    w = p["omega"]
    if not (isinstance(w, list) and len(w) == 2):
        raise ConfigError("omega must be [a, b]")
    a, b = (_num({"v": x}, "v") for x in w)
    if not 0 <= a < b <= 1:
        raise ConfigError("omega must satisfy 0 <= a < b <= 1")


def _system(p):
    A, B = _matrix(p, "A"), _matrix(p, "B")
    if len(A) != len(A[0]) or len(B) != len(A):
        raise ConfigError("A must be n x n and B must be n x m")


def _state_spec(v, key, shape, modes=True):
    if isinstance(v, str):
        if v not in ("zero", "random") and not (modes and v.startswith("mode") and v[4:].isdigit()):
            raise ConfigError(f"{key} must be 'zero', 'random', 'modeN' or a nested list")
        if v.startswith("mode") and not 1 <= int(v[4:]) <= shape[0]:
            raise ConfigError(f"{key} mode index out of range")
        return
    if not isinstance(v, list):
        raise ConfigError(f"{key} must be a string or a nested list")


def validate(cfg):
    p = cfg.resolved()
    s = cfg.subcommand
    if s == "control2d":
        if not (isinstance(p["alpha"], list) and len(p["alpha"]) == 2):
            raise ConfigError("alpha must be [alpha_x, alpha_y]")
        for a in p["alpha"]:
            _alpha(a)
    else:
        _alpha(p["alpha"])
    for key in ("K", "J"):
        if key in p:
            _num(p, key, 1, integer=True)
    if "A" in p:
        _system(p)
    if s == "spectrum":
        m = _num(p, "oracle_mesh", 0, integer=True)
        if 0 < m < 200:
            raise ConfigError("oracle_mesh must be 0 or >= 200")
    if s in ("control1d", "control2d"):
        _num(p, "T", 0, lo_open=True)
        _num(p, "cond_cap", 1, lo_open=True)
    if s == "control1d":
        if p["taper"] != "auto":
            _num(p, "taper", 0, 17, integer=True)
        if p["samples"] is not None:
            _num(p, "samples", 1024, integer=True)
        _state_spec(p["w0"], "w0", (p["K"],))
    if s == "costcurve":
        if not isinstance(p["T_list"], list) or not p["T_list"]:
            raise ConfigError("T_list must be a non-empty list")
        for T in p["T_list"]:
            _num({"T": T}, "T", 0, lo_open=True)
        _num(p, "weight_power", 0, 17, integer=True)
        _num(p, "w0_scale", 0, lo_open=True)
        _state_spec(p["w0"], "w0", (p["K"],))
    if s == "spectralineq":
        _omega(p)
        J = p["J_list"]
        if not isinstance(J, list) or not J or any(isinstance(j, bool) or not isinstance(j, int) or j < 1 for j in J):
            raise ConfigError("J_list must be a list of positive integers")
        if any(b <= a for a, b in zip(J, J[1:])):
            raise ConfigError("J_list must be increasing")
    if s == "control2d":
        _omega(p)
        _num(p, "rho", 0, 1, lo_open=True)
        _num(p, "beta", 1, integer=True)
        _num(p, "K_stop", 1, integer=True)
        _num(p, "tol", 0, 1, lo_open=True)
        _num(p, "samples", 0, integer=True)
        _num(p, "ny", 2, integer=True)
        _state_spec(p["u0"], "u0", (p["K"], p["J"]), modes=False)
    return p


# --- output ---------------------------------------------------------------

def fmt(v):
    if v is None:
        return ""
    kind = getattr(getattr(v, "dtype", None), "kind", None)
    if isinstance(v, bool) or kind == "b":
        return "true" if v else "false"
    if isinstance(v, int) or kind in ("i", "u"):
        return str(int(v))
    if isinstance(v, float) or kind == "f":
        v = float(v)
        if math.isnan(v):
            return "nan"
        return format(v, ".17g")
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def _channel_columns(values, prefix):
    """Split (N, m) samples into real columns, adding imaginary ones if needed."""
    import numpy as np

    values = np.asarray(values).reshape(len(values), -1)
    cplx = np.iscomplexobj(values) and np.any(values.imag)
    cols, names = [], []
    for q in range(values.shape[1]):
        names.append(f"{prefix}{q + 1}" if not cplx else f"{prefix}{q + 1}_re")
        cols.append(values[:, q].real)
        if cplx:
            names.append(f"{prefix}{q + 1}_im")
            cols.append(values[:, q].imag)
    return names, cols


# --- commands -------------------------------------------------------------

def _system_from(p):
    import numpy as np
    from .kalman import make_system

    return make_system(np.array(p["A"], dtype=float), np.array(p["B"], dtype=float))


def _state_1d(spec, exp, sys, K, rng, scale=1.0):
    import numpy as np
    from .solver_1d import ModalState1D

    n = sys.n
    if spec == "zero":
        c = np.zeros((K, n))
    elif spec == "random":
        c = rng.standard_normal((K, n))
    elif isinstance(spec, str):
        c = np.zeros((K, n))
        c[int(spec[4:]) - 1] = 1.0
    else:
        c = np.array(spec, dtype=float).reshape(K, n)
    return ModalState1D(scale * c, exp, sys)


def cmd_spectrum(p, out, rng):
    import numpy as np
    from .spectrum import make_exponent, spectrum_table, sturm_liouville_fd_oracle

    exp = make_exponent(p["alpha"])
    tab = spectrum_table(exp, p["K"])
    oracle = (sturm_liouville_fd_oracle(exp, p["K"], p["oracle_mesh"])
              if p["oracle_mesh"] else np.full(p["K"], np.nan))
    rows = []
    for k in range(p["K"]):
        lam = tab.eigenvalues[k]
        rel = abs(oracle[k] - lam) / lam if p["oracle_mesh"] else None
        rows.append((k + 1, tab.zeros[k], lam, tab.obs_traces[k],
                     oracle[k] if p["oracle_mesh"] else None, rel))
    write_csv(os.path.join(out, "spectrum.csv"),
              ["k", "zero", "eigenvalue", "obs_trace", "oracle_eigenvalue", "rel_err"], rows)


def cmd_gap(p, out, rng):
    from .spectrum import gap_table, make_exponent

    rows = gap_table(make_exponent(p["alpha"]), p["K"])
    write_csv(os.path.join(out, "gap.csv"),
              ["k", "m", "gap", "lower_bound", "upper_bound", "ok"], rows)


def cmd_kalman(p, out, rng):
    from .kalman import check_controllability
    from .spectrum import make_exponent

    v = check_controllability(_system_from(p), make_exponent(p["alpha"]), p["K"])
    rows = [(k + 1, v.ranks[k], v.expected[k], v.ranks[k] == v.expected[k]) for k in range(p["K"])]
    write_csv(os.path.join(out, "kalman.csv"), ["k", "rank", "expected", "controllable"], rows)


def cmd_control1d(p, out, rng):
    import numpy as np
    from .moment import synthesize_control
    from .solver_1d import modal_forward, norm_hm1_1d
    from .spectrum import make_exponent

    exp = make_exponent(p["alpha"])
    sys = _system_from(p)
    w0 = _state_1d(p["w0"], exp, sys, p["K"], rng)
    res = synthesize_control(w0, p["T"], taper=p["taper"], cond_cap=p["cond_cap"],
                             samples=p["samples"])
    wT = modal_forward(w0, res.control, p["T"])
    n0 = norm_hm1_1d(w0)
    ratio = norm_hm1_1d(wT) / n0 if n0 > 0 else 0.0
    names, cols = _channel_columns(res.control.values, "h")
    rows = zip(res.control.grid, *cols)
    write_csv(os.path.join(out, "control1d.csv"), ["t"] + names, rows)
    summary = [("initial_norm_hm1", n0), ("final_ratio", ratio), ("control_norm", res.l2_norm),
               ("cond", res.cond), ("cond_raw", res.cond_raw), ("residual", res.residual),
               ("weight_power", res.weight_power), ("tail_l2", res.tail_l2)]
    write_csv(os.path.join(out, "control1d_summary.csv"), ["quantity", "value"], summary)


def cmd_costcurve(p, out, rng):
    import numpy as np
    from .moment import cost_curve
    from .spectrum import eigenvalues, make_exponent

    exp = make_exponent(p["alpha"])
    sys = _system_from(p)
    w0 = _state_1d(p["w0"], exp, sys, p["K"], rng)
    # scale so that the initial H^{-1} norm equals w0_scale
    lam = eigenvalues(exp, p["K"])
    n0 = math.sqrt(float(np.sum(np.abs(w0.coeffs) ** 2 / lam[:, None])))
    if n0 > 0:
        w0 = w0.copy(w0.coeffs * (p["w0_scale"] / n0))
    pts = cost_curve(w0, p["T_list"], weight_power=p["weight_power"], cond_cap=p["cond_cap"])
    rows = [(c.T, c.norm, c.T_log_norm) for c in pts]
    write_csv(os.path.join(out, "costcurve.csv"), ["T", "control_norm", "T_times_log_norm"], rows)


def cmd_spectralineq(p, out, rng):
    from .lr2d import spectral_inequality_fit
    from .spectrum import make_exponent

    fit = spectral_inequality_fit(make_exponent(p["alpha"]), tuple(p["omega"]), p["J_list"])
    write_csv(os.path.join(out, "spectralineq.csv"),
              ["J", "lambda_J", "sigma_min", "minus_log_sigma_min", "fitted_C"], fit.rows())


def cmd_control2d(p, out, rng):
    import numpy as np
    from .lr2d import ModalState2D, make_schedule, run_lr
    from .spectrum import make_exponent

    exps = (make_exponent(p["alpha"][0]), make_exponent(p["alpha"][1]))
    sys = _system_from(p)
    K, J, n = p["K"], p["J"], sys.n
    spec = p["u0"]
    if spec == "zero":
        c = np.zeros((K, J, n))
    elif spec == "random":
        c = rng.standard_normal((K, J, n))
    else:
        c = np.array(spec, dtype=float).reshape(K, J, n)
    u0 = ModalState2D(c, exps, sys)
    sched = make_schedule(p["T"], p["rho"], p["beta"], K_stop=p["K_stop"])
    rep = run_lr(u0, sched, tuple(p["omega"]), cond_cap=p["cond_cap"], tol=p["tol"],
                 samples=p["samples"] or None, ny=p["ny"])
    write_csv(os.path.join(out, "control2d.csv"),
              ["a_k", "gamma_k", "norm_hm1_before", "norm_after_control",
               "norm_after_dissipation", "step_control_norm"], rep.rows)
    rows = []
    for fld in rep.fields:
        vals = fld.values
        for i, t in enumerate(fld.t):
            for j, y in enumerate(fld.y):
                v = vals[i, j]
                if np.iscomplexobj(v):
                    rows.append((t, y, *[x for z in v for x in (z.real, z.imag)]))
                else:
                    rows.append((t, y, *v))
    m = sys.m
    cplx = any(np.iscomplexobj(f.values) for f in rep.fields)
    qcols = ([f"q{q + 1}_{s}" for q in range(m) for s in ("re", "im")] if cplx
             else [f"q{q + 1}" for q in range(m)])
    write_csv(os.path.join(out, "control2d_field.csv"), ["t", "y"] + qcols, rows)
    summary = [("initial_norm_hm1", rep.norm_trajectory[0]), ("final_ratio", rep.final_ratio),
               ("total_control_norm", rep.total_control_norm), ("tail_bound", rep.tail_bound)]
    write_csv(os.path.join(out, "control2d_summary.csv"), ["quantity", "value"], summary)


COMMANDS = {
    "spectrum": cmd_spectrum,
    "gap": cmd_gap,
    "kalman": cmd_kalman,
    "control1d": cmd_control1d,
    "costcurve": cmd_costcurve,
    "spectralineq": cmd_spectralineq,
    "control2d": cmd_control2d,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="degcontrol", description=__doc__.split("\n")[0])
    ap.add_argument("subcommand", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="JSON parameter file (defaults used when omitted)")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--threads", type=int, default=None, help="BLAS thread count")
    ap.add_argument("--seed", type=int, default=0, help="seed for random test states")
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return EXIT_CONFIG
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        text = ""
        if args.config:
            with open(args.config) as fh:
                text = fh.read()
        cfg = parse_config(text, args.subcommand)
        params = cfg.resolved()
        os.makedirs(args.out, exist_ok=True)
    except (OSError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    import numpy as np
    from .errors import ConfigurationError, ControllabilityError, DomainError, NumericalError

    rng = np.random.default_rng(args.seed)
    try:
        COMMANDS[args.subcommand](params, args.out, rng)
    except (ConfigError, ConfigurationError, DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, ControllabilityError) as exc:
        diag = getattr(exc, "diagnostics", {})
        diag = {k: v for k, v in diag.items() if k != "partial"}
        print(f"refused: {exc} {diag if diag else ''}".rstrip(), file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
