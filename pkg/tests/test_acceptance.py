"""Acceptance criteria, one pass/fail line each.

Run under pytest (lines are collected in the terminal summary) or directly:

    python3 tests/test_acceptance.py
"""

import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from degcontrol.cli import main as cli_main
from degcontrol.errors import ControllabilityError
from degcontrol.kalman import check_controllability, make_system
from degcontrol.lr2d import (ModalState2D, dissipate, fd_dissipation_oracle, free_evolution,
                             make_schedule, norm_hm1_2d, run_lr, spectral_inequality_fit)
from degcontrol.moment import (MomentSystem, build_biortho, cost_curve, synthesize_control,
                               unobservable_direction)
from degcontrol.solver_1d import (ModalState1D, adjoint_solve, fd_forward_oracle, fd_mesh,
                                  modal_forward, norm_hm1_1d)
from degcontrol.spectrum import (eigenvalues, gap_check, gram_matrix, make_exponent, spectrum_table,
                                 sturm_liouville_fd_oracle)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
SCALAR = make_system([[0.0]], [[1.0]])


def report(log, n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}"
    log.append(line)
    print(line)
    return ok


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def criterion_1(log):
    def work():
        lam = eigenvalues(make_exponent(0.0), 50)
        ref = (np.arange(1, 51) * math.pi) ** 2
        return float(np.max(np.abs(lam - ref) / ref))
    err, dt = timed(work)
    return report(log, 1, err <= 1e-10 and dt < 1, f"max rel err {err:.2e}, {dt:.2f}s (<1s)")


def criterion_2(log):
    def work():
        worst = 0.0
        for a in (0.5, 1.0, 1.5):
            e = make_exponent(a)
            lam = eigenvalues(e, 5)
            fd = sturm_liouville_fd_oracle(e, 5, 4000)
            worst = max(worst, float(np.max(np.abs(fd - lam) / lam)))
        return worst
    err, dt = timed(work)
    return report(log, 2, err <= 1e-2 and dt < 30, f"max rel dev vs M=4000 oracle {err:.2e}, {dt:.1f}s (<30s)")


def criterion_3(log):
    def work():
        return max(float(np.max(np.abs(gram_matrix(make_exponent(a), 20) - np.eye(20))))
                   for a in (0.0, 0.5, 1.0, 1.5))
    err, dt = timed(work)
    return report(log, 3, err <= 1e-6 and dt < 30, f"max |G - I| {err:.2e}, {dt:.1f}s (<30s)")


def criterion_4(log):
    def work():
        return {a: gap_check(make_exponent(a), 200).violations for a in (0.0, 0.5, 1.3, 1.9)}
    viol, dt = timed(work)
    counts = {a: len(v) for a, v in viol.items()}
    ok = all(c == 0 for c in counts.values()) and dt < 10
    detail = ", ".join(f"alpha={a}: {c}" for a, c in counts.items())
    bad = [v for vs in viol.values() for v in vs]
    if bad:
        m, k, d, lo, hi = bad[0]
        detail += f"; first violation (m={m}, k={k}) gap {d:.4g} outside [{lo:.4g}, {hi:.4g}]"
    return report(log, 4, ok, f"violations {detail}, {dt:.1f}s (<10s)")


def criterion_5(log):
    def work():
        lam = eigenvalues(make_exponent(0.5), 12)
        return build_biortho(MomentSystem([(x, 1) for x in lam], 1.0, np.zeros(12)), weight_power=0)
    fam, dt = timed(work)
    return report(log, 5, fam.residual <= 1e-8 and dt < 1,
                  f"residual {fam.residual:.2e}, cond {fam.cond_estimate:.2e}, {dt:.2f}s (<1s)")


def criterion_6(log):
    t0 = time.perf_counter()
    K, M, steps = 12, 2000, 32000
    c = (1.0 / np.arange(1, K + 1))[:, None]
    worst_modal, worst_fd, parts = 0.0, 0.0, []
    for a in (0.0, 0.5, 1.5):
        e = make_exponent(a)
        w0 = ModalState1D(c, e, SCALAR)
        mesh = fd_mesh(e, M)
        x = mesh.x
        nodal = np.zeros((M + 1, 1))
        nodal[x > 0] = w0.on_mesh(x[x > 0]).real
        if not e.weak:
            nodal[x == 0] = float(np.sum(spectrum_table(e, K).obs_traces * c[:, 0]))
        for T in (0.5, 1.0):
            res = synthesize_control(w0, T, K)
            wT = modal_forward(w0, res.control, T)
            r_modal = norm_hm1_1d(wT) / norm_hm1_1d(w0)
            _, out = fd_forward_oracle(e, SCALAR, nodal, res.control, T, M, steps)
            r_fd = mesh.l2_norm(out) / mesh.l2_norm(nodal)
            worst_modal = max(worst_modal, r_modal)
            worst_fd = max(worst_fd, r_fd)
            parts.append(f"({a},{T}): {r_modal:.1e}/{r_fd:.1e}")
    dt = time.perf_counter() - t0
    ok = worst_modal <= 1e-6 and worst_fd <= 1e-2 and dt < 120
    return report(log, 6, ok, f"max modal H^-1 ratio {worst_modal:.2e}, max FD L2 ratio {worst_fd:.2e}, "
                  f"{dt:.0f}s (<120s) [{'; '.join(parts)}]")


def criterion_7(log):
    t0 = time.perf_counter()
    e = make_exponent(0.5)
    jordan = make_system([[0, 1], [0, 0]], [[0], [1]])
    verdict = check_controllability(jordan, e, 32)
    w0 = ModalState1D(np.random.default_rng(0).standard_normal((8, 2)), e, jordan)
    res = synthesize_control(w0, 1.0, 8)
    ratio = norm_hm1_1d(modal_forward(w0, res.control, 1.0)) / norm_hm1_1d(w0)
    shared = make_system(np.zeros((2, 2)), [[1], [1]])
    refused, diag = False, {}
    try:
        synthesize_control(ModalState1D(np.ones((4, 2)), e, shared), 1.0)
    except ControllabilityError as exc:
        refused, diag = True, exc.diagnostics
    deficit = refused and diag.get("rank", 0) < diag.get("expected", 0)
    v = unobservable_direction(shared, e, 4)
    obs = float(np.max(np.abs(adjoint_solve(v, 1.0, 2049).values))) if v is not None else math.inf
    dt = time.perf_counter() - t0
    ok = verdict.overall and ratio <= 1e-6 and deficit and obs <= 1e-9 and dt < 60
    return report(log, 7, ok, f"Jordan controllable k<=32: {verdict.overall}, ratio {ratio:.2e}; "
                  f"shared input refused {refused} {diag}; unobservable obs {obs:.1e}; {dt:.1f}s (<60s)")


def criterion_8(log):
    t0 = time.perf_counter()
    cfg = json.loads((CONFIGS / "costcurve.json").read_text())
    e = make_exponent(cfg["alpha"])
    K = cfg["K"]
    c = np.zeros((K, 1))
    c[0] = 1.0
    w0 = ModalState1D(c, e, SCALAR)
    w0 = w0.copy(w0.coeffs * (cfg["w0_scale"] / norm_hm1_1d(w0)))
    pts = cost_curve(w0, cfg["T_list"])
    dt = time.perf_counter() - t0
    norms = [p.norm for p in pts]
    if any(n is None for n in norms):
        return report(log, 8, False, f"conditioning refusals: {[p.refused for p in pts]}")
    order = sorted(pts, key=lambda p: -p.T)
    increasing = all(b.norm > a.norm for a, b in zip(order, order[1:]))
    tl = [p.T_log_norm for p in pts]
    bounded = min(tl) > 0 and max(tl) <= 10 * min(tl)
    ok = increasing and bounded and dt < 60
    return report(log, 8, ok, f"norms {[round(n, 1) for n in norms]}, T log|h| in [{min(tl):.2f}, {max(tl):.2f}], "
                  f"{dt:.1f}s (<60s)")


def criterion_9(log):
    t0 = time.perf_counter()
    J = list(range(1, 41))
    ok_all, parts = True, []
    for a in (0.0, 0.5, 1.5):
        e = make_exponent(a)
        fit = spectral_inequality_fit(e, (0.3, 0.7), J)
        bound = fit.C * np.sqrt(fit.lam) + fit.C
        holds = bool(np.all(fit.minus_log <= bound * (1 + 1e-12)))
        worst = float(np.max(fit.residuals))
        bad = [j for j, r in zip(J, fit.residuals) if r > 0.10]
        ok_all &= holds and worst <= 0.10
        parts.append(f"alpha={a}: C={fit.C:.3f}, bound holds {holds}, max resid {worst:.2f}"
                     + (f" (>10% at J={bad})" if bad else ""))
    dt = time.perf_counter() - t0
    return report(log, 9, ok_all and dt < 60, "; ".join(parts) + f"; {dt:.0f}s (<60s)")


def criterion_10(log):
    t0 = time.perf_counter()
    exps = (make_exponent(0.5), make_exponent(0.5))
    rng = np.random.default_rng(1)
    worst_exact, respects = 0.0, True
    for Jf, dtau in ((2, 0.05), (4, 0.02), (8, 0.01)):
        c = rng.standard_normal((6, 12))
        c[:, :Jf] = 0.0
        u = ModalState2D(c, exps, SCALAR)
        after = dissipate(u, dtau, Jf)
        w = u.weights()
        ref = math.sqrt(float(np.sum(np.abs(c) ** 2 * np.exp(-2 * w * dtau) / w)))
        worst_exact = max(worst_exact, abs(norm_hm1_2d(after) - ref) / ref)
        bound = math.exp(-eigenvalues(exps[1], Jf + 1)[-1] * dtau)
        respects &= norm_hm1_2d(after) <= bound * norm_hm1_2d(u) * (1 + 1e-9)
    c = np.zeros((3, 6))
    c[0, 4] = 1.0
    c[2, 5] = -0.7
    u = ModalState2D(c, exps, SCALAR)
    nb, na = fd_dissipation_oracle(u, 0.05, M=2000)
    modal = norm_hm1_2d(free_evolution(u, 0.05)) / norm_hm1_2d(u)
    fd_dev = abs(na / nb - modal) / modal
    dt = time.perf_counter() - t0
    ok = respects and worst_exact <= 1e-9 and fd_dev <= 1e-2 and dt < 30
    return report(log, 10, ok, f"decay bound respected {respects}, modal exactness {worst_exact:.1e}, "
                  f"FD deviation {fd_dev:.1e}, {dt:.1f}s (<30s)")


def criterion_11(log):
    t0 = time.perf_counter()
    exps = (make_exponent(0.5), make_exponent(0.5))
    u0 = ModalState2D(np.random.default_rng(0).standard_normal((16, 16, 1)), exps, SCALAR)
    sched = make_schedule(1.0, 0.5, beta=2, K_stop=4)
    rep = run_lr(u0, sched, (0.3, 0.7))
    dt = time.perf_counter() - t0
    traj = rep.norm_trajectory
    decreasing = all(b < a for a, b in zip(traj, traj[1:]))
    finite = math.isfinite(rep.total_control_norm)
    ok = rep.final_ratio <= 1e-4 and decreasing and finite and dt < 300
    return report(log, 11, ok, f"final H^-1 ratio {rep.final_ratio:.2e}, trajectory decreasing {decreasing}, "
                  f"total control norm {rep.total_control_norm:.4g}, {dt:.0f}s (<300s)")


def criterion_12(log):
    rng = np.random.default_rng(12)

    def work():
        worst = 0.0
        for _ in range(100):
            T = float(rng.uniform(0.05, 20))
            rho = float(rng.uniform(0.01, 0.99))
            beta = int(rng.integers(1, 20))
            s = make_schedule(T, rho, beta)
            worst = max(worst, abs(s.series_sum() - T) / T)
        return worst
    err, dt = timed(work)
    return report(log, 12, err <= 1e-12 and dt < 1, f"max |2 sum T_k - T|/T {err:.1e}, {dt:.2f}s (<1s)")


def criterion_13(log):
    t0 = time.perf_counter()
    cfg = str(CONFIGS / "control2d_reference.json")
    outs = []
    with tempfile.TemporaryDirectory() as tmp:
        codes = []
        for i in range(2):
            d = os.path.join(tmp, f"run{i}")
            codes.append(cli_main(["control2d", "--config", cfg, "--out", d, "--seed", "0"]))
            outs.append({f: Path(d, f).read_bytes() for f in sorted(os.listdir(d))})
    same = codes == [0, 0] and outs[0] == outs[1] and len(outs[0]) == 3
    dt = time.perf_counter() - t0
    return report(log, 13, same, f"exit codes {codes}, files {sorted(outs[0])} identical {outs[0] == outs[1]}, "
                  f"{dt:.0f}s")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7,
            criterion_8, criterion_9, criterion_10, criterion_11, criterion_12, criterion_13]


@pytest.mark.parametrize("crit", CRITERIA, ids=[f"criterion_{i}" for i in range(1, 14)])
def test_acceptance(crit, acceptance_log):
    assert crit(acceptance_log)


if __name__ == "__main__":
    log = []
    results = [crit(log) for crit in CRITERIA]
    print(f"{sum(results)}/{len(results)} criteria passed")
    sys.exit(0 if all(results) else 1)
