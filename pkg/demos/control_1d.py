"""Null control of the 1-d degenerate system, scalar and Jordan coupling."""

import numpy as np

from degcontrol.kalman import make_system
from degcontrol.moment import synthesize_control
from degcontrol.solver_1d import ModalState1D, modal_forward, norm_hm1_1d
from degcontrol.spectrum import make_exponent


def run(alpha, A, B, coeffs, T):
    exp = make_exponent(alpha)
    sys = make_system(A, B)
    w0 = ModalState1D(coeffs, exp, sys)
    res = synthesize_control(w0, T)
    wT = modal_forward(w0, res.control, T)
    print(f"alpha={alpha}  n={sys.n}  K={w0.K}  T={T}")
    print(f"  taper p={res.weight_power}  cond={res.cond:.2e}  dps={res.dps}")
    print(f"  ||h||_L2 = {res.l2_norm:.4g}")
    print(f"  H^-1 ratio after control: {norm_hm1_1d(wT) / norm_hm1_1d(w0):.2e}")
    print(f"  untargeted tail L2 (modes up to {res.tail_modes}): {res.tail_l2:.2e}")


if __name__ == "__main__":
    K = 10
    run(0.5, [[0.0]], [[1.0]], (1.0 / np.arange(1, K + 1))[:, None], 1.0)
    run(1.5, [[0.0]], [[1.0]], (1.0 / np.arange(1, K + 1))[:, None], 1.0)
    rng = np.random.default_rng(0)
    run(0.5, [[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], rng.standard_normal((6, 2)), 1.0)
