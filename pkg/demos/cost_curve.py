"""Control cost as the horizon shrinks; T log||h|| stays bounded."""

import numpy as np

from degcontrol.kalman import make_system
from degcontrol.moment import cost_curve
from degcontrol.solver_1d import ModalState1D, norm_hm1_1d
from degcontrol.spectrum import make_exponent

exp = make_exponent(0.5)
c = np.zeros((6, 1))
c[0] = 1.0
w0 = ModalState1D(c, exp, make_system([[0.0]], [[1.0]]))
w0 = w0.copy(w0.coeffs * 1e3 / norm_hm1_1d(w0))

print(f"{'T':>6} {'||h||':>12} {'T log||h||':>11}")
for p in cost_curve(w0, [2.0, 1.0, 0.5, 0.33, 0.25, 0.2]):
    if p.norm is None:
        print(f"{p.T:6.2f}  refused: {p.refused}")
    else:
        print(f"{p.T:6.2f} {p.norm:12.4g} {p.T_log_norm:11.3f}")
