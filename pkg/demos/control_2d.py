"""Control and dissipation on the unit square with a window on x = 0."""

import numpy as np

from degcontrol.kalman import make_system
from degcontrol.lr2d import ModalState2D, make_schedule, run_lr
from degcontrol.spectrum import make_exponent

exps = (make_exponent(0.5), make_exponent(0.5))
u0 = ModalState2D(np.random.default_rng(0).standard_normal((12, 12)), exps,
                  make_system([[0.0]], [[1.0]]))
sched = make_schedule(1.0, 0.5, beta=2, K_stop=3)
rep = run_lr(u0, sched, (0.3, 0.7))

print(f"{'a_k':>8} {'gamma':>5} {'before':>10} {'controlled':>11} {'dissipated':>11} {'||q||':>9}")
for a, g, b, c, d, q in rep.rows:
    print(f"{a:8.4f} {g:5d} {b:10.3e} {c:11.3e} {d:11.3e} {q:9.3g}")
print(f"final H^-1 ratio {rep.final_ratio:.2e}, total control norm {rep.total_control_norm:.4g}")
