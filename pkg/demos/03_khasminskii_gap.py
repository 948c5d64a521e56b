"""The Khas'minskii auxiliary process and the drift decomposition.

Freezing the slow variable on blocks of length delta gives an auxiliary
fast process Yhat.  Its mean-square distance to Y^eps grows with delta;
the regression slope in log-log coordinates is what the block argument
controls.  decompose_M then splits the drift error into four pieces.

Run:  python demos/03_khasminskii_gap.py
"""

import numpy as np

from roughavg.core import Grid
from roughavg.experiment import aux_gap_slope, decompose_M, delta_schedule, khasminskii_aux
from roughavg.lifts import NoiseSpec, brownian_ito_lift, fbm_lift, mixed_lift
from roughavg.models import get_model
from roughavg.slowfast import MicroStepPolicy, solve_slow_fast

coeffs = get_model("ou_sine")
eps, beta = 0.05, 0.4

res = aux_gap_slope(coeffs, eps, [0.05, 0.1, 0.2, 0.5], 128, beta, seed=1)
for d, g in zip(res["deltas"], res["gaps"]):
    print(f"delta={d:<5} sup_t E|Y - Yhat|^2 = {g:.4f}")
print(f"slope {res['slope']:.3f} +/- {res['stderr']:.3f}   (2 beta = {2 * beta})")

grid = Grid(1.0, MicroStepPolicy().n_steps(1.0, eps))
B = fbm_lift(NoiseSpec("fbm", 1, hurst=0.45, substeps=8, seed=5, stream_id=0), grid)
W, inc = brownian_ito_lift(NoiseSpec("brownian_ito", 1, substeps=8, seed=5, stream_id=1), grid)
sol = solve_slow_fast(coeffs, mixed_lift(B, inc, grid, 1), eps, [0.5, 0.0])
delta = delta_schedule(eps, beta, step=grid.step, horizon=1.0)
yhat = khasminskii_aux(coeffs, sol.X, W, eps, delta, [0.0], grid)
parts = decompose_M(coeffs, sol.X, sol.Y, yhat, coeffs.closed_form["fbar"], delta, grid)
print(f"delta from the schedule: {delta:.3f}")
for i, n in enumerate(parts["norms"], 1):
    print(f"term {i}: norm {n:.4f}, value at T {parts['terms'][i - 1][-1, 0]: .4f}")
print("sum of terms at T:", np.round(parts["total"][-1], 4))
