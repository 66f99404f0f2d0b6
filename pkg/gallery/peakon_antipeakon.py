"""Peakon meets antipeakon (exploratory).

The particle system predicts the pair collides in finite time, with the
slope between them growing without bound. The grid solver can only follow
the slope until it is limited by the spacing; this script prints both
sides so the two can be compared by eye. Nothing here is asserted.
"""

import numpy as np

from novipeak import PeakonConfig
from novipeak.errors import BlowUp, CollisionDetected
from novipeak.field import eval_field_deriv
from novipeak.ode import IntegratorSettings, OdeState, integrate
from novipeak.pde import PdeSettings, pde_integrate

cfg = PeakonConfig([-0.5, 0.5], [1.0, -1.0])

try:
    integrate(OdeState(0.0, cfg), 10.0, IntegratorSettings(sample_dt=0.01))
except CollisionDetected as exc:
    print(f"particle system: gap {exc.gap:.1e} reached at t = {exc.t:.4f}")

print("initial slope at the centre:", float(abs(eval_field_deriv(cfg, np.array([0.0]))[0])))

settings = PdeSettings(N=4096, half_width=40.0, comoving=False, snapshot_dt=0.25,
                       slope_ceiling=200.0)
try:
    run = pde_integrate(cfg, 3.0, settings)
except BlowUp as exc:
    print(f"grid solver stopped: {exc}")
else:
    print(f"{'t':>5} {'max|u_x|':>9} {'max|u|':>8}")
    for t, slope, snap in zip(run.times, run.max_slope, run.snapshots):
        print(f"{t:5.2f} {slope:9.3f} {np.abs(snap.u).max():8.4f}")
