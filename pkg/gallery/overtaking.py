"""A fast peakon catches a slow one.

The two never meet: the rear one hands its amplitude forward, so the
order of positions is kept while the amplitudes swap. The late-time
amplitudes are the square roots of the eigenvalues of the spectral matrix.
"""

import numpy as np

from novipeak import PeakonConfig, lambda_spectrum
from novipeak.ode import IntegratorSettings, OdeState, conservation_report, integrate

cfg = PeakonConfig([0.0, 5.0], [2.0, 1.0])
traj = integrate(OdeState(0.0, cfg), 40.0, IntegratorSettings(sample_dt=0.05))

print(f"{'t':>6} {'q1':>9} {'q2':>9} {'p1':>8} {'p2':>8} {'gap':>7}")
for k in range(0, len(traj), 80):
    q, p = traj.q[k], traj.p[k]
    print(f"{traj.t[k]:6.2f} {q[0]:9.3f} {q[1]:9.3f} {p[0]:8.4f} {p[1]:8.4f} {q[1] - q[0]:7.3f}")

gaps = np.diff(traj.q, axis=1)[:, 0]
k = int(np.argmin(gaps))
print(f"\nclosest approach {gaps[k]:.4f} at t = {traj.t[k]:.2f}")
print("limit amplitudes from the spectrum:", np.round(lambda_spectrum(cfg).lambdas, 6))
dE, dF = conservation_report(traj)
print(f"relative drift: E {dE:.2e}, F {dF:.2e}")
