"""
Geodesics by direct minimisation and by shooting
=================================================

The shortest curve from the identity to the vertical point (0, 0, pi) in the
Heisenberg group is a circle of length 2 pi, so its energy is 2 pi^2.  We
find it twice: by minimising energy under the end-point constraint, and by
shooting the normal Hamiltonian flow.
"""

import time

import numpy as np

from carnot_sr import heisenberg
from carnot_sr.extremals import hamiltonian_flow
from carnot_sr.solver import SolveOptions, compare_energy, shoot_to_target, solve_geodesic

h = heisenberg(1)
target = np.array([0.0, 0.0, np.pi])

t0 = time.time()
res = solve_geodesic(h, target, SolveOptions(N=128))
print(f"direct: status={res.status} energy={res.energy:.6f} (2 pi^2 = {2 * np.pi**2:.6f})"
      f" kkt={res.kkt_residual:.1e} [{time.time() - t0:.1f}s]")
print("multiplier", np.round(res.multiplier.coords, 4))

speeds = np.linalg.norm(res.grid.velocities, axis=1)
print(f"speed spread {np.ptp(speeds) / speeds.mean():.1e}")

cmp = compare_energy(res, trials=30)
print(f"{cmp['competitors']} random feasible curves, cheapest energy {cmp['min_competitor_energy']:.3f}")

lam0, r, status = shoot_to_target(h, np.zeros(3), target, SolveOptions(N=256))
flow = hamiltonian_flow(h, np.zeros(3), lam0, steps=256)
print(f"shooting: status={status} residual={r:.1e} energy={flow.hamiltonian[0]:.6f}"
      f" drift={flow.energy_drift:.1e}")
