"""
Reducing a singular curve to a generated subgroup
=================================================

A normal geodesic of the rank-two free group, placed in the e1-e2 plane of
the rank-three free group, is singular there.  The classifier notices that
the curve only uses a plane, re-expresses it in the subalgebra that plane
generates, certifies it as normal, and carries the multiplier back up.  A
curve with a corner is the negative control.
"""

import numpy as np

from carnot_sr import ControlGrid, free, heisenberg
from carnot_sr.classify import classify_curve
from carnot_sr.extremals import hamiltonian_flow

N = 128
flow = hamiltonian_flow(free(2, 3), np.zeros(5), [0.7, 0.4, 1.5, 0.8, -0.6], steps=N)
a = free(3, 3)
grid = ControlGrid.from_nodes(a, np.c_[flow.path.grid.nodes, np.zeros(N + 1)])
report, chain = classify_curve(a, grid)
print("verdict:", chain.verdict, " corank at top:", report.corank)
for depth, st in enumerate(chain.stages):
    print(f"  level {depth}: {st.algebra.name} dims {st.algebra.layer_dims}  dim W = {st.dim_W}"
          f"  -> {st.verdict}  residual {st.residual:.1e}")
print("multiplier in free(3,3):", np.round(chain.multiplier.coords, 4))

t = np.linspace(0, 1, N + 1)
corner = ControlGrid.from_nodes(heisenberg(1), np.c_[np.minimum(t, 0.5), np.maximum(t - 0.5, 0)])
_, chain = classify_curve(heisenberg(1), corner)
print("corner curve:", chain.verdict, f"residual {chain.residual:.3f}")
