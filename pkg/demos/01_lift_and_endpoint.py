"""
Horizontal lifts and the end-point map
======================================

A planar loop lifted to the Heisenberg group picks up its enclosed area in
the vertical coordinate.  We lift a sampled unit circle, compare the closed
form segment integration with a product of group elements, then look at the
end-point Jacobian of a line in the Engel group.
"""

import numpy as np

from carnot_sr import ControlGrid, engel, heisenberg, horizontality_residual, lift
from carnot_sr.curves import lift_by_bch
from carnot_sr.endpoint import corank, endpoint_jacobian

h = heisenberg(1)
for N in (16, 64, 256):
    t = np.linspace(0, 1, N + 1)
    nodes = np.c_[np.cos(2 * np.pi * t) - 1, np.sin(2 * np.pi * t)]
    grid = ControlGrid.from_nodes(h, nodes)
    path = lift(grid)
    other = lift_by_bch(grid)
    print(f"N={N:4d}  area={path.end[2]:.10f}  polygon={N / 2 * np.sin(2 * np.pi / N):.10f}"
          f"  |lift - bch|={np.abs(path.end - other.end).max():.1e}"
          f"  horizontality={horizontality_residual(path):.1e}")
print("pi =", np.pi)

# Engel: a line along e2 is singular, an oblique line is not
e = engel()
for v in ([0.0, 1.0], [0.6, 0.8]):
    jet = endpoint_jacobian(ControlGrid.line(e, v, 64))
    s = jet.singular_values
    print(f"engel line {v}: corank {corank(jet)}, smallest singular values {s[-2:]}")
