"""
Singular curves in rank-two step-three groups
=============================================

In the Engel group the lines along e2 are singular; in the free group of
rank two and step three every line through the origin is.  For each we print
the abnormal multiplier, the Goh and Legendre tests, the Morse index of the
constrained Hessian, and whether a normal multiplier also exists.
"""

import numpy as np

from carnot_sr import ControlGrid, engel, free
from carnot_sr.endpoint import corank, endpoint_jacobian
from carnot_sr.extremals import (find_abnormal, find_normal, goh_check, goh_subspace_test,
                                 legendre_check, morse_index)

cases = [(engel(), [0.0, 1.0]), (engel(), [0.3, 0.95]), (free(2, 3), [0.6, 0.8])]
for a, v in cases:
    g = ControlGrid.line(a, v, 128)
    jet = endpoint_jacobian(g)
    k = corank(jet)
    print(f"{a.name} line {v}: corank {k}")
    if k == 0:
        continue
    lam = find_abnormal(jet)[0]
    goh = goh_check(g, lam)
    leg = legendre_check(g, lam)
    _, res = find_normal(g, jet)
    print("  abnormal multiplier", np.round(lam.coords, 6))
    print(f"  goh {goh[0]} (violation {goh[1]:.1e}), legendre {leg[0]} (sign {leg[2]}),"
          f" morse index {morse_index(jet, lam)}, normal residual {res:.1e}")

# subspaces of the first layer admitting Goh multipliers
print("free(3,3), W = <e1, e2>:", len(goh_subspace_test(free(3, 3), [[1, 0, 0], [0, 1, 0]])), "multipliers")
print("free(3,3), W = V1:", len(goh_subspace_test(free(3, 3), np.eye(3))), "multipliers")
