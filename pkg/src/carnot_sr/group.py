"""Carnot group in exponential coordinates of the first kind.

A group point is the algebra vector ``exp^{-1}(p)``; the identity is the zero
vector.  For step <= 3 the Baker-Campbell-Hausdorff series stops after the
degree-3 terms, so the product below is exact and associative.
"""

from __future__ import annotations

from math import factorial

import numpy as np

from .algebra import MAX_STEP, GradedAlgebra


def identity(a: GradedAlgebra) -> np.ndarray:
    return np.zeros(a.n)


def inverse(a: GradedAlgebra, p: np.ndarray) -> np.ndarray:
    return -np.asarray(p, dtype=float)


def _require_step(a: GradedAlgebra):
    if a.step > MAX_STEP:
        raise NotImplementedError(f"step {a.step} > {MAX_STEP} is not supported")


def bch_product(a: GradedAlgebra, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """``log(exp p exp q) = p + q + [p,q]/2 + [p,[p,q]]/12 + [q,[q,p]]/12``."""
    _require_step(a)
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    pq = a.bracket(p, q)
    return p + q + 0.5 * pq + (a.bracket(p, pq) - a.bracket(q, pq)) / 12.0


def dexp_apply(a: GradedAlgebra, e: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Left-trivialised differential of ``exp`` at ``e`` applied to ``w``.

    ``w - sum_{m=2}^{r} (-1)^m / m! ad(e)^{m-1} w``.
    """
    out = np.asarray(w, dtype=float).copy()
    term = out.copy()
    for m in range(2, a.step + 1):
        term = a.bracket(e, term)
        out -= ((-1) ** m / factorial(m)) * term
    return out


def left_frame(a: GradedAlgebra, p: np.ndarray, i: int) -> np.ndarray:
    """Left-invariant field ``X_i(p) = d/dt p exp(t e_i)`` at ``t = 0`` (``i`` 1-based, ``i <= n1``)."""
    if not 1 <= i <= a.n1:
        raise ValueError(f"frame index {i} is not a first-layer index (1..{a.n1})")
    return frame_matrix(a, p)[:, i - 1]


def frame_matrix(a: GradedAlgebra, p: np.ndarray) -> np.ndarray:
    """Columns ``X_J(p)`` for every basis element: ``I + ad(p)/2 + ad(p)^2/12``.

    Broadcasts over leading axes of ``p``.
    """
    _require_step(a)
    A = a.ad(p)
    return np.eye(a.n) + 0.5 * A + (A @ A) / 12.0


def project_first_layer(a: GradedAlgebra, p: np.ndarray) -> np.ndarray:
    """``pi^1(exp^{-1} p)``: the first-layer coordinate block."""
    return np.asarray(p, dtype=float)[..., : a.n1].copy()
