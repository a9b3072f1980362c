"""End-point map on piecewise-linear curves: value, Jacobian, kernel, Hessian.

Variations are piecewise linear with the same nodes as the base curve and
vanish at ``t = 0``.  Their coordinates are node-major: entry
``(k - 1) * n1 + i`` is the ``i``-th first-layer component of ``phi(t_k)``
for ``k = 1..N``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .algebra import MAX_STEP, GradedAlgebra
from .curves import ControlGrid, lift

EPS_RANK = 1e-9
NEAR_SINGULAR = 1e-6


@dataclass(frozen=True, eq=False)
class Variation:
    """Node values ``phi(t_j)`` for ``j = 0..N`` (``phi(t_0) = 0``)."""

    nodes: np.ndarray  # (N + 1, n1)

    def __post_init__(self):
        v = np.array(self.nodes, dtype=float)
        if v.ndim != 2 or v.shape[0] < 2:
            raise ValueError("a variation needs node values of shape (N + 1, n1)")
        if np.any(v[0]):
            raise ValueError("variations vanish at t = 0")
        v.setflags(write=False)
        object.__setattr__(self, "nodes", v)

    @property
    def fixed_end(self) -> bool:
        return not np.any(self.nodes[-1])

    @property
    def coords(self) -> np.ndarray:
        return self.nodes[1:].ravel()

    @classmethod
    def from_coords(cls, coords, n1: int) -> "Variation":
        c = np.asarray(coords, dtype=float).reshape(-1, n1)
        return cls(np.vstack([np.zeros(n1), c]))


def _based(grid: ControlGrid):
    if not grid.is_based:
        raise ValueError("end-point computations need a curve based at the identity")
    a = grid.algebra
    if a.step > MAX_STEP:
        raise NotImplementedError(f"step {a.step} > {MAX_STEP} is not supported")
    return a


def endpoint_value(grid: ControlGrid, check: bool = False) -> np.ndarray:
    """Exponential coordinates of the lifted curve's terminal point."""
    _based(grid)
    return lift(grid, check=check).end.copy()


def _jacobian(grid: ControlGrid, value: np.ndarray) -> np.ndarray:
    a = _based(grid)
    n, n1, N, h = a.n, a.n1, grid.N, grid.h
    nodes = a.embed_first_layer(grid.nodes)
    u = a.embed_first_layer(grid.velocities)
    ad_u = a.ad(u)[:, :, :n1]          # (N, n, n1): phi -> [phi, u] is -ad(u) phi
    ad_a = a.ad(nodes[:-1])             # (N, n, n)
    end1 = nodes[-1]
    ad_end = a.ad(end1)
    ad_end2 = a.ad(a.project(value, 2))

    # per-segment contributions to the start (0) and end (1) node of each segment
    s1 = -0.5 * h * ad_u                               # int [phi, u]
    uu = np.einsum("jab,jbc->jac", a.ad(u), ad_u)      # ad(u) ad(u) restricted
    au = np.einsum("jab,jbc->jac", ad_a, ad_u)
    s3_start = -(0.5 * h * au + (h * h / 6.0) * uu)    # int [gamma, [phi, u]]
    s3_end = -(0.5 * h * au + (h * h / 3.0) * uu)

    S1 = np.zeros((N + 1, n, n1))
    S3 = np.zeros((N + 1, n, n1))
    S1[:-1] += s1
    S1[1:] += s1
    S3[:-1] += s3_start
    S3[1:] += s3_end
    S1, S3 = S1[1:], S3[1:]  # node 0 is fixed

    d2 = S1.copy()
    d3 = S3 - 0.5 * np.einsum("ab,kbc->kac", ad_end, S1)
    d2[-1] += 0.5 * ad_end[:, :n1]
    d3[-1] += 0.5 * ad_end2[:, :n1] + (ad_end @ ad_end)[:, :n1] / 12.0

    J = np.zeros((N, n, n1))
    J[-1, :n1, :] = np.eye(n1)
    mask2 = np.array([a.layer_of(i) == 2 for i in range(n)])
    mask3 = np.array([a.layer_of(i) == 3 for i in range(n)])
    J[:, mask2, :] += d2[:, mask2, :]
    J[:, mask3, :] += d3[:, mask3, :]
    return J.transpose(1, 0, 2).reshape(n, N * n1)


@dataclass(eq=False)
class EndpointJet:
    """Value and first/second-order data of the end-point map at a curve."""

    base: ControlGrid
    value: np.ndarray
    jacobian: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def algebra(self) -> GradedAlgebra:
        return self.base.algebra

    @cached_property
    def _svd(self):
        U, s, Vt = np.linalg.svd(self.jacobian, full_matrices=True)
        return U, s, Vt

    @property
    def singular_values(self) -> np.ndarray:
        return self._svd[1]

    def _threshold(self, s) -> float:
        return EPS_RANK * (s[0] if s.size and s[0] > 0 else 0.0)

    @property
    def rank(self) -> int:
        s = self.singular_values
        if not s.size or s[0] == 0:
            return 0
        return int(np.sum(s > self._threshold(s)))

    @property
    def near_singular(self) -> bool:
        s = self.singular_values
        if not s.size or s[0] == 0:
            return False
        rel = s / s[0]
        return bool(np.any((rel >= EPS_RANK) & (rel <= NEAR_SINGULAR)))

    @property
    def kernel_matrix(self) -> np.ndarray:
        """Orthonormal kernel basis as columns, shape ``(N * n1, d)``."""
        return self._svd[2][self.rank:].T

    @property
    def left_null(self) -> np.ndarray:
        """Orthonormal basis of covectors annihilating the image, columns ``(n, c)``."""
        return self._svd[0][:, self.rank:]

    @property
    def energy_row(self) -> np.ndarray:
        """Differential of the energy ``int <gamma', phi'>`` in variation coordinates."""
        u = self.base.velocities
        g = np.zeros_like(u)
        g[:-1] = u[:-1] - u[1:]
        g[-1] = u[-1]
        return g.ravel()

    def augmented_rank(self) -> int:
        M = np.vstack([self.energy_row, self.jacobian])
        s = np.linalg.svd(M, compute_uv=False)
        if not s.size or s[0] == 0:
            return 0
        return int(np.sum(s > EPS_RANK * s[0]))

    def hessian_matrices(self) -> np.ndarray:
        """Vector-valued intrinsic Hessian on all variation coordinates, ``(n, M, M)``."""
        if "hess" not in self._cache:
            self._cache["hess"] = _assemble_hessian(self.base, self.algebra.n)
        return self._cache["hess"]

    def hessian_form(self) -> np.ndarray:
        """``H[k, p, q]``: component ``k`` of the Hessian on kernel basis pair ``(p, q)``."""
        K = self.kernel_matrix
        return np.einsum("ma,kmp,pb->kab", K, self.hessian_matrices(), K)

    def summary(self) -> dict:
        return {
            "N": self.base.N,
            "value": self.value.tolist(),
            "singular_values": self.singular_values.tolist(),
            "rank": self.rank,
            "corank": corank(self),
            "augmented_corank": corank(self, augmented=True),
            "kernel_dim": int(self.kernel_matrix.shape[1]),
            "near_singular": self.near_singular,
        }


def endpoint_jacobian(grid: ControlGrid) -> EndpointJet:
    value = endpoint_value(grid)
    return EndpointJet(grid, value, _jacobian(grid, value))


def endpoint_kernel(jet: EndpointJet) -> list[Variation]:
    n1 = jet.algebra.n1
    return [Variation.from_coords(c, n1) for c in jet.kernel_matrix.T]


def corank(jet: EndpointJet, augmented: bool = False) -> int:
    """Codimension of the image of the differential (``n + 1`` rows when augmented)."""
    if augmented:
        return jet.algebra.n + 1 - jet.augmented_rank()
    return jet.algebra.n - jet.rank


# -- direct evaluation of the first and second variation ----------------------

def _segments(grid: ControlGrid, phi: np.ndarray):
    """Start value ``p`` and slope ``q`` of ``phi`` on every segment (full-length vectors)."""
    a = grid.algebra
    full = a.embed_first_layer(np.asarray(phi, dtype=float))
    return full[:-1], (full[1:] - full[:-1]) / grid.h


def first_variation(grid: ControlGrid, phi: Variation) -> np.ndarray:
    """``(phi(1), dF^2(phi), dF^3(phi))`` by direct bracket integration.

    Independent of the matrix assembly in :func:`endpoint_jacobian`.
    """
    a = _based(grid)
    h = grid.h
    B = a.bracket
    nodes = a.embed_first_layer(grid.nodes)
    u = a.embed_first_layer(grid.velocities)
    g0 = nodes[:-1]
    end1 = nodes[-1]
    F2 = a.project(endpoint_value(grid), 2)
    p, q = _segments(grid, phi.nodes)
    phi1 = a.embed_first_layer(phi.nodes[-1])
    # int [phi, u] and int [gamma, [phi, u]] on each segment
    i1 = (B(p, u) * h + B(q, u) * h**2 / 2).sum(0)
    i3 = (B(g0, B(p, u)) * h + (B(u, B(p, u)) + B(g0, B(q, u))) * h**2 / 2
          + B(u, B(q, u)) * h**3 / 3).sum(0)
    d2 = i1 + 0.5 * B(end1, phi1)
    d3 = (i3 + 0.5 * B(i1, end1) + 0.25 * B(2 * F2, phi1)
          + B(end1, B(end1, phi1)) / 12.0)
    return phi1 + a.project(d2, 2) + a.project(d3, 3)


def fixed_end_differential(grid: ControlGrid, phi: Variation) -> np.ndarray:
    """``(0, int [phi, gamma'], int [gamma - gamma(1)/2, [phi, gamma']])`` for ``phi(1) = 0``."""
    a = _based(grid)
    h = grid.h
    B = a.bracket
    nodes = a.embed_first_layer(grid.nodes)
    u = a.embed_first_layer(grid.velocities)
    g0 = nodes[:-1] - 0.5 * nodes[-1]
    p, q = _segments(grid, phi.nodes)
    i1 = (B(p, u) * h + B(q, u) * h**2 / 2).sum(0)
    i3 = (B(g0, B(p, u)) * h + (B(u, B(p, u)) + B(g0, B(q, u))) * h**2 / 2
          + B(u, B(q, u)) * h**3 / 3).sum(0)
    return a.project(i1, 2) + a.project(i3, 3)


def _segment_hessian(a: GradedAlgebra, g0, u, h, p, q, p2, q2):
    """Symmetrised second variation of one segment, for broadcastable inputs.

    ``g0`` is ``gamma - gamma(1)/2`` at the segment start, ``u`` its slope;
    ``(p, q)`` and ``(p2, q2)`` are start value and slope of the two variations.
    """
    B = a.bracket

    def skew(p, q, p2, q2):  # int [phi, psi']
        return B(p, q2) * h + B(q, q2) * h**2 / 2

    def nested(p, q, p2, q2):  # int [phi, [psi, u]]
        return (B(p, B(p2, u)) * h + (B(p, B(q2, u)) + B(q, B(p2, u))) * h**2 / 2
                + B(q, B(q2, u)) * h**3 / 3)

    def weighted(p, q, p2, q2):  # int [g, [phi, psi']]
        return (B(g0, B(p, q2)) * h + (B(g0, B(q, q2)) + B(u, B(p, q2))) * h**2 / 2
                + B(u, B(q, q2)) * h**3 / 3)

    two = 0.5 * (skew(p, q, p2, q2) + skew(p2, q2, p, q))
    three = (0.5 * (nested(p, q, p2, q2) + nested(p2, q2, p, q))
             + 0.5 * (weighted(p, q, p2, q2) + weighted(p2, q2, p, q)))
    return a.project(two, 2) + a.project(three, 3)


def hessian_value(grid: ControlGrid, phi: Variation, psi: Variation) -> np.ndarray:
    """Bilinear intrinsic Hessian ``d^2 E(phi, psi)`` by direct integration."""
    a = _based(grid)
    nodes = a.embed_first_layer(grid.nodes)
    u = a.embed_first_layer(grid.velocities)
    g0 = nodes[:-1] - 0.5 * nodes[-1]
    p, q = _segments(grid, phi.nodes)
    p2, q2 = _segments(grid, psi.nodes)
    return _segment_hessian(a, g0, u, grid.h, p, q, p2, q2).sum(0)


def _assemble_hessian(grid: ControlGrid, n: int) -> np.ndarray:
    a = grid.algebra
    n1, N, h = a.n1, grid.N, grid.h
    nodes = a.embed_first_layer(grid.nodes)
    u = a.embed_first_layer(grid.velocities)
    g0 = nodes[:-1] - 0.5 * nodes[-1]
    # local basis: start-node e_i (index i), end-node e_i (index n1 + i)
    m = 2 * n1
    P = np.zeros((m, n))
    Q = np.zeros((m, n))
    for i in range(n1):
        P[i, i], Q[i, i] = 1.0, -1.0 / h
        Q[n1 + i, i] = 1.0 / h
    loc = _segment_hessian(
        a,
        g0[:, None, None, :], u[:, None, None, :], h,
        P[None, :, None, :], Q[None, :, None, :],
        P[None, None, :, :], Q[None, None, :, :],
    )  # (N, m, m, n)
    H = np.zeros((n, (N + 1) * n1, (N + 1) * n1))
    for j in range(N):
        idx = np.r_[j * n1:(j + 2) * n1]
        H[:, idx[:, None], idx[None, :]] += loc[j].transpose(2, 0, 1)
    H = H[:, n1:, n1:]
    return 0.5 * (H + H.transpose(0, 2, 1))


def endpoint_hessian(jet: EndpointJet, phi: Variation, psi: Variation) -> np.ndarray:
    """Intrinsic Hessian of the end-point map on two kernel variations."""
    J = jet.jacobian
    scale = max(float(jet.singular_values[0]) if jet.singular_values.size else 0.0, 1.0)
    for v in (phi, psi):
        c = v.coords
        if c.size != J.shape[1]:
            raise ValueError("variation lives on a different grid")
        res = np.linalg.norm(J @ c) / (scale * max(np.linalg.norm(c), 1e-300))
        if res > 1e-6:
            raise ValueError(f"variation is not in the kernel (relative residual {res:.2e})")
    return hessian_value(jet.base, phi, psi)
