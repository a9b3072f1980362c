"""Discretised first-layer curves and their horizontal lifts.

A :class:`ControlGrid` is a piecewise-linear curve on the uniform grid
``t_j = j / N`` with constant velocity ``u_j`` on each segment.  Within a
segment every lift integrand is a polynomial in the local time ``s``, so the
higher layers are obtained from exact antiderivatives.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from math import factorial
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .algebra import MAX_STEP, GradedAlgebra
from .group import bch_product, dexp_apply, project_first_layer


@dataclass(frozen=True, eq=False)
class ControlGrid:
    """First-layer curve with piecewise-constant derivative.

    ``velocities`` has shape ``(N, n1)``; ``basepoint`` is the starting group
    point (exponential coordinates, length ``n``).
    """

    algebra: GradedAlgebra
    velocities: np.ndarray
    basepoint: np.ndarray | None = None

    def __post_init__(self):
        u = np.array(self.velocities, dtype=float)
        if u.ndim != 2 or u.shape[1] != self.algebra.n1:
            raise ValueError(f"velocities must have shape (N, {self.algebra.n1}), got {u.shape}")
        if u.shape[0] < 1:
            raise ValueError("a control grid needs N >= 1 segments")
        u.setflags(write=False)
        object.__setattr__(self, "velocities", u)
        bp = np.zeros(self.algebra.n) if self.basepoint is None else np.array(self.basepoint, dtype=float)
        if bp.shape != (self.algebra.n,):
            raise ValueError("basepoint must be a full algebra vector")
        bp.setflags(write=False)
        object.__setattr__(self, "basepoint", bp)

    @property
    def N(self) -> int:
        return self.velocities.shape[0]

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.N + 1)

    @property
    def nodes(self) -> np.ndarray:
        """Node values of the first layer, shape ``(N + 1, n1)``."""
        start = project_first_layer(self.algebra, self.basepoint)
        steps = np.cumsum(self.velocities * self.h, axis=0)
        return np.vstack([start, start + steps])

    @property
    def is_based(self) -> bool:
        return not np.any(self.basepoint)

    @classmethod
    def from_nodes(cls, a: GradedAlgebra, nodes, basepoint=None) -> "ControlGrid":
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim != 2 or nodes.shape[0] < 2:
            raise ValueError("need at least two nodes")
        N = nodes.shape[0] - 1
        bp = np.zeros(a.n) if basepoint is None else np.array(basepoint, dtype=float)
        bp[: a.n1] = nodes[0]
        return cls(a, np.diff(nodes, axis=0) * N, bp)

    @classmethod
    def from_function(cls, a: GradedAlgebra, f: Callable[[np.ndarray], np.ndarray], N: int) -> "ControlGrid":
        """Sample ``f(t) -> (len(t), n1)`` at the nodes; ``f(0)`` must be the start."""
        t = np.linspace(0.0, 1.0, N + 1)
        return cls.from_nodes(a, np.asarray(f(t), dtype=float).reshape(N + 1, a.n1))

    @classmethod
    def line(cls, a: GradedAlgebra, v, N: int = 256) -> "ControlGrid":
        """The line ``t v`` through the identity."""
        v = np.asarray(v, dtype=float)[: a.n1]
        return cls(a, np.tile(v, (N, 1)))

    def with_velocities(self, u) -> "ControlGrid":
        return ControlGrid(self.algebra, u, self.basepoint)


@dataclass(frozen=True, eq=False)
class HorizontalPath:
    """Node samples ``Upsilon(t_j)`` (exponential coordinates) of a lifted curve."""

    grid: ControlGrid
    points: np.ndarray  # (N + 1, n)

    def layer(self, i: int) -> np.ndarray:
        return self.points[:, self.grid.algebra.layer_slice(i)]

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]


# -- polynomials in the local segment time ------------------------------------
# A polynomial is an array (..., deg + 1, n) of coefficient vectors of s^d.

def _pbracket(a: GradedAlgebra, P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    dp, dq = P.shape[-2], Q.shape[-2]
    shape = np.broadcast_shapes(P.shape[:-2], Q.shape[:-2]) + (dp + dq - 1, a.n)
    out = np.zeros(shape)
    for i in range(dp):
        for j in range(dq):
            out[..., i + j, :] += a.bracket(P[..., i, :], Q[..., j, :])
    return out


def _padd(*polys: np.ndarray) -> np.ndarray:
    deg = max(p.shape[-2] for p in polys)
    shape = np.broadcast_shapes(*(p.shape[:-2] for p in polys)) + (deg, polys[0].shape[-1])
    out = np.zeros(shape)
    for p in polys:
        out[..., : p.shape[-2], :] += p
    return out


def _pint(P: np.ndarray) -> np.ndarray:
    """Antiderivative vanishing at ``s = 0``."""
    d = P.shape[-2]
    out = np.zeros(P.shape[:-2] + (d + 1, P.shape[-1]))
    out[..., 1:, :] = P / np.arange(1, d + 1)[:, None]
    return out


def _peval(P: np.ndarray, s: float) -> np.ndarray:
    powers = s ** np.arange(P.shape[-2])
    return np.einsum("...dk,d->...k", P, powers)


def _const(x: np.ndarray) -> np.ndarray:
    return x[..., None, :]


def _segment_setup(grid: ControlGrid):
    a = grid.algebra
    nodes = a.embed_first_layer(grid.nodes)
    u = a.embed_first_layer(grid.velocities)
    return a, nodes, u


def lift(grid: ControlGrid, check: bool = True) -> HorizontalPath:
    """Horizontal lift by exact per-segment integration of the layer equations.

    With ``check`` the node recursion ``Y_{j+1} = Y_j exp(h u_j)`` is computed
    independently and must agree to ``1e-12`` relative.
    """
    a, nodes, u = _segment_setup(grid)
    if a.step > MAX_STEP:
        raise NotImplementedError(f"step {a.step} lifts are not supported")
    h, N = grid.h, grid.N
    start = grid.basepoint
    s2, s3 = a.layer_slice(2), a.layer_slice(3)

    G1 = np.stack([nodes[:-1], u], axis=-2)  # (N, 2, n)
    G1dot = _const(u)
    points = np.zeros((N + 1, a.n))
    points[:, : a.n1] = grid.nodes
    if a.step >= 2:
        rate2 = 0.5 * _pbracket(a, G1, G1dot)
        rate2[..., [i for i in range(a.n) if a.layer_of(i) != 2]] = 0.0
        inc2 = _pint(rate2)
        g2 = start[s2] + np.concatenate([[np.zeros(a.layer_dims[1])],
                                         np.cumsum(_peval(inc2, h)[:, s2], axis=0)])
        points[:, s2] = g2
    if a.step >= 3:
        b = np.zeros((N, a.n))
        b[:, s2] = g2[:-1]
        G2 = _padd(_const(b), inc2)
        rate3 = (0.5 * (_pbracket(a, G1, rate2) + _pbracket(a, G2, G1dot))
                 - _pbracket(a, G1, _pbracket(a, G1, G1dot)) / 6.0)
        inc3 = _peval(_pint(rate3), h)[:, s3]
        points[:, s3] = start[s3] + np.concatenate([[np.zeros(a.layer_dims[2])], np.cumsum(inc3, axis=0)])
    path = HorizontalPath(grid, points)
    if check:
        ref = lift_by_bch(grid).points
        scale = max(1.0, float(np.abs(ref).max()))
        err = float(np.abs(points - ref).max()) / scale
        if err > 1e-12:
            raise ArithmeticError(f"closed-form lift and BCH recursion disagree ({err:.3e})")
    return path


def lift_by_bch(grid: ControlGrid) -> HorizontalPath:
    """Node recursion through products of segment exponentials."""
    a = grid.algebra
    pts = np.zeros((grid.N + 1, a.n))
    pts[0] = grid.basepoint
    steps = a.embed_first_layer(grid.velocities) * grid.h
    for j in range(grid.N):
        pts[j + 1] = bch_product(a, pts[j], steps[j])
    return HorizontalPath(grid, pts)


def line_lift(a: GradedAlgebra, v, v0, basepoint=None, N: int = 256) -> HorizontalPath:
    """Closed-form lift of ``gamma^1(t) = v t + v0`` sampled at ``N + 1`` nodes.

    ``basepoint`` supplies the starting higher layers ``gamma^2(0)``,
    ``gamma^3(0)``; its first layer must be zero or equal ``v0``.  Then
    ``gamma^2' = [v0, v] / 2`` and
    ``gamma^3' = t [v, [v, v0]] / 6 + [v0, [v0, v]] / 12 + [gamma^2(0), v] / 2``.
    """
    v = a.embed_first_layer(np.asarray(v, dtype=float)[: a.n1])
    v0 = a.embed_first_layer(np.asarray(v0, dtype=float)[: a.n1])
    start = np.zeros(a.n) if basepoint is None else np.array(basepoint, dtype=float)
    first = start[: a.n1]
    if np.any(first) and not np.allclose(first, v0[: a.n1], atol=1e-14):
        raise ValueError("basepoint first layer conflicts with v0")
    start[: a.n1] = v0[: a.n1]
    t = np.linspace(0.0, 1.0, N + 1)[:, None]
    b = a.project(start, 2)
    pts = start + t * v
    if a.step >= 2:
        pts = pts + t * (0.5 * a.bracket(v0, v))
    if a.step >= 3:
        vv0 = a.bracket(v, a.bracket(v, v0))
        v0v = a.bracket(v0, a.bracket(v0, v))
        pts = pts + (t**2 / 12.0) * vv0 + (t / 12.0) * v0v + (t / 2.0) * a.bracket(b, v)
    grid = ControlGrid(a, np.tile(v[: a.n1], (N, 1)), start)
    return HorizontalPath(grid, pts)


def line_lift_rates(a: GradedAlgebra, v, v0, g2_start=None):
    """``(gamma^2', (c0, c1))`` for a line, with ``gamma^3'(t) = c0 + c1 t``."""
    v = a.embed_first_layer(np.asarray(v, dtype=float)[: a.n1])
    v0 = a.embed_first_layer(np.asarray(v0, dtype=float)[: a.n1])
    b = np.zeros(a.n) if g2_start is None else np.asarray(g2_start, dtype=float)
    rate2 = 0.5 * a.bracket(v0, v)
    c1 = a.bracket(v, a.bracket(v, v0)) / 6.0
    c0 = a.bracket(v0, a.bracket(v0, v)) / 12.0 + 0.5 * a.bracket(b, v)
    return rate2, (c0, c1)


def energy_length(grid: ControlGrid) -> tuple[float, float]:
    speeds = np.linalg.norm(grid.velocities, axis=1)
    return 0.5 * float(np.sum(speeds**2)) * grid.h, float(np.sum(speeds)) * grid.h


def horizontality_residual(path: HorizontalPath) -> float:
    """Largest defect of the layer equations at segment midpoints.

    For each segment the midpoint value and the difference quotient of the
    path are inserted into ``gamma' - sum (-1)^m/m! [gamma, gamma']_{m-1}``;
    the first-layer part is discarded.
    """
    a = path.grid.algebra
    if a.step == 1:
        return 0.0
    pts = path.points
    h = 1.0 / (pts.shape[0] - 1)
    mid = 0.5 * (pts[1:] + pts[:-1])
    vel = (pts[1:] - pts[:-1]) / h
    defect = dexp_apply(a, mid, vel)
    return float(np.abs(defect[:, a.n1:]).max())


def reparametrize_constant_speed(grid: ControlGrid) -> ControlGrid:
    """Move the nodes along the polygon so that all chords have equal length.

    Keeps ``N``, the start and the end node.  Nodes stay on the original
    polygon; corners not hit by a node are cut.
    """
    nodes = grid.nodes
    seg = np.diff(nodes, axis=0)
    lens = np.linalg.norm(seg, axis=1)
    total = float(lens.sum())
    if total <= 0.0:
        raise ValueError("cannot reparametrize a zero-length curve")
    if np.ptp(lens) <= 1e-12 * lens.mean():
        return grid
    cum = np.concatenate([[0.0], np.cumsum(lens)])
    N = grid.N

    def point_at(arc):
        k = min(int(np.searchsorted(cum, arc, side="right")) - 1, N - 1)
        k = max(k, 0)
        tau = 0.0 if lens[k] == 0 else (arc - cum[k]) / lens[k]
        return nodes[k] + tau * seg[k]

    def next_arc(arc, x, c):
        """Arc position of the first point after ``arc`` at distance ``c`` from ``x``."""
        k = max(min(int(np.searchsorted(cum, arc, side="right")) - 1, N - 1), 0)
        while k < N:
            if lens[k] == 0:
                k += 1
                continue
            lo = max(0.0, (arc - cum[k]) / lens[k])
            w = nodes[k] - x
            d = seg[k]
            A, B, C = d @ d, 2 * (w @ d), w @ w - c * c
            disc = B * B - 4 * A * C
            if disc >= 0:
                r = np.sqrt(disc)
                for root in sorted(((-B - r) / (2 * A), (-B + r) / (2 * A))):
                    if lo - 1e-15 <= root <= 1.0:
                        return cum[k] + max(root, lo) * lens[k]
            k += 1
        return np.inf

    def march(c):
        arc, x = 0.0, nodes[0]
        out = [x]
        for _ in range(N):
            arc = next_arc(arc, x, c)
            if not np.isfinite(arc):
                return np.inf, out
            x = point_at(arc)
            out.append(x)
        return arc, out

    def excess(c):
        arc, _ = march(c)
        return (total if not np.isfinite(arc) else arc) - total + (1.0 if not np.isfinite(arc) else 0.0)

    hi = total / N
    lo = hi * 1e-3
    while excess(lo) > 0:
        lo *= 1e-3
    if excess(hi) < 0:  # pragma: no cover - chords never exceed arc length
        hi = total
    c = brentq(excess, lo, hi, xtol=1e-15 * total, rtol=4 * np.finfo(float).eps, maxiter=500)
    _, pts = march(c)
    pts = np.array(pts[: N + 1])
    if len(pts) < N + 1:
        pts = np.vstack([pts, nodes[-1]])
    pts[-1] = nodes[-1]
    out = ControlGrid(grid.algebra, np.diff(pts, axis=0) * N, grid.basepoint)
    speeds = np.linalg.norm(out.velocities, axis=1)
    if np.ptp(speeds) > 1e-10 * speeds.mean():
        # the chord march jumps where a chord becomes tangent to a fold of the polygon
        warnings.warn("equal chords not attainable on this polygon; speeds vary by "
                      f"{np.ptp(speeds) / speeds.mean():.1e} relative", RuntimeWarning, stacklevel=2)
    return out


# -- layer equations as algebra identities ------------------------------------

def layer_rates(bracket, gamma: Sequence[np.ndarray], dgamma1: np.ndarray, step: int) -> list[np.ndarray]:
    """Rates ``gamma^i'`` for ``i = 2..step`` from the general graded recursion.

    ``gamma[i-1]`` is the value of layer ``i``; ``bracket`` is any bilinear map.
    Returns ``[gamma^1', gamma^2', ...]``.
    """
    rates = [np.asarray(dgamma1, dtype=float)]
    for i in range(2, step + 1):
        total = np.zeros_like(rates[0])
        for m in range(2, i + 1):
            coef = (-1) ** m / factorial(m)
            for js in _compositions(i, m):
                term = rates[js[-1] - 1]
                for j in reversed(js[:-1]):
                    term = bracket(gamma[j - 1], term)
                total = total + coef * term
        rates.append(total)
    return rates


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(1, total - parts + 2):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def explicit_rates(bracket, g1, g2, g3, dg1):
    """The written-out rates of layers 2, 3 and 4 in terms of lower layers."""
    B = bracket
    d2 = 0.5 * B(g1, dg1)
    d3 = 0.5 * (B(g1, d2) + B(g2, dg1)) - B(g1, B(g1, dg1)) / 6.0
    d4 = (0.5 * (B(g1, d3) + B(g2, d2) + B(g3, dg1))
          - (B(g1, B(g1, d2)) + B(g1, B(g2, dg1)) + B(g2, B(g1, dg1))) / 6.0
          + B(g1, B(g1, B(g1, dg1))) / 24.0)
    return d2, d3, d4
