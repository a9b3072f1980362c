"""First- and second-order extremality tests and the normal Hamiltonian flow."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from .algebra import GradedAlgebra
from .curves import ControlGrid, HorizontalPath
from .endpoint import EndpointJet, endpoint_jacobian
from .group import dexp_apply, frame_matrix

GOH_TOL = 1e-9
LEGENDRE_TOL = 1e-9
MORSE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Multiplier:
    """Covector on the algebra; ``normal`` is the energy-coefficient flag."""

    coords: np.ndarray
    normal: bool = False

    def __post_init__(self):
        c = np.array(self.coords, dtype=float)
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    def block(self, a: GradedAlgebra, i: int) -> np.ndarray:
        return self.coords[a.layer_slice(i)]

    def normalized(self) -> "Multiplier":
        nrm = np.linalg.norm(self.coords)
        return self if nrm == 0 else Multiplier(self.coords / nrm, self.normal)

    def __neg__(self) -> "Multiplier":
        return Multiplier(-self.coords, self.normal)

    def to_dict(self) -> dict:
        return {"coords": self.coords.tolist(), "normal": self.normal}


@dataclass
class ExtremalReport:
    corank: int
    augmented_corank: int
    abnormal_basis: list[Multiplier]
    normal_multiplier: Multiplier | None
    normal_residual: float
    goh: list[tuple[bool, float]] = field(default_factory=list)
    legendre: list[tuple[bool, float, int]] = field(default_factory=list)
    morse_index: int = 0
    constant_speed: bool = True
    near_singular: bool = False
    notes: list[str] = field(default_factory=list)

    @property
    def singular(self) -> bool:
        return self.corank > 0

    @property
    def goh_passed(self) -> bool:
        return any(ok for ok, _ in self.goh)

    def to_dict(self) -> dict:
        return {
            "corank": self.corank,
            "augmented_corank": self.augmented_corank,
            "singular": self.singular,
            "near_singular": self.near_singular,
            "abnormal_basis": [m.coords.tolist() for m in self.abnormal_basis],
            "normal_multiplier": None if self.normal_multiplier is None else self.normal_multiplier.coords.tolist(),
            "normal_residual": self.normal_residual,
            "goh": [{"pass": ok, "violation": v} for ok, v in self.goh],
            "legendre": [{"pass": ok, "min_eig": m, "sign": s} for ok, m, s in self.legendre],
            "morse_index": self.morse_index,
            "constant_speed": self.constant_speed,
            "notes": list(self.notes),
        }


def _sign_fix(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v)))
    return -v if v[k] < 0 else v


def find_abnormal(jet: EndpointJet) -> list[Multiplier]:
    """Orthonormal covectors annihilating every column of the Jacobian."""
    L = jet.left_null
    if L.shape[1] == 1:
        return [Multiplier(_sign_fix(L[:, 0]))]
    return [Multiplier(c) for c in L.T]


# -- normal equation ----------------------------------------------------------

def _stiffness_cholesky(N: int, h: float):
    """Cholesky factor of ``tridiag(-1, 2, -1) / h`` on the ``N - 1`` interior nodes."""
    A = (np.diag(np.full(N - 1, 2.0)) - np.diag(np.ones(N - 2), 1) - np.diag(np.ones(N - 2), -1)) / h
    return cholesky(A, lower=True)


def _normal_system(grid: ControlGrid, jet: EndpointJet | None = None):
    a = grid.algebra
    if jet is None:
        jet = endpoint_jacobian(grid)
    N, n1 = grid.N, a.n1
    u = grid.velocities
    g = (u[:-1] - u[1:]).ravel()  # energy differential on interior hat functions
    G = jet.jacobian[n1:, : (N - 1) * n1]  # vertical rows, interior columns
    return g, G, jet


def _dual_norm(r: np.ndarray, L: np.ndarray, n1: int) -> float:
    R = r.reshape(-1, n1)
    W = solve_triangular(L, R, lower=True)
    return float(np.sqrt(np.sum(W * W)))


def normal_residual(grid: ControlGrid, lam: Multiplier | np.ndarray, jet: EndpointJet | None = None) -> float:
    """Relative dual-norm defect of the normal equation for a given multiplier.

    The functional ``phi -> int <gamma', phi'> + lam . dE(phi)`` on variations
    vanishing at both ends is measured in the norm dual to ``||phi'||_2`` and
    divided by ``||gamma'||_2``.
    """
    coords = lam.coords if isinstance(lam, Multiplier) else np.asarray(lam, dtype=float)
    a = grid.algebra
    if grid.N < 2:
        return 0.0
    g, G, _ = _normal_system(grid, jet)
    r = g + G.T @ coords[a.n1:]
    scale = np.sqrt(np.sum(grid.velocities**2) * grid.h)
    if scale == 0:
        return 0.0
    return _dual_norm(r, _stiffness_cholesky(grid.N, grid.h), a.n1) / scale


def find_normal(grid: ControlGrid, jet: EndpointJet | None = None) -> tuple[Multiplier, float]:
    """Least-squares normal multiplier ``(0, lam2, lam3)`` and its residual."""
    a = grid.algebra
    n1 = a.n1
    if grid.N < 2:
        return Multiplier(np.zeros(a.n), True), 0.0
    g, G, jet = _normal_system(grid, jet)
    L = _stiffness_cholesky(grid.N, grid.h)

    def whiten(x):
        cols = x.reshape(grid.N - 1, n1, -1)
        return solve_triangular(L, cols.reshape(grid.N - 1, -1), lower=True).reshape(-1, cols.shape[-1])

    Gw = whiten(G.T.reshape(-1, G.shape[0]))
    gw = whiten(g[:, None])[:, 0]
    lam_up = np.linalg.lstsq(Gw, -gw, rcond=None)[0] if G.shape[0] else np.zeros(0)
    coords = np.concatenate([np.zeros(n1), lam_up])
    lam = Multiplier(coords, True)
    return lam, normal_residual(grid, lam, jet)


# -- second-order conditions --------------------------------------------------

def is_constant_speed(grid: ControlGrid, rtol: float = 1e-8) -> bool:
    s = np.linalg.norm(grid.velocities, axis=1)
    return bool(np.ptp(s) <= rtol * max(s.max(), 1e-300))


def _speed_warning(grid: ControlGrid, who: str):
    if not is_constant_speed(grid):
        warnings.warn(f"{who}: curve is not parameterized at constant speed", RuntimeWarning, stacklevel=3)


def goh_check(grid: ControlGrid, lam: Multiplier) -> tuple[bool, float]:
    """Second-order Goh condition for a multiplier along the curve nodes."""
    _speed_warning(grid, "goh_check")
    a = grid.algebra
    lam = lam.normalized()
    nodes = a.embed_first_layer(grid.nodes)
    viol = float(np.linalg.norm(lam.block(a, 2))) if a.step >= 2 else 0.0
    if a.step >= 3:
        E = np.eye(a.n)[: a.n1]
        pairs = np.array([a.bracket(E[i], E[j]) for i in range(a.n1) for j in range(i + 1, a.n1)])
        if pairs.size:
            vals = a.bracket(nodes[:, None, :], pairs[None, :, :]) @ lam.coords
            viol = max(viol, float(np.abs(vals).max()))
    scale = max(1.0, float(np.abs(grid.nodes).max()))
    return viol <= GOH_TOL * scale, viol


def goh_subspace_test(a: GradedAlgebra, W) -> list[Multiplier]:
    """Covectors on the third layer annihilating ``[W, V^2]``, if that span is proper."""
    if a.step != 3:
        raise ValueError("the subspace test needs a step-3 algebra")
    W = np.atleast_2d(np.asarray(W, dtype=float))
    W = a.embed_first_layer(W[:, : a.n1]) if W.shape[1] != a.n else W
    V2 = np.eye(a.n)[a.layer_slice(2)]
    span = a.bracket(W[:, None, :], V2[None, :, :]).reshape(-1, a.n)[:, a.layer_slice(3)]
    d3 = a.layer_dims[2]
    if span.size == 0:
        null = np.eye(d3)
    else:
        U, s, _ = np.linalg.svd(span.T, full_matrices=True)
        r = int(np.sum(s > 1e-10 * max(s[0], 1e-300))) if s.size else 0
        null = U[:, r:]
    out = []
    for c in null.T:
        coords = np.zeros(a.n)
        coords[a.layer_slice(3)] = _sign_fix(c)
        out.append(Multiplier(coords))
    return out


def legendre_matrices(grid: ControlGrid, lam: Multiplier) -> np.ndarray:
    """Symmetrised ``Q_j[a, b] = lam3 [e_a, [e_b, u_j]]`` for every segment."""
    a = grid.algebra
    u = a.embed_first_layer(grid.velocities)
    E = np.eye(a.n)[: a.n1]
    inner = a.bracket(E[None, :, :], u[:, None, :])               # (N, n1, n): [e_b, u]
    outer = a.bracket(E[None, :, None, :], inner[:, None, :, :])  # (N, n1, n1, n)
    lam3 = np.zeros(a.n)
    if a.step >= 3:
        lam3[a.layer_slice(3)] = lam.block(a, 3)
    Q = outer @ lam3
    return 0.5 * (Q + Q.transpose(0, 2, 1))


def legendre_check(grid: ControlGrid, lam: Multiplier) -> tuple[bool, list[float], int]:
    """Pointwise semidefiniteness of ``a -> lam3 [a, [a, gamma']]`` with one global sign."""
    _speed_warning(grid, "legendre_check")
    lam = lam.normalized()
    Q = legendre_matrices(grid, lam)
    tol = LEGENDRE_TOL * max(1.0, float(np.abs(grid.velocities).max()))
    for sign in (1, -1):
        mins = np.linalg.eigvalsh(sign * Q)[:, 0]
        if np.all(mins >= -tol):
            return True, mins.tolist(), sign
    return False, np.linalg.eigvalsh(Q)[:, 0].tolist(), 1


def hessian_matrix(jet: EndpointJet, lam: Multiplier) -> np.ndarray:
    """Matrix of ``phi -> lam . d^2 E(phi, phi)`` on the kernel basis."""
    H = np.einsum("k,kmp->mp", lam.coords, jet.hessian_matrices())
    K = jet.kernel_matrix
    M = K.T @ H @ K
    return 0.5 * (M + M.T)


def morse_index(jet: EndpointJet, lam: Multiplier) -> int:
    if jet.kernel_matrix.shape[1] == 0:
        return 0
    eig = np.linalg.eigvalsh(hessian_matrix(jet, lam))
    top = float(np.abs(eig).max())
    if top == 0:
        return 0
    return int(np.sum(eig < -MORSE_TOL * top))


# -- normal Hamiltonian flow ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class FlowResult:
    path: HorizontalPath
    covectors: np.ndarray       # (steps + 1, n) in exponential coordinates
    momenta: np.ndarray         # (steps + 1, n) frame momenta lam . X_J(x)
    hamiltonian: np.ndarray     # (steps + 1,)

    @property
    def energy_drift(self) -> float:
        H = self.hamiltonian
        return float(np.abs(H - H[0]).max() / max(abs(H[0]), 1e-300))


def _flow_rhs(a: GradedAlgebra, C: np.ndarray, x: np.ndarray, m: np.ndarray, T: float):
    n1 = a.n1
    first = m[..., :n1]
    X = frame_matrix(a, x)[..., :, :n1]
    dx = T * np.einsum("...ji,...i->...j", X, first)
    # h_J' = {h_J, H} = sum_i h_i sum_k c[i, J, k] h_k
    dm = T * np.einsum("...i,ijk,...k->...j", first, C[:n1], m)
    return dx, dm


def flow_momenta(a: GradedAlgebra, p, m0, T: float = 1.0, steps: int = 1024):
    """RK4 on ``(x, frame momenta)`` rescaled to unit time; batches over leading axes."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    C = a.struct_consts
    x = np.broadcast_to(np.asarray(p, dtype=float), np.shape(m0)).copy()
    m = np.array(m0, dtype=float)
    dt = 1.0 / steps
    xs, ms = [x.copy()], [m.copy()]
    for _ in range(steps):
        k1 = _flow_rhs(a, C, x, m, T)
        k2 = _flow_rhs(a, C, x + 0.5 * dt * k1[0], m + 0.5 * dt * k1[1], T)
        k3 = _flow_rhs(a, C, x + 0.5 * dt * k2[0], m + 0.5 * dt * k2[1], T)
        k4 = _flow_rhs(a, C, x + dt * k3[0], m + dt * k3[1], T)
        x = x + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        m = m + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        xs.append(x.copy())
        ms.append(m.copy())
    return np.stack(xs, axis=-2), np.stack(ms, axis=-2)


def covector_to_momenta(a: GradedAlgebra, x, lam) -> np.ndarray:
    return np.einsum("...ji,...j->...i", frame_matrix(a, x), lam)


def momenta_to_covector(a: GradedAlgebra, x, m) -> np.ndarray:
    # frame_matrix(x)^{-1} is dexp(x), so lam = dexp(x)^T m
    n = a.n
    D = dexp_apply(a, np.asarray(x)[..., None, :], np.broadcast_to(np.eye(n), np.shape(x)[:-1] + (n, n)))
    return np.einsum("...ji,...i->...j", D, m)


def hamiltonian_flow(a: GradedAlgebra, p, lam0, T: float = 1.0, steps: int = 1024) -> FlowResult:
    """Normal geodesic from ``p`` with initial covector ``lam0``, on ``t`` in ``[0, 1]``.

    ``H(x, lam) = sum_{i <= n1} (lam . X_i(x))^2 / 2``; the time ``T`` scales the
    velocity so the curve has length ``T * sqrt(2 H)``.
    """
    p = np.asarray(p, dtype=float)
    m0 = covector_to_momenta(a, p, np.asarray(lam0, dtype=float))
    xs, ms = flow_momenta(a, p, m0, T, steps)
    lams = momenta_to_covector(a, xs, ms)
    H = 0.5 * np.sum(ms[:, : a.n1] ** 2, axis=1)
    grid = ControlGrid(a, np.diff(xs[:, : a.n1], axis=0) * steps, p)
    return FlowResult(HorizontalPath(grid, xs), lams, ms, H)
