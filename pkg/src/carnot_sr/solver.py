"""Energy minimisation under an end-point constraint, and normal shooting.

The direct solver works on the scaled controls ``x = u sqrt(h)`` so that the
energy is ``|x|^2 / 2``; the constraint gradient is the end-point Jacobian
pulled back from node variations to controls.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .algebra import GradedAlgebra
from .curves import ControlGrid, energy_length, lift
from .endpoint import _jacobian
from .extremals import Multiplier, flow_momenta, covector_to_momenta, normal_residual


@dataclass(frozen=True)
class SolveOptions:
    N: int = 256
    max_outer: int = 40
    penalty_growth: float = 10.0
    constraint_tol: float = 1e-8
    stationarity_tol: float = 1e-8
    multistart: int = 8
    seed: int = 0
    max_inner: int = 5000

    def __post_init__(self):
        if self.N < 1 or self.max_outer < 1 or self.multistart < 1:
            raise ValueError("N, max_outer and multistart must be positive")
        if min(self.constraint_tol, self.stationarity_tol) <= 0 or self.penalty_growth <= 1:
            raise ValueError("tolerances must be positive and penalty growth > 1")


@dataclass
class SolveResult:
    grid: ControlGrid
    energy: float
    residual: float
    multiplier: Multiplier
    kkt_residual: float
    status: str
    target: np.ndarray
    start_index: int = 0
    start_energies: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "energy": self.energy,
            "length": energy_length(self.grid)[1],
            "endpoint_residual": self.residual,
            "multiplier": self.multiplier.coords.tolist(),
            "kkt_residual": self.kkt_residual,
            "target": self.target.tolist(),
            "N": self.grid.N,
            "start_index": self.start_index,
            "start_energies": list(self.start_energies),
        }


class _Problem:
    """Constraint ``E(u) - target`` and its gradient in scaled controls."""

    def __init__(self, a: GradedAlgebra, target: np.ndarray, N: int):
        self.a, self.target, self.N = a, target, N
        self.h = 1.0 / N
        self.sq = np.sqrt(self.h)

    def grid(self, x) -> ControlGrid:
        return ControlGrid(self.a, x.reshape(self.N, self.a.n1) / self.sq)

    def evaluate(self, x):
        g = self.grid(x)
        value = lift(g, check=False).end
        Jn = _jacobian(g, value).reshape(self.a.n, self.N, self.a.n1)
        # control u_j moves every node after it by h
        Ju = self.h * np.cumsum(Jn[:, ::-1], axis=1)[:, ::-1]
        return value - self.target, Ju.reshape(self.a.n, -1) / self.sq

    def constraint(self, x):
        return lift(self.grid(x), check=False).end - self.target


def _starts(a: GradedAlgebra, target: np.ndarray, opts: SolveOptions) -> list[np.ndarray]:
    N, n1 = opts.N, a.n1
    t = (np.arange(N) + 0.5) / N
    base = np.tile(target[:n1], (N, 1))
    scale = float(np.linalg.norm(target))
    rng = np.random.default_rng(opts.seed)
    out = [base]
    for _ in range(opts.multistart - 1):
        pert = np.zeros((N, n1))
        for m in range(1, 4):
            c, s = rng.normal(size=(2, n1)) / m
            pert += np.outer(np.cos(2 * np.pi * m * t), c) + np.outer(np.sin(2 * np.pi * m * t), s)
        out.append(base + scale * pert)
    return [u.ravel() * np.sqrt(1.0 / N) for u in out]


def _augmented_lagrangian(prob: _Problem, x0: np.ndarray, opts: SolveOptions):
    """Returns ``(x, mu, constraint_norm, stationarity)``; ``mu`` is the multiplier estimate."""
    x = x0.copy()
    mu = np.zeros(prob.a.n)
    rho = 10.0
    tol = opts.constraint_tol * (1.0 + np.linalg.norm(prob.target))
    c_prev = np.inf

    def fun(x):
        c, Jx = prob.evaluate(x)
        nu = mu + rho * c
        return 0.5 * x @ x + mu @ c + 0.5 * rho * c @ c, x + Jx.T @ nu

    for _ in range(opts.max_outer):
        res = minimize(fun, x, jac=True, method="L-BFGS-B",
                       options={"maxiter": opts.max_inner, "gtol": 1e-11, "ftol": 1e-16, "maxcor": 30})
        x = res.x
        c, Jx = prob.evaluate(x)
        cn = float(np.linalg.norm(c))
        mu = mu + rho * c
        stat = float(np.linalg.norm(x + Jx.T @ mu)) / (1.0 + np.linalg.norm(x))
        if cn <= tol and stat <= opts.stationarity_tol:
            break
        if cn > 0.25 * c_prev:
            rho = min(rho * opts.penalty_growth, 1e10)
        c_prev = cn
    return x, mu, cn, stat


def _newton_polish(prob: _Problem, x, mu, iters: int = 4, eps: float = 1e-6):
    """Newton steps on the first-order system; the Lagrangian Hessian is a
    central difference of the analytic gradient."""

    def kkt(x, mu):
        c, Jx = prob.evaluate(x)
        return np.concatenate([x + Jx.T @ mu, c]), Jx

    r, Jx = kkt(x, mu)
    m, n = x.size, mu.size
    for _ in range(iters):
        H = np.empty((m, m))
        for k in range(m):
            d = np.zeros(m)
            d[k] = eps
            H[:, k] = (prob.evaluate(x + d)[1].T @ mu - prob.evaluate(x - d)[1].T @ mu) / (2 * eps)
        H = np.eye(m) + 0.5 * (H + H.T)
        K = np.block([[H, Jx.T], [Jx, np.zeros((n, n))]])
        step = np.linalg.lstsq(K, -r, rcond=None)[0]
        x_new, mu_new = x + step[:m], mu + step[m:]
        r_new, J_new = kkt(x_new, mu_new)
        if np.linalg.norm(r_new) >= np.linalg.norm(r):
            break
        x, mu, r, Jx = x_new, mu_new, r_new, J_new
    return x, mu


def solve_geodesic(a: GradedAlgebra, target, opts: SolveOptions | None = None) -> SolveResult:
    """Minimise the energy over curves from the identity whose end point is ``target``.

    Every start runs the augmented Lagrangian loop; the lowest-energy nearly
    feasible start is then polished by Newton steps on the first-order system.
    """
    opts = opts or SolveOptions()
    target = np.asarray(target, dtype=float)
    if target.shape != (a.n,):
        raise ValueError(f"target must have {a.n} coordinates")
    prob = _Problem(a, target, opts.N)
    tol = opts.constraint_tol * (1.0 + np.linalg.norm(target))
    loose = 1e-4 * (1.0 + np.linalg.norm(target))
    runs = []
    for k, x0 in enumerate(_starts(a, target, opts)):
        x, mu, cn, stat = _augmented_lagrangian(prob, x0, opts)
        runs.append((cn > loose, 0.5 * float(x @ x), k, x, mu, cn, stat))
    energies = [None if r[0] else r[1] for r in runs]
    _, _, k, x, mu, cn, stat = min(runs, key=lambda r: (r[0], r[1], r[2]))
    if cn <= loose and not (cn <= tol and stat <= opts.stationarity_tol):
        x, mu = _newton_polish(prob, x, mu)
        c, Jx = prob.evaluate(x)
        cn = float(np.linalg.norm(c))
        stat = float(np.linalg.norm(x + Jx.T @ mu)) / (1.0 + np.linalg.norm(x))
    status = "converged" if cn <= tol and stat <= opts.stationarity_tol else "failed"
    grid = prob.grid(x)
    lam = Multiplier(mu, True)
    return SolveResult(grid, energy_length(grid)[0], cn, lam, normal_residual(grid, lam),
                       status, target, k, energies)


# -- normal shooting -----------------------------------------------------------

def _shoot_map(a: GradedAlgebra, p, lams: np.ndarray, steps: int) -> np.ndarray:
    m0 = covector_to_momenta(a, p, lams)
    xs, _ = flow_momenta(a, p, m0, 1.0, steps)
    return xs[..., -1, :]


def shoot_to_target(a: GradedAlgebra, p, q, opts: SolveOptions | None = None):
    """Initial covector whose normal geodesic from ``p`` reaches ``q`` at time 1.

    Damped Gauss-Newton with a central-difference Jacobian, run on all starts
    at once.  Returns ``(lam0, residual, status)``; among converged starts the
    one with the smallest Hamiltonian is kept.
    """
    opts = opts or SolveOptions()
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    n, n1 = a.n, a.n1
    steps = opts.N
    scale = 1.0 + float(np.linalg.norm(q - p))
    rng = np.random.default_rng(opts.seed)
    guess = np.zeros(n)
    guess[:n1] = (q - p)[:n1]
    lam = np.vstack([guess] + [guess + rng.normal(size=n) * np.sqrt(scale) * 2.0
                               for _ in range(opts.multistart - 1)])
    S = lam.shape[0]
    eps = 1e-7
    ts = 0.5 ** np.arange(8)
    r = _shoot_map(a, p, lam, steps) - q
    active = np.ones(S, dtype=bool)
    E = np.eye(n)
    for _ in range(40):
        rn = np.linalg.norm(r, axis=1)
        active &= rn > 1e-12 * scale
        if not active.any():
            break
        idx = np.flatnonzero(active)
        probes = np.concatenate([lam[idx, None, :] + eps * E, lam[idx, None, :] - eps * E], axis=1)
        ends = _shoot_map(a, p, probes.reshape(-1, n), steps).reshape(len(idx), 2 * n, n)
        J = (ends[:, :n] - ends[:, n:]).transpose(0, 2, 1) / (2 * eps)
        step = np.stack([np.linalg.lstsq(J[i], -r[k], rcond=None)[0] for i, k in enumerate(idx)])
        trials = lam[idx, None, :] + ts[None, :, None] * step[:, None, :]
        rt = _shoot_map(a, p, trials.reshape(-1, n), steps).reshape(len(idx), len(ts), n) - q
        nt = np.linalg.norm(rt, axis=2)
        for i, k in enumerate(idx):
            better = np.flatnonzero(nt[i] < rn[k])
            if better.size == 0:
                active[k] = False
                continue
            j = better[0]
            lam[k], r[k] = trials[i, j], rt[i, j]
    rn = np.linalg.norm(r, axis=1)
    energy = 0.5 * np.sum(covector_to_momenta(a, p, lam)[:, :n1] ** 2, axis=1)
    ok = rn <= opts.constraint_tol
    order = sorted(range(S), key=lambda k: (not ok[k], energy[k] if ok[k] else rn[k], k))
    k = order[0]
    return lam[k], float(rn[k]), "converged" if ok[k] else "failed"


# -- minimality spot check --------------------------------------------------------

def compare_energy(result: SolveResult, trials: int = 100, seed: int = 0) -> dict:
    """Compare against random feasible competitors built by constrained projection."""
    a = result.grid.algebra
    N = result.grid.N
    prob = _Problem(a, result.target, N)
    rng = np.random.default_rng(seed)
    tol = 1e-10 * (1.0 + np.linalg.norm(result.target))
    x_ref = result.grid.velocities.ravel() * prob.sq
    amp = max(float(np.linalg.norm(x_ref)), 1.0)
    t = (np.arange(N) + 0.5) / N
    energies, failures = [], 0
    for _ in range(trials):
        u = np.tile(result.target[: a.n1], (N, 1))
        for m in range(1, 6):
            c, s = rng.normal(size=(2, a.n1)) / m
            u += amp * (np.outer(np.cos(2 * np.pi * m * t), c) + np.outer(np.sin(2 * np.pi * m * t), s))
        x = u.ravel() * prob.sq
        ok = False
        for _ in range(60):
            c, Jx = prob.evaluate(x)
            if np.linalg.norm(c) <= tol:
                ok = True
                break
            x = x - np.linalg.lstsq(Jx, c, rcond=None)[0]
            if not np.all(np.isfinite(x)):
                break
        if ok:
            energies.append(0.5 * float(x @ x))
        else:
            failures += 1
    best = min(energies) if energies else np.inf
    return {
        "energy": result.energy,
        "competitors": len(energies),
        "failures": failures,
        "min_competitor_energy": best,
        "passed": bool(result.energy <= best + 1e-9),
    }
