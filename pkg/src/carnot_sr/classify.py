"""Reduction of singular candidates to smaller generated subgroups.

A singular curve whose first layer stays in a proper subspace ``W`` is
re-expressed in the Carnot subalgebra generated by ``W``; the recursion ends
at lines, step-2 algebras, rank-2 step-3 algebras, or curves that are regular
in their subgroup.  Multipliers found at the bottom are extended back to the
top algebra and re-checked there.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import GradedAlgebra, Subalgebra, subalgebra_generated
from .curves import ControlGrid, energy_length, reparametrize_constant_speed
from .endpoint import corank, endpoint_jacobian
from .extremals import (
    ExtremalReport,
    Multiplier,
    find_abnormal,
    find_normal,
    goh_check,
    is_constant_speed,
    legendre_check,
    morse_index,
    normal_residual,
)

NORMAL_TOL = 1e-5
SUBSPACE_TOL = 1e-9
MEMBERSHIP_TOL = 1e-8

TERMINAL_LABELS = ("normal-by-line", "normal-by-step2", "rank2-engel-type", "rank2-free-type",
                   "regular-in-subgroup", "inconclusive")


def spanning_subspace(grid: ControlGrid, tol: float = SUBSPACE_TOL) -> tuple[np.ndarray, int]:
    """Orthonormal rows spanning the first-layer directions visited by the curve."""
    X = grid.nodes
    n1 = X.shape[1]
    size = float(np.abs(X).max())
    if size == 0.0:
        return np.zeros((0, n1)), 0
    _, s, Vt = np.linalg.svd(X, full_matrices=True)
    d = int(np.sum(s > tol * s[0]))
    # widen until every node is within the membership tolerance
    while d < n1:
        W = Vt[:d]
        off = X - (X @ W.T) @ W
        if np.abs(off).max() <= MEMBERSHIP_TOL * size:
            break
        d += 1
    return Vt[:d].copy(), d


@dataclass(frozen=True)
class Rank2Type:
    kind: str  # "step1", "step2", "engel_type", "free_type"
    direction: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {"kind": self.kind, "direction": None if self.direction is None else self.direction.tolist()}


def rank2_classify(a: GradedAlgebra) -> Rank2Type:
    """Type of a rank-2 Carnot algebra; Engel type carries its singular direction."""
    if a.n1 != 2:
        raise ValueError("rank2_classify needs a two-dimensional first layer")
    if a.step <= 2:
        return Rank2Type(f"step{a.step}")
    d3 = a.layer_dims[2]
    if d3 == 2:
        return Rank2Type("free_type")
    # v -> ad(v) restricted to V^2 -> V^3, as a (d3 * d2) x 2 matrix in v
    s2, s3 = a.layer_slice(2), a.layer_slice(3)
    A = np.stack([a.struct_consts[i][s2, s3].T.ravel() for i in range(2)], axis=1)
    _, _, Vt = np.linalg.svd(A)
    v = Vt[-1]
    k = int(np.argmax(np.abs(v)))
    return Rank2Type("engel_type", v if v[k] > 0 else -v)


def multiplier_extend(a: GradedAlgebra, sub: GradedAlgebra, embedding, mu, nu) -> Multiplier:
    """Extend covectors on the sub's second and third layers by zero on the
    orthogonal complements of their images."""
    E = np.asarray(embedding, dtype=float)
    if E.shape != (a.n, sub.n):
        raise ValueError(f"embedding must have shape ({a.n}, {sub.n}), got {E.shape}")
    coords = np.zeros(a.n)
    for layer, cov in ((2, mu), (3, nu)):
        if layer > sub.step:
            if cov is not None and np.any(cov):
                raise ValueError(f"subalgebra has no layer {layer}")
            continue
        cols = E[:, sub.layer_slice(layer)]
        off = np.delete(cols, np.r_[a.layer_slice(layer)], axis=0) if layer <= a.step else cols
        if np.abs(off).max(initial=0.0) > 1e-10:
            raise ValueError("embedding does not respect the grading")
        cov = np.zeros(cols.shape[1]) if cov is None else np.asarray(cov, dtype=float)
        if cov.shape != (cols.shape[1],):
            raise ValueError(f"layer-{layer} covector has wrong length")
        B = cols[a.layer_slice(layer)]
        coords[a.layer_slice(layer)] = B @ np.linalg.solve(B.T @ B, cov)
    return Multiplier(coords, True)


def extend_to_parent(sub: Subalgebra, lam: Multiplier) -> Multiplier:
    s = sub.algebra
    mu = lam.block(s, 2) if s.step >= 2 else None
    nu = lam.block(s, 3) if s.step >= 3 else None
    return multiplier_extend(sub.parent, s, sub.embedding, mu, nu)


@dataclass
class Stage:
    algebra: GradedAlgebra
    grid: ControlGrid
    W: np.ndarray
    dim_W: int
    corank: int
    verdict: str  # terminal label or "descend"
    multiplier: Multiplier | None = None
    residual: float | None = None
    rank2_type: Rank2Type | None = None
    rank2_consistent: bool | None = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "algebra": self.algebra.name,
            "layer_dims": list(self.algebra.layer_dims),
            "W": self.W.tolist(),
            "dim_W": self.dim_W,
            "corank": self.corank,
            "verdict": self.verdict,
            "multiplier": None if self.multiplier is None else self.multiplier.coords.tolist(),
            "residual": self.residual,
            "rank2_type": None if self.rank2_type is None else self.rank2_type.to_dict(),
            "rank2_consistent": self.rank2_consistent,
            "notes": list(self.notes),
        }


@dataclass
class ReductionChain:
    stages: list[Stage]
    verdict: str          # "normal", "not-normal" or "inconclusive"
    singular: bool
    multiplier: Multiplier | None
    residual: float | None

    @property
    def terminal(self) -> str:
        return self.stages[-1].verdict

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "singular": self.singular,
            "terminal": self.terminal,
            "multiplier": None if self.multiplier is None else self.multiplier.coords.tolist(),
            "residual": self.residual,
            "stages": [s.to_dict() for s in self.stages],
        }


def _goh_candidates(grid: ControlGrid, abnormal: list[Multiplier]) -> list[Multiplier]:
    """Unit multipliers in the abnormal span that satisfy the linear Goh constraints."""
    a = grid.algebra
    if not abnormal:
        return []
    B = np.array([m.coords for m in abnormal]).T  # (n, c)
    rows = [np.eye(a.n)[a.layer_slice(2)]] if a.step >= 2 else []
    if a.step >= 3:
        nodes = a.embed_first_layer(grid.nodes)
        E = np.eye(a.n)[: a.n1]
        pairs = [a.bracket(E[i], E[j]) for i in range(a.n1) for j in range(i + 1, a.n1)]
        if pairs:
            P = np.array(pairs)
            # covector rows l with l . lam = lam . [x_t, [e_a, e_b]]
            rows.append(a.bracket(nodes[:, None, :], P[None, :, :]).reshape(-1, a.n))
    if not rows:
        return list(abnormal)
    C = np.vstack(rows) @ B
    scale = max(1.0, float(np.abs(grid.nodes).max()))
    _, s, Vt = np.linalg.svd(C, full_matrices=True)
    r = int(np.sum(s > 1e-9 * scale))
    out = []
    for v in Vt[r:]:
        lam = B @ v
        k = int(np.argmax(np.abs(lam)))
        out.append(Multiplier(lam if lam[k] > 0 else -lam))
    return out


def _analyse(a: GradedAlgebra, grid: ControlGrid):
    jet = endpoint_jacobian(grid)
    k = corank(jet)
    report = ExtremalReport(
        corank=k,
        augmented_corank=corank(jet, augmented=True),
        abnormal_basis=[],
        normal_multiplier=None,
        normal_residual=float("nan"),
        constant_speed=is_constant_speed(grid),
        near_singular=jet.near_singular,
    )
    if k > 0:
        abnormal = find_abnormal(jet)
        report.abnormal_basis = abnormal
        candidates = _goh_candidates(grid, abnormal) or abnormal
        for lam in candidates:
            report.goh.append(goh_check(grid, lam))
        best = next((lam for lam, (ok, _) in zip(candidates, report.goh) if ok), candidates[0])
        ok, prof, sign = legendre_check(grid, best)
        report.legendre.append((ok, float(min(prof)) if prof else 0.0, sign))
        report.morse_index = morse_index(jet, Multiplier(sign * best.coords))
    return jet, report


def _classify(a: GradedAlgebra, grid: ControlGrid, stages: list[Stage], depth: int):
    """Append stages for ``grid`` in ``a``; return ``(multiplier, report)`` at this level."""
    jet, report = _analyse(a, grid)
    W, d = spanning_subspace(grid)
    stage = Stage(a, grid, W, d, report.corank, "inconclusive")
    if a.n1 == 2 and a.step == 3:
        stage.rank2_type = rank2_classify(a)
    stages.append(stage)

    if report.corank == 0:
        lam, res = find_normal(grid, jet)
        stage.verdict, stage.multiplier, stage.residual = "regular-in-subgroup", lam, res
        return lam, report

    if d <= 1:
        lam = Multiplier(np.zeros(a.n), True)
        stage.verdict, stage.multiplier = "normal-by-line", lam
        stage.residual = normal_residual(grid, lam, jet)
        if stage.rank2_type is not None and stage.rank2_type.kind == "engel_type" and d == 1:
            stage.rank2_consistent = bool(abs(abs(W[0] @ stage.rank2_type.direction) - 1.0) < 1e-8)
        elif stage.rank2_type is not None and stage.rank2_type.kind == "free_type":
            stage.rank2_consistent = True
        return lam, report

    if d < a.n1:
        sub = subalgebra_generated(a, list(W))
        E1 = sub.embedding[: a.n1, : sub.algebra.n1]
        sub_grid = ControlGrid.from_nodes(sub.algebra, grid.nodes @ E1)
        stage.verdict = "descend"
        sub_lam, _ = _classify(sub.algebra, sub_grid, stages, depth + 1)
        lam = extend_to_parent(sub, sub_lam)
        stage.multiplier = lam
        stage.residual = normal_residual(grid, lam, jet)
        return lam, report

    # the curve spans the whole first layer
    lam, res = find_normal(grid, jet)
    stage.multiplier, stage.residual = lam, res
    if a.step <= 2:
        stage.verdict = "normal-by-step2"
    elif stage.rank2_type is not None:
        stage.verdict = "rank2-" + stage.rank2_type.kind.replace("_", "-")
        # singular rank-2 step-3 curves spanning V^1 are never minimizing
        stage.rank2_consistent = False
        stage.notes.append("singular curve spans the first layer; singular geodesics here are lines")
    elif not report.goh_passed:
        stage.verdict = "inconclusive"
        stage.notes.append("singular spanning curve with no multiplier passing the Goh test")
    else:
        stage.verdict = "inconclusive"
        stage.notes.append("Goh multiplier on a spanning curve: contradiction candidate (tolerance issue)")
    return lam, report


def classify_curve(a: GradedAlgebra, grid: ControlGrid) -> tuple[ExtremalReport, ReductionChain]:
    """Classify a based curve: regular or singular, and normal if a certificate exists."""
    b = grid.algebra
    if b is not a and not (b.layer_dims == a.layer_dims and np.array_equal(b.struct_consts, a.struct_consts)):
        raise ValueError("grid belongs to a different algebra")
    if not grid.is_based:
        raise ValueError("classify_curve needs a curve based at the identity")
    length = energy_length(grid)[1]
    cs = reparametrize_constant_speed(grid) if length > 0 else grid
    stages: list[Stage] = []
    lam, report = _classify(a, cs, stages, 0)
    top = stages[0]
    residual = normal_residual(cs, lam) if lam is not None else None
    report.normal_multiplier, report.normal_residual = lam, residual if residual is not None else float("nan")
    singular = report.corank > 0
    terminal = stages[-1].verdict
    if terminal == "inconclusive" and singular:
        verdict = "inconclusive"
    elif residual is not None and residual <= NORMAL_TOL:
        verdict = "normal"
    elif not singular:
        verdict = "not-normal"
    else:
        verdict = "inconclusive"
    if top is not stages[-1]:
        report.notes.append(f"reduced through {len(stages) - 1} generated subalgebra(s)")
    return report, ReductionChain(stages, verdict, singular, lam, residual)
