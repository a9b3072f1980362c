"""Graded (Carnot) Lie algebras of step <= 3 given by structure constants.

Vectors and covectors are plain ``numpy`` arrays of length ``n`` in the
construction basis ``e_1 .. e_n``; layer ``i`` occupies the contiguous block
``layer_slice(i)``.  Structure constants of the standard algebras are kept as
exact rationals next to their floating point copy so that the axioms can be
checked with zero tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import numpy as np

MAX_STEP = 3
FLOAT_AXIOM_TOL = 1e-12

ExactTable = dict[tuple[int, int], dict[int, Fraction]]


class AlgebraError(ValueError):
    """Invalid algebra data; carries the failed :class:`ValidationReport`."""

    def __init__(self, message: str, report: "ValidationReport | None" = None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class AxiomResult:
    name: str
    passed: bool
    worst: float
    where: tuple | None = None


@dataclass(frozen=True)
class ValidationReport:
    results: tuple[AxiomResult, ...]

    @property
    def ok(self) -> bool:
        return all(r.passed for r in self.results)

    def __getitem__(self, name: str) -> AxiomResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            r.name: {
                "passed": r.passed,
                "worst": r.worst,
                "where": None if r.where is None else [int(i) + 1 for i in r.where],
            }
            for r in self.results
        }


@dataclass(frozen=True, eq=False)
class GradedAlgebra:
    """Stratified nilpotent Lie algebra ``V^1 + ... + V^r``.

    ``struct_consts[i, j, k]`` is the coefficient of ``e_k`` in ``[e_i, e_j]``
    (0-based).  Instances are immutable; build them with the constructors in
    this module rather than directly.
    """

    layer_dims: tuple[int, ...]
    struct_consts: np.ndarray
    exact: ExactTable | None = None
    labels: tuple[str, ...] | None = None
    name: str = "custom"
    _layer_of: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        c = np.array(self.struct_consts, dtype=float)
        n = sum(self.layer_dims)
        if c.shape != (n, n, n):
            raise AlgebraError(f"structure constants must have shape {(n, n, n)}, got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "struct_consts", c)
        layer_of = np.repeat(np.arange(1, len(self.layer_dims) + 1), self.layer_dims)
        layer_of.setflags(write=False)
        object.__setattr__(self, "_layer_of", layer_of)

    # -- shape ---------------------------------------------------------------
    @property
    def step(self) -> int:
        return len(self.layer_dims)

    @property
    def n(self) -> int:
        return int(sum(self.layer_dims))

    @property
    def n1(self) -> int:
        return self.layer_dims[0]

    @property
    def layer_offsets(self) -> tuple[int, ...]:
        return tuple(int(x) for x in np.concatenate([[0], np.cumsum(self.layer_dims)[:-1]]))

    def layer_slice(self, i: int) -> slice:
        """Coordinate block of layer ``i`` (1-based)."""
        if not 1 <= i <= self.step:
            return slice(0, 0)
        start = self.layer_offsets[i - 1]
        return slice(start, start + self.layer_dims[i - 1])

    def layer_of(self, index: int) -> int:
        return int(self._layer_of[index])

    def basis(self, i: int) -> np.ndarray:
        """Unit vector ``e_i`` with a 1-based index, matching the usual notation."""
        v = np.zeros(self.n)
        v[i - 1] = 1.0
        return v

    def project(self, x: np.ndarray, i: int) -> np.ndarray:
        """Layer projection keeping full length (other layers zeroed)."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        s = self.layer_slice(i)
        out[..., s] = x[..., s]
        return out

    def embed_first_layer(self, v: np.ndarray) -> np.ndarray:
        """Pad a length-``n1`` vector to a full algebra vector."""
        v = np.asarray(v, dtype=float)
        if v.shape[-1] == self.n:
            return v
        if v.shape[-1] != self.n1:
            raise ValueError(f"expected a V^1 vector of length {self.n1} or {self.n}")
        out = np.zeros(v.shape[:-1] + (self.n,))
        out[..., : self.n1] = v
        return out

    # -- bracket -------------------------------------------------------------
    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise ValueError(
                f"vector of length {x.shape[-1]} does not belong to an algebra of dimension {self.n}"
            )
        return x

    def bracket(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Lie bracket ``[x, y]``; broadcasts over leading axes."""
        x, y = self._check(x), self._check(y)
        return np.einsum("...i,...j,ijk->...k", x, y, self.struct_consts)

    def ad(self, x: np.ndarray) -> np.ndarray:
        """Matrix of ``ad(x)`` so that ``ad(x) @ y == bracket(x, y)``."""
        x = self._check(x)
        return np.einsum("...i,ijk->...kj", x, self.struct_consts)

    def iterated_bracket(self, e: np.ndarray, f: np.ndarray, m: int) -> np.ndarray:
        """``ad(e)^m f`` with ``[e, f]_0 = f``."""
        if m < 0:
            raise ValueError("m must be non-negative")
        out = self._check(f).copy()
        for _ in range(min(m, self.step)):
            out = self.bracket(e, out)
        if m >= self.step:
            out = np.zeros_like(out)
        return out

    def summary(self) -> dict:
        return {"name": self.name, "step": self.step, "layer_dims": list(self.layer_dims), "n": self.n}


# -- exact helpers ------------------------------------------------------------

def _dense_from_exact(n: int, table: ExactTable) -> np.ndarray:
    c = np.zeros((n, n, n))
    for (i, j), row in table.items():
        for k, val in row.items():
            c[i, j, k] = float(val)
    return c


def _exact_bracket(table: ExactTable, x: Mapping[int, Fraction], y: Mapping[int, Fraction]) -> dict[int, Fraction]:
    out: dict[int, Fraction] = {}
    for i, xi in x.items():
        for j, yj in y.items():
            row = table.get((i, j))
            if not row:
                continue
            for k, c in row.items():
                out[k] = out.get(k, Fraction(0)) + xi * yj * c
    return {k: v for k, v in out.items() if v != 0}


def _as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, str):
        return Fraction(value.strip())
    return Fraction(value).limit_denominator(10**12)


def from_brackets(
    layer_dims: Sequence[int],
    brackets: Mapping[tuple[int, int], Mapping[int, object]],
    *,
    labels: Sequence[str] | None = None,
    name: str = "custom",
    check: bool = True,
) -> GradedAlgebra:
    """Build an algebra from brackets between basis elements.

    ``brackets`` maps 1-based ``(i, j)`` to ``{k: coefficient}``.  A pair given
    in one order only is completed by antisymmetry; a pair given in both orders
    is kept verbatim so that :func:`validate` can report the inconsistency.
    Coefficients may be ints, Fractions, floats or strings such as ``"1/2"``.
    """
    layer_dims = tuple(int(d) for d in layer_dims)
    if not layer_dims or any(d <= 0 for d in layer_dims):
        raise AlgebraError("layer_dims must be a non-empty list of positive integers")
    if len(layer_dims) > MAX_STEP:
        raise AlgebraError(f"step {len(layer_dims)} is not supported (maximum {MAX_STEP})")
    n = sum(layer_dims)
    table: ExactTable = {}
    given = set()
    for (i, j), row in brackets.items():
        i0, j0 = int(i) - 1, int(j) - 1
        if not (0 <= i0 < n and 0 <= j0 < n):
            raise AlgebraError(f"bracket index ({i}, {j}) out of range 1..{n}")
        clean = {}
        for k, v in row.items():
            k0 = int(k) - 1
            if not 0 <= k0 < n:
                raise AlgebraError(f"bracket target {k} out of range 1..{n}")
            f = _as_fraction(v)
            if f != 0:
                clean[k0] = f
        table[(i0, j0)] = clean
        given.add((i0, j0))
    for (i0, j0) in list(given):
        if (j0, i0) not in given:
            table[(j0, i0)] = {k: -v for k, v in table[(i0, j0)].items()}
    table = {key: row for key, row in table.items() if row}
    alg = GradedAlgebra(layer_dims, _dense_from_exact(n, table), exact=table,
                        labels=tuple(labels) if labels else None, name=name)
    if check:
        report = validate(alg)
        if not report.ok:
            failed = ", ".join(r.name for r in report.results if not r.passed)
            raise AlgebraError(f"algebra fails axioms: {failed}", report)
    return alg


# -- validation ---------------------------------------------------------------

def validate(a: GradedAlgebra) -> ValidationReport:
    """Check antisymmetry, Jacobi, grading and generation.

    Exact tables are checked in rational arithmetic (zero tolerance); float
    algebras use an absolute tolerance of ``1e-12``.
    """
    n, c = a.n, a.struct_consts
    tol = 0.0 if a.exact is not None else FLOAT_AXIOM_TOL
    results = []

    # antisymmetry
    if a.exact is not None:
        worst, where = 0.0, None
        for (i, j), row in a.exact.items():
            other = a.exact.get((j, i), {})
            for k in set(row) | set(other):
                d = abs(float(row.get(k, 0) + other.get(k, 0)))
                if d > worst:
                    worst, where = d, (min(i, j), max(i, j))
    else:
        sym = np.abs(c + c.transpose(1, 0, 2)).max(axis=2)
        worst = float(sym.max()) if n else 0.0
        where = tuple(int(v) for v in np.unravel_index(np.argmax(sym), sym.shape)) if worst > 0 else None
        if where is not None:
            where = (min(where), max(where))
    results.append(AxiomResult("antisymmetry", worst <= tol, worst, where))

    # Jacobi over all triples
    if a.exact is not None:
        worst, where = 0.0, None
        units = [{i: Fraction(1)} for i in range(n)]
        for i, j, k in combinations(range(n), 3):
            total: dict[int, Fraction] = {}
            for x, y, z in ((i, j, k), (j, k, i), (k, i, j)):
                term = _exact_bracket(a.exact, units[x], _exact_bracket(a.exact, units[y], units[z]))
                for key, v in term.items():
                    total[key] = total.get(key, Fraction(0)) + v
            d = max((abs(float(v)) for v in total.values()), default=0.0)
            if d > worst:
                worst, where = d, (i, j, k)
    else:
        # J[i,j,k,:] = [e_i,[e_j,e_k]] + cyclic
        inner = np.einsum("jkm,iml->ijkl", c, c)
        jac = inner + inner.transpose(1, 2, 0, 3) + inner.transpose(2, 0, 1, 3)
        mag = np.abs(jac).max(axis=3) if n else np.zeros((0, 0, 0))
        worst = float(mag.max()) if n else 0.0
        where = tuple(int(v) for v in np.unravel_index(np.argmax(mag), mag.shape)) if worst > tol else None
    results.append(AxiomResult("jacobi", worst <= tol, worst, where))

    # grading: [V^a, V^b] inside V^{a+b}
    lay = np.asarray(a._layer_of)
    target = lay[:, None] + lay[None, :]
    bad = np.abs(c) * (lay[None, None, :] != target[:, :, None])
    worst = float(bad.max()) if n else 0.0
    where = tuple(int(v) for v in np.unravel_index(np.argmax(bad), bad.shape)) if worst > tol else None
    results.append(AxiomResult("grading", worst <= tol, worst, where))

    # generation: [V^1, V^{i-1}] spans V^i
    worst, where = 0.0, None
    s1 = a.layer_slice(1)
    for i in range(2, a.step + 1):
        si, sp = a.layer_slice(i), a.layer_slice(i - 1)
        images = c[s1, sp, :][:, :, si].reshape(-1, a.layer_dims[i - 1])
        rank = np.linalg.matrix_rank(images, tol=1e-10) if images.size else 0
        deficit = a.layer_dims[i - 1] - rank
        if deficit > worst:
            worst, where = float(deficit), (i,)
    results.append(AxiomResult("generation", worst == 0, worst, where))
    return ValidationReport(tuple(results))


# -- standard algebras --------------------------------------------------------

def heisenberg(m: int = 1) -> GradedAlgebra:
    """Heisenberg algebra with basis ``e_1..e_m, f_1..f_m | g`` and ``[e_i, f_i] = g``."""
    if m < 1:
        raise AlgebraError("heisenberg(m) needs m >= 1")
    g = 2 * m + 1
    brackets = {(i, m + i): {g: 1} for i in range(1, m + 1)}
    labels = [f"e{i}" for i in range(1, m + 1)] + [f"f{i}" for i in range(1, m + 1)] + ["g"]
    return from_brackets([2 * m, 1], brackets, labels=labels, name=f"heisenberg({m})")


def engel() -> GradedAlgebra:
    """Engel algebra: ``[e1, e2] = e3``, ``[e1, e3] = e4``."""
    return from_brackets([2, 1, 1], {(1, 2): {3: 1}, (1, 3): {4: 1}},
                         labels=["e1", "e2", "e3", "e4"], name="engel")


def abelian(k: int) -> GradedAlgebra:
    return from_brackets([k], {}, labels=[f"e{i}" for i in range(1, k + 1)], name=f"abelian({k})")


def free_layer_dims(k: int, r: int) -> tuple[int, ...]:
    """Witt dimensions of the free nilpotent algebra up to degree ``r <= 3``."""
    dims = [k, k * (k - 1) // 2, (k**3 - k) // 3]
    return tuple(dims[:r])


def free(k: int, r: int = 3) -> GradedAlgebra:
    """Free Carnot algebra on ``k`` generators truncated at step ``r <= 3``.

    Layer 2 is ``E_ij = [e_i, e_j]`` (i < j); layer 3 is ``T_{a,ij} = [e_a, E_ij]``
    with ``a >= i``.  Brackets with ``a < i`` are rewritten by Jacobi as
    ``T_{i,aj} - T_{j,ai}``.
    """
    if k < 2:
        raise AlgebraError("free(k, r) needs k >= 2")
    if not 1 <= r <= MAX_STEP:
        raise AlgebraError(f"free(k, r) supports 1 <= r <= {MAX_STEP}, got r={r}")
    labels = [f"e{i}" for i in range(1, k + 1)]
    if r == 1:
        return from_brackets([k], {}, labels=labels, name=f"free({k},1)")
    idx = k + 1
    E = {}
    for i, j in combinations(range(1, k + 1), 2):
        E[(i, j)] = idx
        labels.append(f"[e{i},e{j}]")
        idx += 1
    brackets: dict[tuple[int, int], dict[int, int]] = {pair: {E[pair]: 1} for pair in E}
    dims = [k, len(E)]
    if r == 3:
        T = {}
        for (i, j) in E:
            for a in range(i, k + 1):
                T[(a, i, j)] = idx
                labels.append(f"[e{a},[e{i},e{j}]]")
                idx += 1
        dims.append(len(T))
        for (i, j), eij in E.items():
            for a in range(1, k + 1):
                if a >= i:
                    row = {T[(a, i, j)]: 1}
                else:
                    # a < i < j
                    row = {T[(i, a, j)]: 1, T[(j, a, i)]: -1}
                brackets[(a, eij)] = row
    return from_brackets(dims, brackets, labels=labels, name=f"free({k},{r})")


def construct_standard(kind: str, **params) -> GradedAlgebra:
    """Named constructor: ``heisenberg`` (m), ``engel``, ``free`` (k, r), ``abelian`` (k)."""
    kind = kind.lower()
    if kind == "heisenberg":
        return heisenberg(int(params.get("m", 1)))
    if kind == "engel":
        return engel()
    if kind == "free":
        return free(int(params.get("k", 2)), int(params.get("r", params.get("step", 3))))
    if kind == "abelian":
        return abelian(int(params.get("k", 2)))
    raise AlgebraError(f"unknown standard algebra {kind!r}")


# -- generated subalgebras ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class Subalgebra:
    """A Carnot subalgebra together with the linear map of its basis into the parent."""

    algebra: GradedAlgebra
    embedding: np.ndarray  # (parent.n, sub.n); column q is the parent coordinates of sub basis q
    parent: GradedAlgebra

    def to_parent(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.embedding.T

    def from_parent(self, y: np.ndarray) -> np.ndarray:
        """Coordinates in the subalgebra of a parent vector lying in its image."""
        y = np.asarray(y, dtype=float)
        sol, *_ = np.linalg.lstsq(self.embedding, y.T, rcond=None)
        return sol.T


def _greedy_independent(cands: Iterable[np.ndarray], start: list[np.ndarray], tol=1e-10) -> list[np.ndarray]:
    chosen: list[np.ndarray] = []
    basis = list(start)
    for v in cands:
        trial = np.array(basis + [v])
        scale = max(1.0, float(np.abs(trial).max()))
        if np.linalg.matrix_rank(trial, tol=tol * scale) > len(basis):
            chosen.append(v)
            basis.append(v)
    return chosen


def _orthonormal_span(vectors: np.ndarray, tol=1e-10) -> np.ndarray:
    """Gram-Schmidt in the given order, dropping dependent vectors."""
    out: list[np.ndarray] = []
    for v in vectors:
        w = v.astype(float).copy()
        for q in out:
            w -= (q @ w) * q
        norm = np.linalg.norm(w)
        if norm > tol * max(1.0, np.linalg.norm(v)):
            out.append(w / norm)
    return np.array(out)


def _rationalize(c: np.ndarray, max_den: int = 12, tol: float = 1e-13) -> ExactTable | None:
    table: ExactTable = {}
    n = c.shape[0]
    for i, j, k in zip(*np.nonzero(np.abs(c) > tol)):
        f = Fraction(float(c[i, j, k])).limit_denominator(max_den)
        if abs(float(f) - c[i, j, k]) > tol:
            return None
        table.setdefault((int(i), int(j)), {})[int(k)] = f
    return table


def subalgebra_generated(a: GradedAlgebra, W: Sequence[np.ndarray]) -> Subalgebra:
    """Carnot subalgebra generated by ``span(W)`` with ``W`` inside ``V^1``.

    The first layer gets an orthonormal basis of ``span(W)`` (Gram-Schmidt in
    the given order), so the restricted inner product stays the coordinate one.
    Higher layers use the first independent brackets ``[w_a, w_b]`` (a < b) and
    ``[w_a, x]`` with ``x`` in the chosen second-layer basis.
    """
    W = [a.embed_first_layer(np.asarray(w, dtype=float)) for w in W]
    if len(W) == 0:
        raise ValueError("W must contain at least one vector")
    Wm = np.array(W)
    if np.abs(Wm[:, a.n1:]).max(initial=0.0) > 1e-12:
        raise ValueError("W vectors must lie in the first layer")
    layer1 = _orthonormal_span(Wm)
    if len(layer1) == 0:
        raise ValueError("W spans the zero subspace")
    layers = [list(layer1)]
    if a.step >= 2:
        cands = [a.bracket(layer1[p], layer1[q]) for p, q in combinations(range(len(layer1)), 2)]
        layer2 = _greedy_independent(cands, [])
        if layer2:
            layers.append(layer2)
            if a.step >= 3:
                layer3 = _greedy_independent(_hall_order(layer1, layer2, a), [])
                if layer3:
                    layers.append(layer3)
    E = np.array([v for lay in layers for v in lay]).T
    dims = [len(lay) for lay in layers]
    m = E.shape[1]
    sub_c = np.zeros((m, m, m))
    for p in range(m):
        for q in range(m):
            v = a.bracket(E[:, p], E[:, q])
            if np.abs(v).max() == 0:
                continue
            x, *_ = np.linalg.lstsq(E, v, rcond=None)
            x[np.abs(x) < 1e-14] = 0.0
            sub_c[p, q] = x
    exact = _rationalize(sub_c)
    if exact is not None:
        sub_c = _dense_from_exact(m, exact)
    sub = GradedAlgebra(tuple(dims), sub_c, exact=exact, name=f"sub({a.name},dimW={dims[0]})")
    return Subalgebra(sub, E, a)


def _hall_order(layer1, layer2, a: GradedAlgebra):
    """Candidates for the third layer: ``[w_a, [w_i, w_j]]`` ordered as in :func:`free`."""
    pairs = list(combinations(range(len(layer1)), 2))
    out = []
    # layer2 entries that are plain brackets of first-layer pairs come first
    for x in layer2:
        owner = None
        for (i, j) in pairs:
            if np.allclose(a.bracket(layer1[i], layer1[j]), x, atol=1e-14):
                owner = i
                break
        start = owner if owner is not None else 0
        for w in range(start, len(layer1)):
            out.append(a.bracket(layer1[w], x))
    for x in layer2:
        for w in range(len(layer1)):
            out.append(a.bracket(layer1[w], x))
    return out
