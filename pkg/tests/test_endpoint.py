import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from carnot_sr import ControlGrid, engel, free, heisenberg
from carnot_sr.endpoint import (
    Variation,
    corank,
    endpoint_hessian,
    endpoint_jacobian,
    endpoint_kernel,
    endpoint_value,
    first_variation,
    fixed_end_differential,
    hessian_value,
)

from conftest import smooth_grid, standard_algebras

ALGEBRAS = standard_algebras()
IDS = [a.name for a in ALGEBRAS]


def _random_variation(rng, N, n1, fixed_end=False):
    v = np.vstack([np.zeros(n1), rng.normal(size=(N, n1))])
    if fixed_end:
        v[-1] = 0.0
    return Variation(v)


def _shift(grid, phi, s):
    return endpoint_value(ControlGrid.from_nodes(grid.algebra, grid.nodes + s * phi.nodes))


def _kernel_conditions(grid, phi):
    """Residuals of phi(1) = 0, int [phi, u] = 0 and int [gamma, [phi, u]] = 0, via quadrature."""
    a = grid.algebra
    B = a.bracket
    s, w = np.polynomial.legendre.leggauss(4)
    s, w = (s + 1) / 2, w / 2
    nodes = a.embed_first_layer(grid.nodes)
    pn = a.embed_first_layer(phi.nodes)
    u = a.embed_first_layer(grid.velocities)
    r1 = np.zeros(a.n)
    r3 = np.zeros(a.n)
    for sk, wk in zip(s, w):
        gam = nodes[:-1] + sk * (nodes[1:] - nodes[:-1])
        ph = pn[:-1] + sk * (pn[1:] - pn[:-1])
        r1 += wk * grid.h * B(ph, u).sum(0)
        r3 += wk * grid.h * B(gam, B(ph, u)).sum(0)
    return np.abs(phi.nodes[-1]).max(), np.abs(r1).max(), np.abs(r3).max()


@pytest.mark.parametrize("a", ALGEBRAS, ids=IDS)
def test_jacobian_matches_central_differences(a, rng):
    for _ in range(3):
        g = smooth_grid(a, rng, N=16)
        J = endpoint_jacobian(g).jacobian
        eps = 1e-6
        for col in rng.choice(J.shape[1], size=8, replace=False):
            c = np.zeros(J.shape[1])
            c[col] = 1.0
            phi = Variation.from_coords(c, a.n1)
            fd = (_shift(g, phi, eps) - _shift(g, phi, -eps)) / (2 * eps)
            assert np.abs(fd - J[:, col]).max() <= 1e-6 * max(1.0, np.abs(J[:, col]).max())


@pytest.mark.parametrize("a", ALGEBRAS, ids=IDS)
def test_jacobian_matches_direct_first_variation(a, rng):
    g = smooth_grid(a, rng, N=24)
    J = endpoint_jacobian(g).jacobian
    for _ in range(5):
        phi = _random_variation(rng, g.N, a.n1)
        direct = first_variation(g, phi)
        assert np.abs(J @ phi.coords - direct).max() <= 1e-12 * max(1.0, np.abs(direct).max())


@pytest.mark.parametrize("a", ALGEBRAS, ids=IDS)
def test_fixed_end_specialization(a, rng):
    g = smooth_grid(a, rng, N=24)
    J = endpoint_jacobian(g).jacobian
    for _ in range(5):
        phi = _random_variation(rng, g.N, a.n1, fixed_end=True)
        assert phi.fixed_end
        special = fixed_end_differential(g, phi)
        assert np.abs(J @ phi.coords - special).max() <= 1e-12 * max(1.0, np.abs(special).max())


@pytest.mark.parametrize("a", ALGEBRAS, ids=IDS)
def test_kernel_vectors_satisfy_conditions(a, rng):
    g = smooth_grid(a, rng, N=16)
    jet = endpoint_jacobian(g)
    basis = endpoint_kernel(jet)
    assert len(basis) == g.N * a.n1 - jet.rank
    for phi in basis:
        assert max(_kernel_conditions(g, phi)) <= 1e-9


@pytest.mark.parametrize("a", ALGEBRAS, ids=IDS)
def test_hessian_matches_second_differences(a, rng):
    g = smooth_grid(a, rng, N=16)
    jet = endpoint_jacobian(g)
    K = jet.kernel_matrix
    eps = 1e-3
    for _ in range(3):
        phi = Variation.from_coords(K @ rng.normal(size=K.shape[1]), a.n1)
        sd = (_shift(g, phi, eps) - 2 * jet.value + _shift(g, phi, -eps)) / eps**2
        hv = endpoint_hessian(jet, phi, phi)
        assert np.abs(sd - hv).max() <= 1e-4 * max(1.0, np.abs(hv).max())


@pytest.mark.parametrize("a", ALGEBRAS, ids=IDS)
def test_hessian_assembly_matches_direct_form(a, rng):
    g = smooth_grid(a, rng, N=12)
    jet = endpoint_jacobian(g)
    H = jet.hessian_matrices()
    phi = _random_variation(rng, g.N, a.n1, fixed_end=True)
    psi = _random_variation(rng, g.N, a.n1, fixed_end=True)
    direct = hessian_value(g, phi, psi)
    assembled = np.einsum("m,kmp,p->k", phi.coords, H, psi.coords)
    assert np.allclose(assembled, direct, rtol=1e-12, atol=1e-12)
    form = jet.hessian_form()
    assert form.shape == (a.n, jet.kernel_matrix.shape[1], jet.kernel_matrix.shape[1])
    assert np.allclose(form, form.transpose(0, 2, 1))


def test_hessian_rejects_non_kernel_variation(rng):
    g = smooth_grid(engel(), rng, N=8)
    jet = endpoint_jacobian(g)
    phi = _random_variation(rng, g.N, 2)
    with pytest.raises(ValueError):
        endpoint_hessian(jet, phi, phi)


def test_engel_vertical_line_corank_one():
    a = engel()
    g = ControlGrid.line(a, [0.0, 1.0], 64)
    jet = endpoint_jacobian(g)
    assert corank(jet) == 1
    ln = jet.left_null[:, 0]
    assert np.allclose(np.abs(ln), [0, 0, 0, 1], atol=1e-12)
    # the image is everything but the top coordinate
    assert np.abs(jet.jacobian[3]).max() <= 1e-13
    assert np.linalg.matrix_rank(jet.jacobian[:3]) == 3


@pytest.mark.parametrize("a", ALGEBRAS, ids=IDS)
def test_constant_curve_has_first_layer_image(a):
    g = ControlGrid(a, np.zeros((10, a.n1)))
    jet = endpoint_jacobian(g)
    assert jet.rank == a.n1
    assert corank(jet) == a.n - a.n1
    assert not np.any(jet.value)


@pytest.mark.parametrize("N", [32, 64, 128])
def test_corank_is_mesh_independent(N):
    assert corank(endpoint_jacobian(ControlGrid.line(engel(), [0.0, 1.0], N))) == 1
    assert corank(endpoint_jacobian(ControlGrid.line(engel(), [0.6, 0.8], N))) == 0
    assert corank(endpoint_jacobian(ControlGrid.line(free(2, 3), [0.6, 0.8], N))) == 1
    assert corank(endpoint_jacobian(ControlGrid.line(heisenberg(1), [1.0, 0.0], N))) == 0


def test_augmented_corank_counts_energy_row():
    a = heisenberg(1)
    jet = endpoint_jacobian(ControlGrid.line(a, [1.0, 0.0], 16))
    # a line is normal: the energy row lies in the row space of the jacobian
    assert corank(jet, augmented=True) == 1
    assert np.linalg.matrix_rank(np.vstack([jet.energy_row, jet.jacobian]), tol=1e-9) == 3


def test_summary_and_errors():
    a = heisenberg(1)
    jet = endpoint_jacobian(ControlGrid.line(a, [1.0, 0.0], 8))
    s = jet.summary()
    assert s["rank"] == 3 and s["corank"] == 0 and s["kernel_dim"] == 16 - 3
    moved = ControlGrid(a, np.ones((4, 2)), basepoint=[1.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        endpoint_jacobian(moved)
    with pytest.raises(ValueError):
        Variation(np.ones((3, 2)))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(range(len(ALGEBRAS))), st.floats(-3, 3))
def test_jacobian_is_linear_and_consistent(seed, idx, scale):
    rng = np.random.default_rng(seed)
    a = ALGEBRAS[idx]
    g = smooth_grid(a, rng, N=8)
    J = endpoint_jacobian(g).jacobian
    phi = _random_variation(rng, g.N, a.n1)
    psi = _random_variation(rng, g.N, a.n1)
    combo = Variation(phi.nodes + scale * psi.nodes)
    lhs = first_variation(g, combo)
    rhs = first_variation(g, phi) + scale * first_variation(g, psi)
    assert np.allclose(lhs, rhs, rtol=1e-11, atol=1e-11)
    assert np.allclose(J @ combo.coords, lhs, rtol=1e-11, atol=1e-11)
