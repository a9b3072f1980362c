import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from carnot_sr import ControlGrid, abelian, engel, free, heisenberg, lift
from carnot_sr.curves import reparametrize_constant_speed
from carnot_sr.endpoint import corank, endpoint_jacobian
from carnot_sr.extremals import (
    Multiplier,
    covector_to_momenta,
    find_abnormal,
    find_normal,
    flow_momenta,
    goh_check,
    goh_subspace_test,
    hamiltonian_flow,
    hessian_matrix,
    is_constant_speed,
    legendre_check,
    legendre_matrices,
    momenta_to_covector,
    morse_index,
    normal_residual,
)
from carnot_sr.group import frame_matrix

from conftest import circle_nodes, smooth_grid, standard_algebras

STEP3 = [engel(), free(2, 3), free(3, 3)]


def _corner_grid(N):
    t = np.linspace(0, 1, N + 1)
    nodes = np.c_[np.minimum(t, 0.5), np.maximum(t - 0.5, 0.0)]
    return ControlGrid.from_nodes(heisenberg(1), nodes)


# -- abnormal multipliers --------------------------------------------------------

def test_engel_vertical_line_is_abnormal():
    g = ControlGrid.line(engel(), [0.0, 1.0], 64)
    (lam,) = find_abnormal(endpoint_jacobian(g))
    assert np.allclose(lam.coords, [0, 0, 0, 1], atol=1e-12)
    assert not lam.normal


@pytest.mark.parametrize("c", [(0.6, 0.8), (1.0, 0.0), (-0.28, 0.96)])
def test_free_line_abnormal_direction(c):
    g = ControlGrid.line(free(2, 3), c, 64)
    (lam,) = find_abnormal(endpoint_jacobian(g))
    expected = np.array([0, 0, 0, c[1], -c[0]])
    assert abs(abs(lam.coords @ expected) - 1.0) <= 1e-10


def test_regular_curve_has_no_abnormal(rng):
    g = smooth_grid(engel(), rng, N=32)
    assert find_abnormal(endpoint_jacobian(g)) == []


# -- normal multipliers ----------------------------------------------------------

@pytest.mark.parametrize("a", standard_algebras(), ids=lambda a: a.name)
def test_lines_are_normal_with_zero_multiplier(a, rng):
    v = rng.normal(size=a.n1)
    lam, res = find_normal(ControlGrid.line(a, v, 32))
    assert res <= 1e-12
    assert np.abs(lam.coords).max() <= 1e-10
    assert lam.normal


def test_circle_multiplier():
    a = heisenberg(1)
    g = ControlGrid.from_nodes(a, circle_nodes(128))
    lam, res = find_normal(g)
    # discrete circle is a discrete normal extremal up to O(h^2)
    assert res <= 1e-3
    assert abs(abs(lam.coords[2]) - 2 * np.pi) <= 1e-2 * 2 * np.pi


@pytest.mark.parametrize("N", [64, 128, 256])
def test_corner_curve_is_not_normal(N):
    _, res = find_normal(_corner_grid(N))
    assert res >= 0.1


def test_normal_residual_of_given_multiplier():
    g = ControlGrid.line(heisenberg(1), [1.0, 0.0], 16)
    assert normal_residual(g, np.zeros(3)) == 0.0
    assert normal_residual(g, np.array([0, 0, 1.0])) > 0.1


# -- Goh, Legendre, Morse ----------------------------------------------------------

def test_engel_vertical_line_second_order():
    g = ControlGrid.line(engel(), [0.0, 1.0], 64)
    jet = endpoint_jacobian(g)
    (lam,) = find_abnormal(jet)
    ok, viol = goh_check(g, lam)
    assert ok and viol == 0.0
    ok, mins, sign = legendre_check(g, lam)
    assert ok
    Q = legendre_matrices(g, lam)
    # the form is a multiple of a1^2 on every segment
    assert np.allclose(Q[:, 1, :], 0) and np.allclose(Q[:, :, 1], 0)
    assert np.all(sign * Q[:, 0, 0] > 0)
    assert morse_index(jet, lam) == 0
    assert morse_index(jet, lam) <= corank(jet) - 1 + 1


def test_goh_fails_for_layer_two_component():
    g = ControlGrid.line(engel(), [0.0, 1.0], 16)
    ok, viol = goh_check(g, Multiplier([0, 0, 1.0, 0]))
    assert not ok and viol == pytest.approx(1.0)


def test_goh_violation_on_free_planar_curve():
    a = free(2, 3)
    g = reparametrize_constant_speed(ControlGrid.from_nodes(a, circle_nodes(64)))
    ok, viol = goh_check(g, Multiplier([0, 0, 0, 1.0, 0]))
    assert not ok and viol > 0.1


def test_legendre_detects_indefinite_form():
    a = free(2, 3)
    g = reparametrize_constant_speed(ControlGrid.from_nodes(a, circle_nodes(64)))
    ok, mins, _ = legendre_check(g, Multiplier([0, 0, 0, 1.0, 0]))
    assert not ok


def test_speed_warning():
    a = engel()
    g = ControlGrid(a, [[0.0, 1.0], [0.0, 2.0]])
    assert not is_constant_speed(g)
    with pytest.warns(RuntimeWarning):
        goh_check(g, Multiplier([0, 0, 0, 1.0]))


def test_hessian_matrix_is_symmetric():
    g = ControlGrid.line(free(2, 3), [0.6, 0.8], 16)
    jet = endpoint_jacobian(g)
    (lam,) = find_abnormal(jet)
    M = hessian_matrix(jet, lam)
    assert np.allclose(M, M.T)
    assert morse_index(jet, lam) >= 0


@pytest.mark.parametrize("N", [128, 256])
def test_morse_index_mesh_stable(N):
    g = ControlGrid.line(engel(), [0.0, 1.0], N)
    jet = endpoint_jacobian(g)
    assert morse_index(jet, find_abnormal(jet)[0]) == 0


# -- Goh subspace test ----------------------------------------------------------------

def test_goh_subspace_examples():
    a = free(3, 3)
    out = goh_subspace_test(a, [[1, 0, 0], [0, 1, 0]])
    assert out and all(np.abs(m.coords).max() > 0 for m in out)
    for m in out:
        assert not np.any(m.block(a, 1)) and not np.any(m.block(a, 2))
    out = goh_subspace_test(engel(), [[0, 1]])
    assert len(out) == 1 and np.allclose(np.abs(out[0].coords), [0, 0, 0, 1])


@pytest.mark.parametrize("a", STEP3, ids=lambda a: a.name)
def test_goh_subspace_full_layer_is_empty(a):
    assert goh_subspace_test(a, np.eye(a.n1)) == []


def test_goh_subspace_annihilates_brackets():
    a = free(3, 3)
    W = np.array([[1.0, 0, 0], [0, 1.0, 0]])
    V2 = np.eye(a.n)[a.layer_slice(2)]
    for m in goh_subspace_test(a, W):
        vals = a.bracket(a.embed_first_layer(W)[:, None, :], V2[None]) @ m.coords
        assert np.abs(vals).max() <= 1e-12


def test_goh_subspace_needs_step_three():
    with pytest.raises(ValueError):
        goh_subspace_test(heisenberg(1), [[1, 0]])


# -- Hamiltonian flow ----------------------------------------------------------------

def _hamiltonian(a, x, lam):
    X = frame_matrix(a, x)[:, : a.n1]
    return 0.5 * np.sum((lam @ X) ** 2)


def test_heisenberg_circle_flow():
    a = heisenberg(1)
    f = hamiltonian_flow(a, np.zeros(3), [2 * np.pi, 0.0, 2 * np.pi], steps=1024)
    assert f.hamiltonian[0] == pytest.approx(2 * np.pi**2)
    assert np.allclose(f.path.end[:2], 0, atol=1e-10)
    assert f.path.end[2] == pytest.approx(np.pi, rel=1e-9)
    r = np.linalg.norm(f.path.points[:, :2] - [0, 1], axis=1)
    assert np.ptp(r) <= 1e-9


@pytest.mark.parametrize("a", standard_algebras(), ids=lambda a: a.name)
def test_flow_energy_conservation(a, rng):
    lam0 = rng.normal(size=a.n)
    f = hamiltonian_flow(a, np.zeros(a.n), lam0, steps=1024)
    assert f.energy_drift <= 1e-8


@pytest.mark.parametrize("a", standard_algebras(), ids=lambda a: a.name)
def test_flow_without_vertical_momentum_is_a_line(a, rng):
    v = rng.normal(size=a.n1)
    lam0 = np.concatenate([v, np.zeros(a.n - a.n1)])
    f = hamiltonian_flow(a, np.zeros(a.n), lam0, steps=1024)
    ref = lift(ControlGrid.line(a, v, 1024)).points
    assert np.abs(f.path.points - ref).max() <= 1e-8


@pytest.mark.parametrize("a", standard_algebras(), ids=lambda a: a.name)
def test_flow_output_is_recertified_normal(a, rng):
    lam0 = rng.normal(size=a.n)
    f = hamiltonian_flow(a, np.zeros(a.n), lam0, steps=512)
    _, res = find_normal(f.path.grid)
    assert res <= 1e-5


@pytest.mark.parametrize("a", standard_algebras(), ids=lambda a: a.name)
def test_flow_against_refined_reference(a, rng):
    lam0 = rng.normal(size=a.n)
    coarse = hamiltonian_flow(a, np.zeros(a.n), lam0, steps=256)
    fine = hamiltonian_flow(a, np.zeros(a.n), lam0, steps=1024)
    assert np.abs(coarse.path.end - fine.path.end).max() <= 1e-7 * max(1.0, np.abs(fine.path.end).max())


@pytest.mark.parametrize("a", standard_algebras(), ids=lambda a: a.name)
def test_flow_solves_canonical_equations(a, rng):
    """Finite differences of H(x, lam) in the original coordinates reproduce the flow."""
    lam0 = rng.normal(size=a.n) * 0.7
    steps = 2048
    f = hamiltonian_flow(a, rng.normal(size=a.n) * 0.3, lam0, steps=steps)
    dt = 1.0 / steps
    eps = 1e-6
    for j in (200, 1000, 1800):
        x, lam = f.path.points[j], f.covectors[j]
        dx = (f.path.points[j + 1] - f.path.points[j - 1]) / (2 * dt)
        dlam = (f.covectors[j + 1] - f.covectors[j - 1]) / (2 * dt)
        E = np.eye(a.n) * eps
        gx = np.array([(_hamiltonian(a, x + e, lam) - _hamiltonian(a, x - e, lam)) / (2 * eps) for e in E])
        gl = np.array([(_hamiltonian(a, x, lam + e) - _hamiltonian(a, x, lam - e)) / (2 * eps) for e in E])
        assert np.allclose(dx, gl, atol=1e-5)
        assert np.allclose(dlam, -gx, atol=1e-5)


def test_flow_time_scaling():
    a = engel()
    lam0 = np.array([0.3, -0.2, 0.5, 0.4])
    f2 = hamiltonian_flow(a, np.zeros(4), lam0, T=2.0, steps=1024)
    # doubling T runs the same geodesic for twice as long
    f1 = hamiltonian_flow(a, np.zeros(4), lam0, T=1.0, steps=512)
    assert np.allclose(f2.path.points[512], f1.path.points[-1], atol=1e-9)


def test_flow_rejects_zero_steps():
    with pytest.raises(ValueError):
        flow_momenta(heisenberg(1), np.zeros(3), np.ones(3), steps=0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(range(5)))
def test_covector_momenta_round_trip(seed, idx):
    rng = np.random.default_rng(seed)
    a = standard_algebras()[idx]
    x, lam = rng.normal(size=a.n), rng.normal(size=a.n)
    m = covector_to_momenta(a, x, lam)
    assert np.allclose(m[: a.n1], lam @ frame_matrix(a, x)[:, : a.n1])
    assert np.allclose(momenta_to_covector(a, x, m), lam, atol=1e-10)


def test_abelian_flow_is_straight():
    a = abelian(3)
    f = hamiltonian_flow(a, np.zeros(3), [1.0, 2.0, 3.0], steps=8)
    assert np.allclose(f.path.end, [1.0, 2.0, 3.0])
