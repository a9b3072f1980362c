import numpy as np
import pytest

from carnot_sr import engel, free, heisenberg
from carnot_sr.endpoint import endpoint_value
from carnot_sr.extremals import hamiltonian_flow
from carnot_sr.solver import SolveOptions, compare_energy, shoot_to_target, solve_geodesic

from conftest import standard_algebras


@pytest.fixture(scope="module")
def heisenberg_vertical():
    return solve_geodesic(heisenberg(1), [0.0, 0.0, np.pi], SolveOptions(N=128, multistart=4))


@pytest.mark.parametrize("a", standard_algebras(), ids=lambda a: a.name)
def test_first_layer_target_gives_line_energy(a, rng):
    v = rng.normal(size=a.n1)
    target = np.concatenate([v, np.zeros(a.n - a.n1)])
    res = solve_geodesic(a, target, SolveOptions(N=32, multistart=2))
    assert res.converged
    assert res.energy == pytest.approx(0.5 * v @ v, abs=1e-6)
    assert np.allclose(res.grid.velocities, v, atol=1e-5)
    assert res.kkt_residual <= 1e-5


def test_heisenberg_vertical_target(heisenberg_vertical):
    res = heisenberg_vertical
    assert res.converged
    assert res.energy == pytest.approx(2 * np.pi**2, abs=5e-3)
    assert res.energy >= 2 * np.pi**2 - 1e-9  # discrete curves cannot beat the circle
    assert np.abs(endpoint_value(res.grid) - [0, 0, np.pi]).max() <= 1e-8 * (1 + np.pi)
    assert res.kkt_residual <= 1e-5
    # the multiplier's vertical part matches the circle's
    assert abs(abs(res.multiplier.coords[2]) - 2 * np.pi) <= 0.05


def test_heisenberg_vertical_beats_competitors(heisenberg_vertical):
    cmp = compare_energy(heisenberg_vertical, trials=20, seed=3)
    assert cmp["competitors"] >= 15
    assert cmp["passed"]


def test_solution_is_nearly_constant_speed(heisenberg_vertical):
    s = np.linalg.norm(heisenberg_vertical.grid.velocities, axis=1)
    assert np.ptp(s) <= 1e-4 * s.mean()


def test_engel_generic_target():
    a = engel()
    target = np.array([0.4, 0.9, 0.2, -0.05])
    res = solve_geodesic(a, target, SolveOptions(N=48, multistart=4))
    assert res.converged and res.kkt_residual <= 1e-5
    # projecting to the first layer does not increase length
    assert res.energy >= 0.5 * target[:2] @ target[:2] - 1e-12


def test_solver_result_is_seeded():
    a = free(2, 3)
    target = np.array([0.3, 0.5, 0.1, 0.02, -0.03])
    o = SolveOptions(N=24, multistart=3, seed=5)
    r1, r2 = solve_geodesic(a, target, o), solve_geodesic(a, target, o)
    assert np.array_equal(r1.grid.velocities, r2.grid.velocities)
    d = r1.to_dict()
    assert d["status"] == r1.status and d["N"] == 24 and len(d["start_energies"]) == 3


def test_options_validation():
    with pytest.raises(ValueError):
        SolveOptions(N=0)
    with pytest.raises(ValueError):
        SolveOptions(penalty_growth=1.0)
    with pytest.raises(ValueError):
        solve_geodesic(heisenberg(1), [1.0, 0.0])


def test_shooting_reaches_flow_endpoint(rng):
    a = engel()
    lam0 = np.array([0.5, 0.8, 0.6, 0.4])
    q = hamiltonian_flow(a, np.zeros(4), lam0, steps=256).path.end
    lam, res, status = shoot_to_target(a, np.zeros(4), q, SolveOptions(N=256, multistart=4))
    assert status == "converged" and res <= 1e-8
    end = hamiltonian_flow(a, np.zeros(4), lam, steps=256).path.end
    assert np.abs(end - q).max() <= 1e-8


def test_shooting_heisenberg_vertical_energy():
    a = heisenberg(1)
    lam, res, status = shoot_to_target(a, np.zeros(3), [0, 0, np.pi], SolveOptions(N=256, multistart=8))
    assert res <= 1e-6
    H = 0.5 * (lam[0] ** 2 + lam[1] ** 2)
    assert H == pytest.approx(2 * np.pi**2, rel=1e-6)
