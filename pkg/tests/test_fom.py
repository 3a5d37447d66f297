import numpy as np
import pytest

from conservative_rom.cases import Problem, default_config
from conservative_rom.fem import BoundarySpec, HenckyVonMises
from conservative_rom.fom import (
    SolverError, algebraic_residual, saddle_point_matrix, solve_hencky, solve_linear,
)

from conftest import ALL_SIDES

SAMPLE_INSTANCE = (1.311, 1.601, 0.540, -0.646)


@pytest.fixture(scope="module")
def hencky():
    return Problem(default_config("hencky"))


@pytest.fixture(scope="module")
def footing():
    return Problem(default_config("footing"))


def test_footing_instance_satisfies_constraints(footing):
    mu = np.ones(4)
    sol = footing.solve(mu)
    f = footing.rhs(mu)
    res = footing.B @ sol.sigma - f
    nc = footing.mesh.num_cells
    assert np.abs(res).max() <= 1e-12 * np.abs(f).max()
    assert np.abs(res[2 * nc:]).max() <= 1e-12 * np.abs(f).max()
    assert sol.residual_history[-1] < 1e-10


def test_saddle_point_matrix_is_symmetric(footing):
    K = saddle_point_matrix(footing.disc.assemble(1.0, 0.5))
    assert abs(K - K.T).max() <= 1e-14 * abs(K).max()


def test_linear_solve_is_deterministic(footing):
    system = footing.disc.assemble(0.3, 1.7, *footing.fields([1.2, 0.8, 0.3, 1.7]))
    a, b = solve_linear(system), solve_linear(system)
    assert np.array_equal(a.sigma, b.sigma) and np.array_equal(a.u, b.u)
    assert algebraic_residual(system, a) < 1e-12


def test_pure_traction_problem_is_rejected():
    # rigid motions would make the saddle-point system singular
    with pytest.raises(ValueError):
        BoundarySpec((), ALL_SIDES)


def test_hencky_degenerate_beta(hencky):
    mu = np.array([1.7, 2.0, 0.4, -0.8])
    f_u, g_u = hencky.fields(mu)
    it = solve_hencky(hencky.disc, HenckyVonMises(1.7, 2.0), f_u, g_u)
    lin = solve_linear(hencky.disc.assemble(2.0, 0.0, f_u, g_u))
    assert it.iterations == 1
    assert np.abs(it.sigma - lin.sigma).max() <= 1e-12 * np.abs(lin.sigma).max()


def test_hencky_zero_data(hencky):
    sol = hencky.solve([1.5, 0.5, 0.0, 0.0])
    assert sol.iterations == 1
    assert not sol.sigma.any()


def test_hencky_sample_instance(hencky):
    sol = hencky.solve(SAMPLE_INSTANCE)
    hist = sol.residual_history
    assert hist[-1] < 1e-10
    assert all(b < a for a, b in zip(hist, hist[1:]))
    f = hencky.rhs(SAMPLE_INSTANCE)
    assert np.abs(hencky.B @ sol.sigma - f).max() <= 1e-11 * np.abs(f).max()

    # one more fixed-point step barely moves the stress
    law = hencky.law(SAMPLE_INSTANCE)
    mu, lam = hencky.disc.lame_from_stress(sol.sigma, law)
    f_u, g_u = hencky.fields(SAMPLE_INSTANCE)
    again = solve_linear(hencky.disc.assemble(mu, lam, f_u, g_u))
    change = hencky.disc.sigma_norm(again.sigma - sol.sigma) / hencky.disc.sigma_norm(sol.sigma)
    assert change < 1e-10


def test_hencky_reports_nonconvergence(hencky):
    f_u, g_u = hencky.fields(SAMPLE_INSTANCE)
    with pytest.raises(SolverError):
        solve_hencky(hencky.disc, HenckyVonMises(1.311, 1.601), f_u, g_u, maxiter=1)


def test_hencky_solutions_satisfy_constraints(hencky):
    for mu in hencky.config.sample(3, 5):
        sol = hencky.solve(mu)
        f = hencky.rhs(mu)
        assert np.abs(hencky.B @ sol.sigma - f).max() <= 1e-11 * np.abs(f).max()
