import numpy as np
import pytest
from hypothesis import given, strategies as st

from llhmm.cell import compute_AH, conjugate_gradient, harmonic_mean, sample_on_cell, solve_cell
from llhmm.errors import NoConvergence
from llhmm.grid import Coefficient, PeriodicGrid
from llhmm.presets import get_coefficient

REFERENCE_2D_AH = np.array([[0.61720765, 0.02618130], [0.02618130, 0.71523722]])


@pytest.fixture(scope="module")
def sol2d():
    return solve_cell(get_coefficient("paper_2d", 2), 256)


@pytest.mark.parametrize("dim", [1, 2])
def test_constant_coefficient(dim):
    sol = solve_cell(get_coefficient("const:1.7", dim), 32)
    assert np.max(np.abs(sol.chi)) == 0.0
    np.testing.assert_allclose(sol.AH, 1.7 * np.eye(dim), rtol=1e-15)


def test_1d_flux_is_constant():
    sol = solve_cell(get_coefficient("paper_1d", 1), 1024)
    g = sol.g[0, 0]
    assert (g.max() - g.min()) / g.mean() <= 1e-6


def test_1d_harmonic_mean():
    a = get_coefficient("paper_1d", 1)
    sol = solve_cell(a, 2048)
    assert abs(sol.AH[0, 0] - harmonic_mean(a)) <= 1e-8
    # independent oracle: adaptive quadrature of 1/a
    from scipy.integrate import quad
    oracle = 1 / quad(lambda y: 1 / a.cell(np.array([y]))[0], 0, 1, epsabs=1e-14, limit=200)[0]
    assert abs(sol.AH[0, 0] - oracle) <= 1e-8


def test_2d_reference_tensor(sol2d):
    np.testing.assert_allclose(sol2d.AH, REFERENCE_2D_AH, atol=1e-3)
    # the match is in fact much closer than the acceptance tolerance
    np.testing.assert_allclose(sol2d.AH, REFERENCE_2D_AH, atol=5e-7)


def test_2d_zero_mean_and_residual(sol2d):
    assert np.max(np.abs(sol2d.chi.mean(axis=(1, 2)))) < 1e-12
    assert max(sol2d.residuals) <= 1e-10 * 1.01
    assert np.max(np.abs(sol2d.divergence_g())) < 1e-6
    assert sol2d.asymmetry < 1e-12


def test_gauge_invariance(sol2d):
    shifted = type(sol2d)(sol2d.grid, sol2d.coef, sol2d.chi + np.array([3.0, -1.5])[:, None, None],
                          sol2d.AH, sol2d.asymmetry, sol2d.iterations, sol2d.residuals)
    assert np.max(np.abs(compute_AH(shifted) - compute_AH(sol2d))) <= 1e-12


def test_voigt_reuss_bounds(sol2d):
    a = sol2d.coef.cell(*sol2d.grid.coords())
    lam = np.linalg.eigvalsh(sol2d.AH)
    assert 1 / np.mean(1 / a) <= lam.min() and lam.max() <= np.mean(a)


@given(st.floats(0.1, 0.9), st.integers(1, 3))
def test_voigt_reuss_random_1d(amp, k):
    a = Coefficient(lambda y: 1 + amp * np.sin(2 * np.pi * k * y), 1)
    sol = solve_cell(a, 64)
    y = sol.grid.coords(offsets=(0.5,))[0]
    av = a.cell(y)
    assert 1 / np.mean(1 / av) - 1e-12 <= sol.AH[0, 0] <= np.mean(av)


def test_2d_mesh_convergence_rate():
    a = get_coefficient("paper_2d", 2)
    ns = [16, 32, 64, 128]
    A = [solve_cell(a, n).AH for n in ns + [256]]
    diffs = [np.max(np.abs(A[i] - A[i + 1])) for i in range(len(ns))]
    rate = np.polyfit(np.log(1 / np.array(ns)), np.log(diffs), 1)[0]
    assert 1.8 <= rate <= 2.2


def test_cg_reports_stall():
    A = np.diag([1.0, 10.0, 100.0, 1000.0])
    with pytest.raises(NoConvergence):
        conjugate_gradient(lambda x: A @ x - (A @ x).mean() * 0, np.array([1.0, 1.0, -1.0, -1.0]),
                           rtol=1e-14, maxiter=1)


def test_sample_on_cell():
    g = PeriodicGrid(1, 8)
    f = np.arange(8.0)
    vals, exact = sample_on_cell(f, g, [np.array([0.25, 1.125])])
    assert exact and list(vals) == [2.0, 1.0]
    vals, exact = sample_on_cell(f, g, [np.array([0.3125])])
    assert not exact and vals[0] == pytest.approx(2.5)
