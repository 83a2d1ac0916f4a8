import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from llhmm.errors import GridMismatch, GridTooCoarse
from llhmm.grid import (Coefficient, DiffusionOperator, PeriodicGrid, apply_L, constant_coefficient,
                        cross, dot, eval_coefficient, laplacian, normalize)
from llhmm.presets import get_coefficient

PAPER_1D = get_coefficient("paper_1d", 1, 1 / 140)


def test_coefficient_constant_value():
    assert eval_coefficient(constant_coefficient(2.0, 1), 0.37) == 2.0


def test_coefficient_at_origin():
    assert eval_coefficient(PAPER_1D, 0.0) == pytest.approx(1.0, abs=1e-15)


def test_coefficient_quarter_period():
    assert eval_coefficient(PAPER_1D, 1 / 560) == pytest.approx(1.5, abs=1e-12)


def test_coefficient_rejects_nonpositive():
    with pytest.raises(ValueError):
        Coefficient(lambda y: np.sin(2 * np.pi * y), 1)


def test_grid_axes():
    g = PeriodicGrid(2, 8, 2.0)
    assert g.h == 0.25 and g.shape == (8, 8) and g.cell_volume == 0.0625
    assert g.centered_axis()[0] == 0.0 and g.centered_axis()[4] == -1.0
    assert g.integrate(np.ones(g.shape)) == pytest.approx(4.0)


def test_constant_field_is_annihilated():
    g = PeriodicGrid(1, 1120)
    u = np.full(g.shape + (3,), 0.3)
    assert np.max(np.abs(apply_L(u, g, PAPER_1D))) == 0.0


def _sine_error(n):
    g = PeriodicGrid(1, n, 2.0)
    x = g.axis()
    u = np.sin(2 * np.pi * x / 2.0)
    Lu = apply_L(u, g, constant_coefficient(1.0, 1))
    return np.max(np.abs(Lu + (2 * np.pi / 2.0) ** 2 * u))


def test_laplacian_halving_ratio():
    ratio = _sine_error(64) / _sine_error(128)
    assert ratio == pytest.approx(4.0, rel=0.01)


@given(arrays(np.float64, (40,), elements=st.floats(-1, 1)))
def test_conservation(u):
    g = PeriodicGrid(1, 40)
    Lu = apply_L(u, g, PAPER_1D.with_epsilon(1 / 5))
    assert abs(g.cell_volume * Lu.sum()) <= 1e-10 * max(1.0, np.linalg.norm(u))


@given(arrays(np.float64, (12, 12), elements=st.floats(-1, 1)),
       arrays(np.float64, (12, 12), elements=st.floats(-1, 1)))
def test_self_adjoint_2d(u, v):
    g = PeriodicGrid(2, 12)
    op = DiffusionOperator(g, get_coefficient("paper_2d", 2, 0.5), resolution=None)
    lhs, rhs = np.sum(u * op(v)), np.sum(v * op(u))
    scale = np.linalg.norm(u) * np.linalg.norm(op(v)) + 1e-300
    assert abs(lhs - rhs) <= 1e-10 * max(scale, 1.0)


def test_constant_coefficient_equals_scaled_laplacian(rng):
    g = PeriodicGrid(2, 16)
    u = rng.normal(size=g.shape + (3,))
    a = apply_L(u, g, constant_coefficient(2.5, 2))
    b = 2.5 * laplacian(u, g)
    assert np.max(np.abs(a - b)) <= 1e-14 * np.max(np.abs(b))


def test_second_order_smooth_coefficient():
    coef = Coefficient(lambda y: 2 + np.cos(2 * np.pi * y), 1)
    errs, hs = [], []
    for n in (32, 64, 128, 256):
        g = PeriodicGrid(1, n)
        x = g.axis()
        u = np.sin(2 * np.pi * x)
        # d/dx((2 + cos)(2 pi cos)) with analytic derivatives
        a, ap = 2 + np.cos(2 * np.pi * x), -2 * np.pi * np.sin(2 * np.pi * x)
        exact = ap * 2 * np.pi * np.cos(2 * np.pi * x) - a * (2 * np.pi) ** 2 * u
        errs.append(np.max(np.abs(apply_L(u, g, coef, resolution=None) - exact)))
        hs.append(g.h)
    rate = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert 1.8 <= rate <= 2.2


def test_grid_too_coarse():
    with pytest.raises(GridTooCoarse):
        DiffusionOperator(PeriodicGrid(1, 100), PAPER_1D)


def test_grid_mismatch():
    with pytest.raises(GridMismatch):
        apply_L(np.zeros((10, 3)), PeriodicGrid(1, 12), constant_coefficient(1.0, 1))


def test_cross_basics():
    ex, ey, ez = np.eye(3)
    assert np.array_equal(cross(ex[None], ey[None])[0], ez)
    u = np.array([[0.3, -1.2, 2.0]])
    assert np.all(cross(u, u) == 0)


@given(arrays(np.float64, (5, 3), elements=st.floats(-10, 10)),
       arrays(np.float64, (5, 3), elements=st.floats(-10, 10)))
def test_cross_orthogonal(u, v):
    w = cross(u, v)
    tol = 1e-12 * (1 + np.linalg.norm(u, axis=-1) ** 2 * np.linalg.norm(v, axis=-1))
    assert np.all(np.abs(dot(u, w)) <= tol)


def test_energy_matches_inner_product(rng):
    g = PeriodicGrid(1, 64)
    op = DiffusionOperator(g, PAPER_1D.with_epsilon(1 / 8))
    m = normalize(rng.normal(size=(64, 3)))
    assert op.energy(m) == pytest.approx(-g.cell_volume * np.sum(m * op(m)), rel=1e-12)
