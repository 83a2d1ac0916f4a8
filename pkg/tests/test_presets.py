import numpy as np
import pytest

from llhmm.errors import ConfigInvalid
from llhmm.grid import PeriodicGrid, is_unit
from llhmm.presets import get_coefficient, get_macro_field


def test_2d_coefficient_is_positive():
    a = get_coefficient("paper_2d", 2)
    assert a.a_min > 0


def test_const_and_expr():
    assert get_coefficient("const:3", 1).cell(np.array([0.2]))[0] == 3.0
    a = get_coefficient("expr:2 + sin(2*pi*y)", 1)
    assert a.cell(np.array([0.25]))[0] == pytest.approx(3.0)


def test_expr_must_be_periodic():
    with pytest.raises(ConfigInvalid):
        get_coefficient("expr:2 + sin(3*y)", 1)


def test_unknown_preset():
    with pytest.raises(ConfigInvalid):
        get_coefficient("nope", 1)
    with pytest.raises(ConfigInvalid):
        get_coefficient("paper_2d", 1)


def test_helix_values_and_derivatives():
    mf = get_macro_field("helix", 1)
    s = 1 / np.sqrt(2)
    np.testing.assert_allclose(mf.value0, [s, 0, s], atol=1e-15)
    # d/dx normalize(cos, sin, 1) at 0 = (0, 2 pi, 0)/sqrt(2)
    np.testing.assert_allclose(mf.gradient0, [[0, 2 * np.pi * s, 0]], atol=1e-13)
    # second derivative of cos(2 pi x)/sqrt(2) is -(2 pi)^2/sqrt(2); the norm is constant
    np.testing.assert_allclose(mf.hessian0[0, 0], [-(2 * np.pi) ** 2 * s, 0, 0], atol=1e-11)


def test_helix_sampled_unit():
    g = PeriodicGrid(1, 280)
    m = get_macro_field("helix", 1)(g.centered_axis())
    assert is_unit(m)
    assert np.max(np.abs(np.diff(m, axis=0))) < 2 * np.pi / 280


def test_expression_macro_field():
    mf = get_macro_field("expr:0;0;1", 1)
    np.testing.assert_array_equal(mf.value0, [0, 0, 1])
