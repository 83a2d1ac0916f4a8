import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from llhmm.errors import DegenerateData, FixedPointDiverged
from llhmm.grid import DiffusionOperator, PeriodicGrid, constant_coefficient, unit_deviation
from llhmm.micro import (EnergyObserver, LLState, StepControl, UnitObserver, advance, integrate,
                         llg_rhs, max_stable_dt, restrict_initial_data, solve_window, step)
from llhmm.presets import get_coefficient, get_macro_field

from conftest import unit_field


def small_op(n=8, value=1.0):
    return DiffusionOperator(PeriodicGrid(1, n), constant_coefficient(value, 1))


def helix_data(n):
    return restrict_initial_data(get_macro_field("helix", 1), PeriodicGrid(1, n))


def dense_rhs(M, m, alpha):
    Lm = M @ m
    mxL = np.cross(m, Lm)
    return -mxL - alpha * np.cross(m, mxL)


def dense_reference(m0, M, alpha, T):
    def f(t, y):
        return dense_rhs(M, y.reshape(-1, 3), alpha).ravel()
    sol = solve_ivp(f, (0, T), m0.ravel(), method="DOP853", rtol=1e-13, atol=1e-14)
    return sol.y[:, -1].reshape(-1, 3)


def test_rhs_vanishes_on_constant_field():
    op = DiffusionOperator(PeriodicGrid(1, 64), get_coefficient("paper_1d", 1, 1 / 8))
    m = np.tile([0.6, 0.0, 0.8], (64, 1))
    assert np.max(np.abs(llg_rhs(m, op, 0.3))) == 0.0


def test_rhs_orthogonal_to_m(rng):
    op = DiffusionOperator(PeriodicGrid(2, 16), get_coefficient("paper_2d", 2, 1 / 2))
    m = unit_field(rng, (16, 16))
    r = llg_rhs(m, op, 0.2)
    assert np.max(np.abs(np.sum(r * m, axis=-1))) <= 1e-12 * np.max(np.abs(r))


def test_rhs_matches_dense_assembly(rng):
    op = small_op()
    h = op.grid.h
    M = (np.diag(-2 * np.ones(8)) + np.diag(np.ones(7), 1) + np.diag(np.ones(7), -1)) / h**2
    M[0, -1] = M[-1, 0] = 1 / h**2
    m = unit_field(rng, (8,))
    assert np.max(np.abs(llg_rhs(m, op, 0.5) - dense_rhs(M, m, 0.5))) <= 1e-13 * np.max(np.abs(M))


@pytest.mark.parametrize("scheme", ["rk4_project", "imex_midpoint"])
def test_constant_data_is_fixed(scheme):
    op = small_op()
    m = np.tile([0.0, 0.0, 1.0], (8, 1))
    final = solve_window(LLState(0.0, m, 0.5, op), 1e-3, StepControl.stable(op, scheme=scheme))
    assert np.array_equal(final.m, m)


@pytest.mark.parametrize("scheme", ["rk4_project", "imex_midpoint"])
def test_unit_constraint_over_window(rng, scheme):
    op = DiffusionOperator(PeriodicGrid(1, 160), get_coefficient("paper_1d", 1, 1 / 20))
    m0 = unit_field(rng, (160,))
    unit = UnitObserver()
    solve_window(LLState(0.0, m0, 0.1, op), 2e-4, StepControl.stable(op, scheme=scheme), [unit])
    assert unit.max_deviation <= 1e-12


def test_final_time_exact():
    op = small_op(16)
    ctl = StepControl(3e-5)
    final = solve_window(LLState(0.0, helix_data(16), 0.5, op), 1e-4, ctl)
    assert final.t == 1e-4


def test_self_convergence_dt_over_100():
    op = small_op(16)
    m0 = helix_data(16)
    T, dt = 1e-3, 1e-4
    coarse = solve_window(LLState(0.0, m0, 0.5, op), T, StepControl(dt)).m
    fine = solve_window(LLState(0.0, m0, 0.5, op), T, StepControl(dt / 100)).m
    assert np.max(np.abs(coarse - fine)) <= 1e-6


def test_dense_oracle_both_schemes():
    op = small_op(8)
    M = op.matrix()
    m0 = helix_data(8)
    T = 1e-3
    ref = dense_reference(m0, M, 0.5, T)
    for scheme in ("rk4_project", "imex_midpoint"):
        got = solve_window(LLState(0.0, m0, 0.5, op), T, StepControl(1e-4, scheme=scheme)).m
        assert np.max(np.abs(got - ref)) <= 1e-6, scheme


def test_temporal_order():
    op = DiffusionOperator(PeriodicGrid(1, 32), get_coefficient("paper_1d", 1, 1 / 4))
    m0 = helix_data(32)
    T = 2e-3
    ref = solve_window(LLState(0.0, m0, 0.3, op), T, StepControl(T / 2560)).m
    errs = []
    dts = [T / 20, T / 40, T / 80]
    for dt in dts:
        got = solve_window(LLState(0.0, m0, 0.3, op), T, StepControl(dt)).m
        errs.append(np.max(np.abs(got - ref)))
    rate = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert rate >= 2


def test_energy_decay_with_dense_oracle(rng):
    op = DiffusionOperator(PeriodicGrid(1, 8), get_coefficient("paper_1d", 1, 1 / 1), resolution=None)
    M = op.matrix()
    m0 = unit_field(rng, (8,))
    obs = EnergyObserver(op)
    solve_window(LLState(0.0, m0, 0.5, op), 5e-3, StepControl.stable(op), [obs])
    e = np.array(obs.values)
    assert np.all(np.diff(e) <= 1e-8 * e[:-1])
    assert e[-1] < e[0]
    # the observer's energy equals -h <m, M m> from the dense matrix
    assert e[0] == pytest.approx(-op.grid.h * np.sum(m0 * (M @ m0)), rel=1e-12)


def test_integrate_snapshots():
    op = small_op(16)
    final, snaps = integrate(LLState(0.0, helix_data(16), 0.5, op), 1e-3, StepControl(1e-4), every=5)
    assert [round(t, 12) for t, _ in snaps] == [0.0, 5e-4, 1e-3]
    assert np.array_equal(snaps[-1][1], final.m)


def test_step_and_stability_checks():
    op = small_op(8)
    with pytest.raises(ValueError):
        StepControl(1e-4, scheme="euler")
    with pytest.raises(ValueError):
        LLState(0.0, helix_data(8), 0.0, op)
    too_big = StepControl(10 * max_stable_dt(op))
    with pytest.raises(ValueError):
        solve_window(LLState(0.0, helix_data(8), 0.5, op), 1.0, too_big)
    s = step(LLState(0.0, helix_data(8), 0.5, op), StepControl.stable(op))
    assert s.t == max_stable_dt(op) and unit_deviation(s.m) <= 1e-12


def test_midpoint_divergence_is_reported(rng):
    op = small_op(8)
    ctl = StepControl(1.0, scheme="imex_midpoint", maxiter=20)
    with pytest.raises(FixedPointDiverged):
        advance(unit_field(rng, (8,)), op, 0.5, 1.0, ctl)


def test_restriction_modes():
    g = PeriodicGrid(1, 280)
    m = restrict_initial_data(get_macro_field("helix", 1), g)
    assert unit_deviation(m) <= 1e-15
    ez = restrict_initial_data(get_macro_field("uniform", 1), g)
    assert np.array_equal(ez, np.tile([0.0, 0.0, 1.0], (280, 1)))
    t = restrict_initial_data(get_macro_field("helix", 1), g, "taylor")
    np.testing.assert_allclose(t[0], m[0], atol=1e-15)
    with pytest.raises(DegenerateData):
        restrict_initial_data(get_macro_field("expr:x1;0;0", 1), g)


def test_oscillation_amplitude_small():
    """Micro and homogenized solutions from the same data stay within 10 eps over a window."""
    from llhmm.homogenized import HomogenizedOperator
    from llhmm.upscaling import MicroSpec, homogenized_tensor, prepare

    eps, alpha, eta = 1 / 140, 0.05, 1.5e-4
    grid, coef, op, macro, m0 = prepare(MicroSpec(eps, alpha))
    hop = HomogenizedOperator(grid, homogenized_tensor("paper_1d", 1, 2048))
    nsteps = math.ceil(eta / min(max_stable_dt(op), max_stable_dt(hop)))
    ctl = StepControl(eta / nsteps)
    micro, homog = [], []
    solve_window(LLState(0.0, m0, alpha, op), eta, ctl, [lambda t, m, L: micro.append(m)])
    solve_window(LLState(0.0, m0, alpha, hop), eta, ctl, [lambda t, m, L: homog.append(m)])
    amp = max(np.max(np.abs(a - b)) for a, b in zip(micro, homog))
    assert 0 < amp <= 10 * eps
