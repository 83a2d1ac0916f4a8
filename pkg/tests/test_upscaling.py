import numpy as np
import pytest

from llhmm.errors import WindowExceedsDomain
from llhmm.grid import PeriodicGrid
from llhmm.kernels import KernelSpec, build
from llhmm.upscaling import (AveragingWindow, MicroSpec, SpaceAverager, TimeAccumulator, average_space,
                             upscale, upscale_all)

SYM = build(KernelSpec(5, 7, "symmetric"))
ONE = build(KernelSpec(5, 7, "one_sided"))
GRID = PeriodicGrid(1, 1120)


def test_average_of_constant():
    f = np.tile([0.2, -1.0, 3.0], (1120, 1))
    np.testing.assert_allclose(average_space(f, GRID, 0.03, SYM), [0.2, -1.0, 3.0], rtol=1e-13)


def test_average_of_linear_field():
    x = GRID.centered_axis()
    assert abs(average_space(x, GRID, 0.03, SYM)) <= 1e-10


def test_average_of_fast_oscillation():
    x = GRID.centered_axis()
    assert abs(average_space(np.sin(2 * np.pi * x * 140), GRID, 0.03, SYM)) <= 1e-6


def test_face_average_of_constant():
    f = np.full(1120, 2.0)
    assert average_space(f, GRID, 0.03, SYM, faces_axis=0) == pytest.approx(2.0, rel=1e-13)


def test_2d_average_of_constant():
    g = PeriodicGrid(2, 200)
    f = np.full((200, 200, 3), 0.5)
    np.testing.assert_allclose(average_space(f, g, 0.06, SYM), 0.5, rtol=1e-12)


def test_mu_snapping_and_limits():
    avg = SpaceAverager(GRID, SYM, 0.0301)
    assert avg.snapped and avg.mu == pytest.approx(34 / 1120)
    assert not SpaceAverager(GRID, SYM, 42 / 1120).snapped
    with pytest.raises(WindowExceedsDomain):
        SpaceAverager(GRID, SYM, 1e-5)
    with pytest.raises(WindowExceedsDomain):
        SpaceAverager(PeriodicGrid(1, 20), SYM, 0.6)


def _accumulate(values, eta, nsteps, kernel=ONE):
    acc = TimeAccumulator(kernel, eta)
    for t in np.linspace(0, eta, nsteps + 1):
        acc.add(t, values(t))
    return acc.value


def test_time_average_constant():
    eta = 1.5e-4
    np.testing.assert_allclose(_accumulate(lambda t: np.array([1.0, -2.0, 0.5]), eta, 300),
                               [1.0, -2.0, 0.5], rtol=1e-12)


@pytest.mark.parametrize("r", [1, 2, 3, 4, 5])
def test_time_average_polynomial_moments(r):
    eta = 1.5e-4
    assert abs(_accumulate(lambda t: t**r, eta, 300)) <= 1e-7 * eta**r


def test_time_window_bounds():
    acc = TimeAccumulator(ONE, 1e-4)
    with pytest.raises(ValueError):
        acc.add(2e-4, 1.0)


def test_window_violations():
    w = AveragingWindow(0.03, 1.5e-4)
    assert w.violations(1 / 140) == []
    assert len(w.violations(1 / 20)) == 2
    with pytest.raises(ValueError):
        AveragingWindow(0.0, 1e-4)


def test_constant_coefficient_constant_data():
    spec = MicroSpec(1 / 40, 0.1, coefficient="const:1.3", m_init="uniform")
    for r in upscale_all(spec, AveragingWindow(0.03, 1.5e-4)):
        assert r.error <= 1e-10
        assert np.max(np.abs(r.F)) <= 1e-10


def test_constant_coefficient_helix_discretisation_floor():
    errs = {}
    for ppp in (8, 16):
        spec = MicroSpec(1 / 35, 0.1, coefficient="const:1.3", points_per_period=ppp)
        for r in upscale_all(spec, AveragingWindow(0.03, 1.5e-4)):
            h = 1 / spec.n
            scale = np.linalg.norm(r.reference) * (2 * np.pi) ** 2
            assert r.error <= 10 * (h**2 + r.dt**2) * scale
            errs[(r.model, ppp)] = r.error
    for model in ("M1", "M2", "M3"):
        assert 3 <= errs[(model, 8)] / errs[(model, 16)] <= 5


def test_2d_constant_coefficient():
    spec = MicroSpec(1 / 10, 0.1, dim=2, coefficient="const:0.8", m_init="helix2d")
    rs = {r.model: r for r in upscale_all(spec, AveragingWindow(0.12, 1e-4))}
    assert rs["M1"].F.shape == (2, 3)
    for r in rs.values():
        assert r.error <= 0.02 * np.linalg.norm(r.reference)


@pytest.fixture(scope="module")
def default_point():
    spec = MicroSpec(1 / 140, 0.05)
    return {r.model: r for r in upscale_all(spec, AveragingWindow(0.03, 1.5e-4))}


def test_default_point_ordering(default_point):
    e1, e2, e3 = (default_point[m].error for m in ("M1", "M2", "M3"))
    assert e1 < e2
    assert 0.5 <= e2 / e3 <= 2


def test_torque_consistency(default_point):
    F2, F3 = default_point["M2"].F, default_point["M3"].F
    m0 = np.array([1.0, 0.0, 1.0]) / np.sqrt(2)
    gap = np.linalg.norm(F3 - np.cross(m0, F2))
    assert gap <= default_point["M2"].error + default_point["M3"].error


def test_report_echo(default_point):
    r = default_point["M1"]
    assert (r.epsilon, r.mu, r.eta, r.alpha, r.px, r.qx, r.pt, r.qt, r.N) == (
        1 / 140, 0.03, 1.5e-4, 0.05, 5, 7, 5, 7, 1120)
    assert r.error >= 0 and r.status == "ok"
    assert r.notes == ("mu snapped to 0.0303571",)


def test_single_model_matches_all(default_point):
    r = upscale("M3", MicroSpec(1 / 140, 0.05), AveragingWindow(0.03, 1.5e-4))
    np.testing.assert_array_equal(r.F, default_point["M3"].F)
    with pytest.raises(ValueError):
        upscale("M4", MicroSpec(1 / 140, 0.05), AveragingWindow(0.03, 1.5e-4))


def test_bad_epsilon():
    with pytest.raises(ValueError):
        MicroSpec(0.033, 0.1).periods()
