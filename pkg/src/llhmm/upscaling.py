"""Kernel averaging of micro solutions and the three upscaled quantities.

All three models are evaluated from a single micro run:

* M1 (flux): average of ``a^eps grad m``, compared with ``grad m0 A^H``;
* M2 (field): average of ``L m``, compared with ``div(grad m0 A^H)``;
* M3 (torque): average of ``m x L m``, compared with ``m0 x div(grad m0 A^H)``.

Space averages use the symmetric kernel on nodes (M2, M3) or on the face
midpoints where the discrete fluxes live (M1). Time averages use the
one-sided kernel, trapezoid rule across accepted steps.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import kernels
from .cell import solve_cell
from .errors import WindowExceedsDomain
from .grid import Coefficient, DiffusionOperator, PeriodicGrid, cross
from .homogenized import reference_quantities
from .micro import LLState, StepControl, max_stable_dt, restrict_initial_data, solve_window
from .presets import get_coefficient, get_macro_field

log = logging.getLogger(__name__)

MODELS = ("M1", "M2", "M3")
MIN_WINDOW_STEPS = 32  # below this the trapezoid rule cannot resolve the time kernel


@dataclass(frozen=True)
class AveragingWindow:
    mu: float
    eta: float
    px: int = 5
    qx: int = 7
    pt: int = 5
    qt: int = 7

    def __post_init__(self):
        if not (self.mu > 0 and self.eta > 0):
            raise ValueError("window sizes must be positive")

    def violations(self, epsilon: float) -> list[str]:
        """Theory preconditions that do not hold; reported, not enforced."""
        out = []
        if not epsilon < self.mu < 1:
            out.append(f"epsilon < mu < 1 violated (epsilon={epsilon:.4g}, mu={self.mu:.4g})")
        if not epsilon**2 < self.eta:
            out.append(f"epsilon^2 < eta violated (epsilon^2={epsilon**2:.4g}, eta={self.eta:.4g})")
        return out

    @property
    def space_kernel(self) -> kernels.Kernel:
        return _kernel(self.px, self.qx, "symmetric")

    @property
    def time_kernel(self) -> kernels.Kernel:
        return _kernel(self.pt, self.qt, "one_sided")


@lru_cache(maxsize=64)
def _kernel(p, q, family):
    return kernels.build(kernels.KernelSpec(p, q, family))


def _unit_sum(w):
    total = w.sum()
    if not total > 0:
        raise WindowExceedsDomain("averaging window holds no interior quadrature points")
    return w / total


class SpaceAverager:
    """Tensor-kernel trapezoid average over ``[-mu, mu]^d`` around the origin.

    ``mu`` is snapped to a whole number of cells so that the quadrature points
    are grid nodes (or face midpoints). The discrete weights are rescaled to
    unit sum so constants are reproduced exactly on coarse windows.
    """

    def __init__(self, grid: PeriodicGrid, kernel: kernels.Kernel, mu: float):
        cells = int(round(mu / grid.h))
        if cells < 1:
            raise WindowExceedsDomain(f"mu={mu:.3g} is below one grid cell h={grid.h:.3g}")
        if 2 * cells >= grid.n:
            raise WindowExceedsDomain(f"averaging box [-mu, mu] (mu={mu:.3g}) does not fit the domain")
        self.grid = grid
        self.kernel = kernel
        self.cells = cells
        self.mu = cells * grid.h
        self.mu_requested = mu
        if not math.isclose(self.mu, mu, rel_tol=1e-9):
            log.info("mu snapped from %.6g to %.6g (%d cells)", mu, self.mu, cells)
        h = grid.h
        self.node_idx = np.arange(-cells, cells + 1) % grid.n
        self.node_w = _unit_sum(kernels.eval_scaled(kernel, self.mu, np.arange(-cells, cells + 1) * h))
        self.face_idx = np.arange(-cells, cells) % grid.n
        self.face_w = _unit_sum(kernels.eval_scaled(kernel, self.mu, (np.arange(-cells, cells) + 0.5) * h))

    @property
    def snapped(self) -> bool:
        return not math.isclose(self.mu, self.mu_requested, rel_tol=1e-9)

    def _average(self, f, faces_axis=None):
        out = f
        # contract grid axes one at a time; leading axis is always the next grid axis
        for k in range(self.grid.dim):
            if k == faces_axis:
                idx, w = self.face_idx, self.face_w
            else:
                idx, w = self.node_idx, self.node_w
            out = np.tensordot(w, np.take(out, idx, axis=0), axes=(0, 0))
        return out

    def nodes(self, f: np.ndarray) -> np.ndarray:
        return self._average(f)

    def faces(self, f: np.ndarray, axis: int) -> np.ndarray:
        return self._average(f, faces_axis=axis)

    def window_slices(self, pad: int = 1):
        """Periodic index arrays covering the box plus ``pad`` cells per side."""
        return np.arange(-self.cells - pad, self.cells + pad + 1) % self.grid.n


def average_space(field: np.ndarray, grid: PeriodicGrid, mu: float, kernel: kernels.Kernel,
                  faces_axis: int | None = None) -> np.ndarray:
    """Kernel average of a node (or ``faces_axis``-face) field around the origin."""
    avg = SpaceAverager(grid, kernel, mu)
    return avg.faces(field, faces_axis) if faces_axis is not None else avg.nodes(field)


class TimeAccumulator:
    """Trapezoid accumulation of ``K0_eta(t - t0) * value(t)`` over accepted steps.

    The result is divided by the trapezoid sum of the kernel itself, i.e. the
    weights have unit discrete mass.
    """

    def __init__(self, kernel: kernels.Kernel, eta: float, t0: float = 0.0):
        self.kernel = kernel
        self.eta = eta
        self.t0 = t0
        self.total = None
        self.mass = 0.0
        self._prev = None

    def weight(self, t: float) -> float:
        return float(kernels.eval_scaled(self.kernel, self.eta, t - self.t0))

    def add(self, t: float, value) -> None:
        if not (-1e-12 * self.eta <= t - self.t0 <= self.eta * (1 + 1e-12)):
            raise ValueError(f"time {t} outside the averaging window")
        w = self.weight(t)
        wv = w * np.asarray(value, dtype=float)
        if self._prev is not None:
            tp, wp, wvp = self._prev
            self.total = self.total + 0.5 * (t - tp) * (wv + wvp)
            self.mass += 0.5 * (t - tp) * (w + wp)
        else:
            self.total = np.zeros_like(wv)
        self._prev = (t, w, wv)

    @property
    def value(self):
        if not self.mass > 0:
            raise ValueError("time window holds no interior quadrature points")
        return self.total / self.mass


def accumulate_time(acc: TimeAccumulator, t: float, sample) -> TimeAccumulator:
    acc.add(t, sample)
    return acc


class ModelObserver:
    """Streams the space averages of all model integrands into time accumulators."""

    def __init__(self, op: DiffusionOperator, space: SpaceAverager, time_kernel, eta, models=MODELS):
        self.op = op
        self.space = space
        self.models = tuple(models)
        self.acc = {m: TimeAccumulator(time_kernel, eta) for m in self.models}
        self.steps = 0

    def integrands(self, m: np.ndarray, Lm: np.ndarray) -> dict:
        out = {}
        if "M1" in self.models:
            out["M1"] = np.stack([self.space.faces(self.op.flux(m, k), k)
                                  for k in range(self.op.grid.dim)])
        if "M2" in self.models:
            out["M2"] = self.space.nodes(Lm)
        if "M3" in self.models:
            out["M3"] = self.space.nodes(cross(m, Lm))
        return out

    def __call__(self, t, m, Lm):
        self.steps += 1
        acc0 = next(iter(self.acc.values()))
        if acc0.weight(t) == 0.0:
            # kernel vanishes: contribute zeros without computing the averages
            d = self.op.grid.dim
            vals = {k: np.zeros((d, 3)) if k == "M1" else np.zeros(3) for k in self.models}
        else:
            vals = self.integrands(m, Lm)
        for key, v in vals.items():
            self.acc[key].add(t, v)

    def results(self) -> dict:
        return {k: a.value for k, a in self.acc.items()}


@dataclass(frozen=True)
class MicroSpec:
    """Everything needed to set up one micro run around the macro point."""

    epsilon: float
    alpha: float
    dim: int = 1
    coefficient: str = "paper_1d"
    m_init: str = "helix"
    points_per_period: int = 8
    scheme: str = "rk4_project"
    cfl: float = 0.25
    length: float = 1.0
    restriction: str = "sample"
    reference: str = "consistent"

    def periods(self) -> int:
        n = self.length / self.epsilon
        if abs(n - round(n)) > 1e-6 * n:
            raise ValueError(f"epsilon={self.epsilon} is not length/n for an integer n")
        return int(round(n))

    @property
    def n(self) -> int:
        return self.periods() * self.points_per_period

    def grid(self) -> PeriodicGrid:
        return PeriodicGrid(self.dim, self.n, self.length)

    def coef(self) -> Coefficient:
        return get_coefficient(self.coefficient, self.dim, self.epsilon)


@dataclass(frozen=True)
class UpscalingReport:
    model: str
    F: np.ndarray
    reference: np.ndarray
    error: float
    epsilon: float
    mu: float
    eta: float
    alpha: float
    px: int
    qx: int
    pt: int
    qt: int
    N: int
    dt: float
    dim: int = 1
    status: str = "ok"
    notes: tuple = field(default=(), compare=False)

    def key(self):
        return (self.dim, self.alpha, self.px, self.qx, self.pt, self.qt, self.mu, self.eta,
                -self.epsilon, self.model)


@lru_cache(maxsize=32)
def homogenized_tensor(coefficient: str, dim: int, n: int) -> np.ndarray:
    sol = solve_cell(get_coefficient(coefficient, dim), n, min_points=4)
    return sol.AH


def reference_tensor(spec: MicroSpec) -> np.ndarray:
    """Tensor the errors are measured against.

    ``consistent`` solves the cell problem with the micro grid's own points per
    period and stencil, so that E_i measures upscaling error rather than the
    O((h/eps)^2) discretisation bias of the micro coefficient; ``continuum``
    uses a fine cell grid.
    """
    if spec.reference == "consistent":
        return homogenized_tensor(spec.coefficient, spec.dim, spec.points_per_period)
    if spec.reference == "continuum":
        return homogenized_tensor(spec.coefficient, spec.dim, 2048 if spec.dim == 1 else 256)
    raise ValueError(f"unknown reference mode {spec.reference!r}")


def prepare(spec: MicroSpec):
    grid = spec.grid()
    coef = spec.coef()
    op = DiffusionOperator(grid, coef)
    macro = get_macro_field(spec.m_init, spec.dim)
    m0 = restrict_initial_data(macro, grid, spec.restriction)
    return grid, coef, op, macro, m0


def run_micro(spec: MicroSpec, window: AveragingWindow, models=MODELS):
    """One micro solve with the multi-model observer; returns (observer, dt, state)."""
    grid, coef, op, macro, m0 = prepare(spec)
    nsteps = max(MIN_WINDOW_STEPS, math.ceil(window.eta / max_stable_dt(op, spec.cfl) - 1e-9))
    ctl = StepControl(window.eta / nsteps, spec.cfl, spec.scheme)
    space = SpaceAverager(grid, window.space_kernel, window.mu)
    obs = ModelObserver(op, space, window.time_kernel, window.eta, models)
    state = solve_window(LLState(0.0, m0, spec.alpha, op), window.eta, ctl, [obs])
    return obs, ctl.dt, state, macro


def upscale_all(spec: MicroSpec, window: AveragingWindow, models=MODELS) -> list[UpscalingReport]:
    notes = tuple(window.violations(spec.epsilon))
    for n in notes:
        log.warning("%s", n)
    obs, dt, _, macro = run_micro(spec, window, models)
    refs = reference_quantities(macro, reference_tensor(spec))
    targets = {"M1": refs.flux, "M2": refs.field, "M3": refs.torque}
    if obs.space.snapped:
        notes += (f"mu snapped to {obs.space.mu:.6g}",)
    out = []
    for model, F in obs.results().items():
        ref = targets[model]
        out.append(UpscalingReport(
            model, F, ref, float(np.linalg.norm(F - ref)), spec.epsilon, window.mu, window.eta,
            spec.alpha, window.px, window.qx, window.pt, window.qt, spec.n, dt, spec.dim,
            notes=notes))
    return out


def upscale(model: str, spec: MicroSpec, window: AveragingWindow) -> UpscalingReport:
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}")
    return upscale_all(spec, window, (model,))[0]
