"""Landau-Lifshitz micro solver on the full periodic domain.

The right-hand side is ``-m x Lm - alpha m x (m x Lm)`` where ``L`` is any
operator object exposing ``grid``, ``a_max`` and ``apply`` (the oscillatory
flux-form operator, or the constant-tensor homogenized one).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable

import numpy as np

from .errors import DegenerateData, FixedPointDiverged
from .grid import DiffusionOperator, PeriodicGrid, cross, norms, normalize, unit_deviation

log = logging.getLogger(__name__)

SCHEMES = ("rk4_project", "imex_midpoint")
Observer = Callable[[float, np.ndarray, np.ndarray], None]


def stiffness(op) -> float:
    """Largest diffusion coefficient of an operator, used for the step bound."""
    if isinstance(op, DiffusionOperator):
        return float(op.coef.a_max)
    return float(op.a_max)


@dataclass(frozen=True)
class StepControl:
    dt: float
    cfl: float = 0.25
    scheme: str = "rk4_project"
    tol: float = 1e-12
    maxiter: int = 50

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    @classmethod
    def stable(cls, op, cfl: float = 0.25, scheme: str = "rk4_project", **kw) -> "StepControl":
        return cls(max_stable_dt(op, cfl), cfl, scheme, **kw)

    def check(self, op):
        limit = max_stable_dt(op, self.cfl)
        if self.dt > limit * (1 + 1e-12):
            raise ValueError(f"dt={self.dt:.3e} exceeds cfl bound {limit:.3e}")


def max_stable_dt(op, cfl: float = 0.25) -> float:
    return cfl * op.grid.h**2 / stiffness(op)


@dataclass(frozen=True)
class LLState:
    t: float
    m: np.ndarray
    alpha: float
    op: object

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError(f"damping must lie in (0, 1], got {self.alpha}")

    @property
    def grid(self) -> PeriodicGrid:
        return self.op.grid


def rhs_from_field(m: np.ndarray, Lm: np.ndarray, alpha: float) -> np.ndarray:
    mxL = cross(m, Lm)
    return -mxL - alpha * cross(m, mxL)


def llg_rhs(m: np.ndarray, op, alpha: float) -> np.ndarray:
    return rhs_from_field(m, op.apply(m), alpha)


def _rk4(m, op, alpha, dt, Lm=None):
    Lm = op.apply(m) if Lm is None else Lm
    k1 = rhs_from_field(m, Lm, alpha)
    k2 = llg_rhs(m + 0.5 * dt * k1, op, alpha)
    k3 = llg_rhs(m + 0.5 * dt * k2, op, alpha)
    k4 = llg_rhs(m + dt * k3, op, alpha)
    return normalize(m + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4))


def _implicit_midpoint(m, op, alpha, dt, tol, maxiter, Lm=None):
    f0 = rhs_from_field(m, op.apply(m) if Lm is None else Lm, alpha)
    new = m + dt * f0
    delta = math.inf
    for _ in range(maxiter):
        mid = 0.5 * (m + new)
        # a diverging iteration overflows; that is reported below, not warned about
        with np.errstate(over="ignore", invalid="ignore"):
            nxt = m + dt * llg_rhs(mid, op, alpha)
            delta = float(np.max(np.abs(nxt - new)))
        new = nxt
        if not math.isfinite(delta):
            break
        if delta <= tol:
            # the midpoint update is exactly norm preserving; renormalising only
            # removes the fixed-point residual
            return normalize(new)
    raise FixedPointDiverged(f"implicit midpoint: increment {delta:.2e} after {maxiter} iterations")


def advance(m, op, alpha, dt, ctl: StepControl, Lm=None) -> np.ndarray:
    if ctl.scheme == "rk4_project":
        return _rk4(m, op, alpha, dt, Lm)
    return _implicit_midpoint(m, op, alpha, dt, ctl.tol, ctl.maxiter, Lm)


def step(state: LLState, ctl: StepControl, dt: float | None = None) -> LLState:
    dt = ctl.dt if dt is None else dt
    return replace(state, t=state.t + dt, m=advance(state.m, state.op, state.alpha, dt, ctl))


def solve_window(state0: LLState, eta: float, ctl: StepControl,
                 observers: Iterable[Observer] = ()) -> LLState:
    """Integrate from ``state0.t`` over a window of length ``eta``.

    Observers are called as ``obs(t, m, Lm)`` at the initial time and after
    every accepted step. Steps use ``ctl.dt``; the last one is shortened to
    land exactly on the window end.
    """
    if not eta > 0:
        raise ValueError("window length must be positive")
    ctl.check(state0.op)
    observers = list(observers)
    op, alpha = state0.op, state0.alpha
    t0 = state0.t
    nsteps = max(1, math.ceil(eta / ctl.dt - 1e-9))
    m = state0.m
    Lm = op.apply(m)
    for obs in observers:
        obs(t0, m, Lm)
    for k in range(nsteps):
        t_prev = t0 + k * ctl.dt
        t_next = t0 + eta if k == nsteps - 1 else t0 + (k + 1) * ctl.dt
        m = advance(m, op, alpha, t_next - t_prev, ctl, Lm)
        Lm = op.apply(m)
        for obs in observers:
            obs(t_next, m, Lm)
    return replace(state0, t=t0 + eta, m=m)


def integrate(state0: LLState, T: float, ctl: StepControl, every: int | None = None):
    """Integrate to ``state0.t + T`` and return ``(final_state, [(t, m), ...])``.

    Snapshots are taken every ``every`` steps (and at the end) when given.
    """
    snaps = []
    count = [0]

    def record(t, m, Lm):
        if every and count[0] % every == 0:
            snaps.append((t, m.copy()))
        count[0] += 1

    final = solve_window(state0, T, ctl, [record] if every else [])
    if every and (not snaps or snaps[-1][0] != final.t):
        snaps.append((final.t, final.m.copy()))
    return final, snaps


class EnergyObserver:
    """Records the discrete exchange energy at every observed time."""

    def __init__(self, op: DiffusionOperator):
        self.op = op
        self.times: list[float] = []
        self.values: list[float] = []

    def __call__(self, t, m, Lm):
        self.times.append(t)
        self.values.append(self.op.energy(m))


class UnitObserver:
    """Tracks the largest deviation of |m| from one over a run."""

    def __init__(self):
        self.max_deviation = 0.0

    def __call__(self, t, m, Lm):
        self.max_deviation = max(self.max_deviation, unit_deviation(m))


def restrict_initial_data(macro, grid: PeriodicGrid, mode: str = "sample") -> np.ndarray:
    """Micro initial data from an analytic macro field around the origin.

    ``sample`` evaluates the (periodic) macro field at the nodes; ``taylor``
    samples its degree-2 Taylor polynomial about the origin and renormalises,
    which matches value, gradient and Hessian at the origin up to the
    normalisation correction but is not periodic on the whole domain.
    """
    x = grid.coords(centered=True)
    if mode == "sample":
        raw = macro.raw_values(*x)
    elif mode == "taylor":
        raw = macro.taylor_raw(*x)
    else:
        raise ValueError(f"unknown restriction mode {mode!r}")
    size = norms(raw)
    if np.min(size) < 0.1:
        raise DegenerateData(f"macro data nearly vanishes (min |m| = {np.min(size):.3g})")
    return normalize(raw)
