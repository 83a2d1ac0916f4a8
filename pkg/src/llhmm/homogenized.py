"""Homogenized LL equation with a constant tensor, and the upscaling targets."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .grid import PeriodicGrid, check_field
from .micro import LLState, StepControl, integrate


class HomogenizedOperator:
    """Second-order stencil for ``div(grad m A)`` with a constant SPD tensor ``A``.

    Diagonal terms use the three-point second difference, mixed terms the
    four-point cross difference.
    """

    def __init__(self, grid: PeriodicGrid, A):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if A.shape != (grid.dim, grid.dim):
            raise ValueError(f"tensor shape {A.shape} does not match dimension {grid.dim}")
        if not np.allclose(A, A.T, rtol=0, atol=1e-12 * np.abs(A).max()):
            raise ValueError("homogenized tensor must be symmetric")
        if np.linalg.eigvalsh(A).min() <= 0:
            raise ValueError("homogenized tensor must be positive definite")
        self.grid = grid
        self.A = A
        d = grid.dim
        off = sum(abs(A[j, k]) for j in range(d) for k in range(d) if j != k)
        # plays the role of a_max in the explicit step bound
        self.a_max = (4 * np.trace(A) + off) / (4 * d)

    def apply(self, m: np.ndarray) -> np.ndarray:
        g, A = self.grid, self.A
        h2 = g.h**2
        out = np.zeros_like(m, dtype=float)
        for j in range(g.dim):
            out += A[j, j] * (np.roll(m, -1, j) - 2 * m + np.roll(m, 1, j)) / h2
            for k in range(j + 1, g.dim):
                cross_diff = (np.roll(np.roll(m, -1, j), -1, k) - np.roll(np.roll(m, -1, j), 1, k)
                              - np.roll(np.roll(m, 1, j), -1, k) + np.roll(np.roll(m, 1, j), 1, k))
                out += 2 * A[j, k] * cross_diff / (4 * h2)
        return out

    __call__ = apply


def apply_LH(m: np.ndarray, grid: PeriodicGrid, A) -> np.ndarray:
    check_field(m, grid)
    return HomogenizedOperator(grid, A).apply(m)


class References(NamedTuple):
    flux: np.ndarray  # (d, 3), rows = space
    field: np.ndarray  # (3,)
    torque: np.ndarray  # (3,)
    value: np.ndarray  # m0 at the macro point


def reference_quantities(macro, A) -> References:
    """Flux, effective field and torque of the homogenized model at the origin.

    Uses the exact derivatives of the macro initial field, so no grid error
    enters the targets.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    G = macro.gradient0  # G[k, c] = d_k m_c
    H = macro.hessian0  # H[j, k, c]
    flux = A.T @ G
    field = np.einsum("jk,jkc->c", A, H)
    m0 = macro.value0
    return References(flux, field, np.cross(m0, field), m0)


def solve_homogenized(state0: LLState, T: float, ctl: StepControl, every: int | None = None):
    """Integrate the homogenized equation; ``state0.op`` must be a HomogenizedOperator."""
    return integrate(state0, T, ctl, every)
