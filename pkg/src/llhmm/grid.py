"""Periodic grids, oscillatory coefficients and the flux-form diffusion stencil.

Fields are plain numpy arrays: a scalar field on a grid has shape
``grid.shape`` and a vector field has shape ``grid.shape + (3,)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import GridMismatch, GridTooCoarse

UNIT_TOL = 1e-12


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform periodic lattice on ``[0, length)^dim`` with ``n`` points per axis.

    Node 0 sits at the origin, so the macro point is sampled exactly.
    """

    dim: int
    n: int
    length: float = 1.0

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.n < 4:
            raise ValueError(f"need at least 4 points per axis, got {self.n}")
        if not self.length > 0:
            raise ValueError("length must be positive")

    @property
    def h(self) -> float:
        return self.length / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    def axis(self, offset: float = 0.0) -> np.ndarray:
        """Node coordinates along one axis, optionally shifted by ``offset * h``."""
        return (np.arange(self.n) + offset) * self.h

    def centered_axis(self, offset: float = 0.0) -> np.ndarray:
        """Like :meth:`axis` but wrapped into ``[-length/2, length/2)``."""
        x = self.axis(offset)
        return np.where(x >= 0.5 * self.length, x - self.length, x)

    def coords(self, offsets=None, centered: bool = False) -> list[np.ndarray]:
        """Meshgrid coordinate arrays, one per axis, each of shape ``self.shape``."""
        if offsets is None:
            offsets = (0.0,) * self.dim
        make = self.centered_axis if centered else self.axis
        axes = [make(o) for o in offsets]
        return list(np.meshgrid(*axes, indexing="ij"))

    def face_coords(self, axis: int, centered: bool = False) -> list[np.ndarray]:
        """Coordinates of the face midpoints between node i and i+1 along ``axis``."""
        offsets = [0.0] * self.dim
        offsets[axis] = 0.5
        return self.coords(offsets, centered=centered)

    def integrate(self, f: np.ndarray) -> np.ndarray:
        """Periodic trapezoid rule (sum times cell volume) over the leading grid axes."""
        return self.cell_volume * f.reshape((-1,) + f.shape[self.dim:]).sum(axis=0)

    def mean(self, f: np.ndarray) -> np.ndarray:
        return self.integrate(f) / self.length**self.dim


@dataclass(frozen=True)
class Coefficient:
    """Periodic material coefficient ``a(y)`` evaluated as ``a(x / epsilon)``.

    ``func`` takes one coordinate array per axis and must be 1-periodic in
    each. ``a_min``/``a_max`` are filled in by sampling when left unset.
    """

    func: Callable[..., np.ndarray]
    dim: int
    epsilon: float = 1.0
    a_min: float | None = None
    a_max: float | None = None
    name: str = "custom"
    constant: bool = False
    meta: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.a_min is None or self.a_max is None:
            lo, hi = sample_bounds(self.func, self.dim)
            object.__setattr__(self, "a_min", lo if self.a_min is None else self.a_min)
            object.__setattr__(self, "a_max", hi if self.a_max is None else self.a_max)
        if not self.a_min > 0:
            raise ValueError(f"coefficient must be positive, sampled minimum {self.a_min}")

    def cell(self, *y):
        """Evaluate the unit-cell function ``a(y)``."""
        return np.broadcast_to(np.asarray(self.func(*y), dtype=float), np.broadcast(*y).shape)

    def __call__(self, *x):
        return self.cell(*(np.asarray(xi, dtype=float) / self.epsilon for xi in x))

    def with_epsilon(self, epsilon: float) -> "Coefficient":
        return Coefficient(self.func, self.dim, epsilon, self.a_min, self.a_max,
                           self.name, self.constant, self.meta)


def sample_bounds(func, dim: int, n: int | None = None) -> tuple[float, float]:
    n = n or (4096 if dim == 1 else 256)
    y = np.meshgrid(*([np.arange(n) / n] * dim), indexing="ij")
    vals = np.broadcast_to(np.asarray(func(*y), dtype=float), y[0].shape)
    return float(vals.min()), float(vals.max())


def constant_coefficient(value: float, dim: int) -> Coefficient:
    return Coefficient(lambda *y: np.full(np.broadcast(*y).shape, float(value)), dim,
                       epsilon=1.0, a_min=float(value), a_max=float(value),
                       name=f"const{value:g}", constant=True)


def eval_coefficient(c: Coefficient, x) -> float:
    """``a(x / epsilon)`` at a single point ``x`` (scalar or length-d sequence)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return float(c(*x))


class DiffusionOperator:
    """Flux-form discretisation of ``div(a^eps grad u)`` on a periodic grid.

    Per axis the stencil is ``(a_{i+1/2}(u_{i+1}-u_i) - a_{i-1/2}(u_i-u_{i-1})) / h^2``
    with the coefficient sampled at face midpoints. The operator is
    symmetric, conservative, and annihilates constants exactly.
    """

    def __init__(self, grid: PeriodicGrid, coef: Coefficient, resolution: float | None = 8.0):
        if coef.dim != grid.dim:
            raise GridMismatch(f"coefficient dim {coef.dim} != grid dim {grid.dim}")
        if resolution is not None and not coef.constant:
            if grid.h > coef.epsilon / resolution * (1 + 1e-9):
                raise GridTooCoarse(
                    f"h={grid.h:.3e} does not resolve epsilon={coef.epsilon:.3e} "
                    f"(need h <= epsilon/{resolution:g})")
        self.grid = grid
        self.coef = coef
        self.faces = [coef(*grid.face_coords(k)) for k in range(grid.dim)]

    def _face(self, k, u):
        a = self.faces[k]
        return a if u.ndim == self.grid.dim else a[..., None]

    def gradient(self, u: np.ndarray, k: int) -> np.ndarray:
        """Forward difference along axis ``k``, located at the ``k``-faces."""
        return (np.roll(u, -1, axis=k) - u) / self.grid.h

    def flux(self, u: np.ndarray, k: int) -> np.ndarray:
        """``a^eps * du/dx_k`` at the ``k``-faces."""
        return self._face(k, u) * self.gradient(u, k)

    def apply(self, u: np.ndarray) -> np.ndarray:
        h = self.grid.h
        out = np.zeros_like(u, dtype=float)
        for k in range(self.grid.dim):
            f = self.flux(u, k)
            out += (f - np.roll(f, 1, axis=k)) / h
        return out

    __call__ = apply

    def energy(self, m: np.ndarray) -> float:
        """Discrete exchange energy ``h^d sum a |grad m|^2`` matching ``-<m, L m>``."""
        total = 0.0
        for k in range(self.grid.dim):
            g = self.gradient(m, k)
            total += float(np.sum(self._face(k, m) * g * g))
        return self.grid.cell_volume * total

    def matrix(self) -> np.ndarray:
        """Dense matrix of the scalar operator (small grids only)."""
        size = self.grid.n**self.grid.dim
        eye = np.eye(size).reshape(self.grid.shape + (size,))
        cols = np.moveaxis(eye, -1, 0)
        return np.stack([self.apply(c).ravel() for c in cols], axis=1)


def apply_L(u: np.ndarray, grid: PeriodicGrid, coef: Coefficient, resolution: float | None = 8.0):
    check_field(u, grid)
    return DiffusionOperator(grid, coef, resolution).apply(u)


def laplacian(u: np.ndarray, grid: PeriodicGrid) -> np.ndarray:
    """Standard second-order periodic Laplacian."""
    out = np.zeros_like(u, dtype=float)
    for k in range(grid.dim):
        out += np.roll(u, -1, axis=k) - 2 * u + np.roll(u, 1, axis=k)
    return out / grid.h**2


def check_field(u: np.ndarray, grid: PeriodicGrid, vector: bool | None = None):
    shape = u.shape[: grid.dim]
    if shape != grid.shape or u.ndim not in (grid.dim, grid.dim + 1):
        raise GridMismatch(f"field shape {u.shape} does not live on grid {grid.shape}")
    if vector is True and u.shape[grid.dim:] != (3,):
        raise GridMismatch(f"expected a vector field, got shape {u.shape}")


def cross(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    if u.shape != v.shape or u.shape[-1] != 3:
        raise GridMismatch(f"cannot cross fields of shape {u.shape} and {v.shape}")
    # explicit components are noticeably faster than np.cross on small trailing axes
    out = np.empty_like(u)
    out[..., 0] = u[..., 1] * v[..., 2] - u[..., 2] * v[..., 1]
    out[..., 1] = u[..., 2] * v[..., 0] - u[..., 0] * v[..., 2]
    out[..., 2] = u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]
    return out


def triple(u: np.ndarray, v: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Nodewise ``u x (v x w)``."""
    return cross(u, cross(v, w))


def dot(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("...i,...i->...", u, v)


def norms(m: np.ndarray) -> np.ndarray:
    return np.sqrt(dot(m, m))


def normalize(m: np.ndarray) -> np.ndarray:
    return m / norms(m)[..., None]


def unit_deviation(m: np.ndarray) -> float:
    return float(np.max(np.abs(norms(m) - 1.0)))


def is_unit(m: np.ndarray, tol: float = UNIT_TOL) -> bool:
    return unit_deviation(m) <= tol
