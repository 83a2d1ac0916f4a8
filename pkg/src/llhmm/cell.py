"""Periodic cell problem and homogenized coefficient.

For each direction k the corrector chi_k solves
``div(a grad chi_k) = -d a / d y_k`` on the unit cell with zero mean, in the
same flux form used by the micro solver. The homogenized tensor is the cell
average of ``g = a (I + grad chi)``, evaluated on the faces where the
discrete fluxes live.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence
from .grid import Coefficient, DiffusionOperator, PeriodicGrid

CG_RTOL = 1e-10


@dataclass(frozen=True)
class CellSolution:
    grid: PeriodicGrid
    coef: Coefficient
    chi: np.ndarray  # (d,) + grid.shape
    AH: np.ndarray  # symmetrised (d, d)
    asymmetry: float
    iterations: tuple
    residuals: tuple

    @property
    def dim(self):
        return self.grid.dim

    @property
    def g(self) -> np.ndarray:
        """``g[j, k] = a (delta_jk + d chi_k / d y_j)`` on the j-faces, shape (d, d) + grid."""
        op = DiffusionOperator(self.grid, self.coef, resolution=None)
        d = self.dim
        out = np.empty((d, d) + self.grid.shape)
        for j in range(d):
            for k in range(d):
                out[j, k] = op.faces[j] * ((j == k) + op.gradient(self.chi[k], j))
        return out

    @property
    def h_field(self) -> np.ndarray:
        """``a(y) chi(y)`` at the nodes, shape (d,) + grid."""
        a = self.coef.cell(*self.grid.coords())
        return a[None] * self.chi

    def divergence_g(self) -> np.ndarray:
        """Discrete divergence of each column of g (should vanish)."""
        g = self.g
        h = self.grid.h
        return np.stack([
            sum((g[j, k] - np.roll(g[j, k], 1, axis=j)) / h for j in range(self.dim))
            for k in range(self.dim)])


def _fft_preconditioner(grid: PeriodicGrid, scale: float):
    freqs = [2.0 - 2.0 * np.cos(2 * np.pi * np.arange(grid.n) / grid.n)] * grid.dim
    sym = sum(np.meshgrid(*freqs, indexing="ij")) * scale / grid.h**2
    sym.flat[0] = 1.0  # null mode is projected out anyway

    def apply(r):
        z = np.real(np.fft.ifftn(np.fft.fftn(r) / sym))
        return z - z.mean()

    return apply


def conjugate_gradient(apply_A, b, precond=None, rtol=CG_RTOL, maxiter=None):
    """Preconditioned CG for a symmetric semi-definite system whose kernel is the
    constants; iterates stay in the zero-mean subspace."""
    b = b - b.mean()
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b)
    if bnorm == 0.0:
        return x, 0, 0.0
    maxiter = maxiter or 10 * b.size
    precond = precond or (lambda r: r - r.mean())
    r = b.copy()
    z = precond(r)
    p = z.copy()
    rz = np.vdot(r, z)
    for it in range(1, maxiter + 1):
        Ap = apply_A(p)
        alpha = rz / np.vdot(p, Ap)
        x += alpha * p
        r -= alpha * Ap
        r -= r.mean()
        res = np.linalg.norm(r)
        if res <= rtol * bnorm:
            x -= x.mean()
            return x, it, res / bnorm
        z = precond(r)
        rz_new = np.vdot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise NoConvergence(f"CG stalled at relative residual {res / bnorm:.2e} after {maxiter} iterations")


def solve_cell(a: Coefficient, n: int, min_points: int = 16) -> CellSolution:
    """Solve the cell problem on an ``n``-point-per-axis unit cell grid.

    ``a`` is interpreted on the unit cell (its epsilon is ignored).
    ``min_points`` may be lowered to match a coarse micro grid exactly.
    """
    if n < min_points:
        raise ValueError(f"cell grid needs at least {min_points} points per axis, got {n}")
    grid = PeriodicGrid(a.dim, n, 1.0)
    unit = a.with_epsilon(1.0)
    op = DiffusionOperator(grid, unit, resolution=None)
    precond = _fft_preconditioner(grid, float(np.mean(op.faces[0])))

    def neg_L(u):
        return -op.apply(u)

    chis, iters, resids = [], [], []
    for k in range(grid.dim):
        face = op.faces[k]
        rhs = (face - np.roll(face, 1, axis=k)) / grid.h  # -L chi_k = D_k^- a_k
        chi, it, res = conjugate_gradient(neg_L, rhs, precond)
        chis.append(chi)
        iters.append(it)
        resids.append(res)
    chi = np.stack(chis)
    AH, asym = _assemble_AH(op, chi)
    return CellSolution(grid, unit, chi, AH, asym, tuple(iters), tuple(resids))


def _assemble_AH(op: DiffusionOperator, chi: np.ndarray):
    d = op.grid.dim
    A = np.empty((d, d))
    for j in range(d):
        for k in range(d):
            A[j, k] = np.mean(op.faces[j] * ((j == k) + op.gradient(chi[k], j)))
    asym = float(np.max(np.abs(A - A.T))) if d > 1 else 0.0
    return 0.5 * (A + A.T), asym


def compute_AH(sol: CellSolution) -> np.ndarray:
    """Homogenized tensor of a solved cell; recomputed from ``chi`` (gauge-free)."""
    op = DiffusionOperator(sol.grid, sol.coef, resolution=None)
    return _assemble_AH(op, sol.chi)[0]


def harmonic_mean(a: Coefficient, n: int = 1 << 16) -> float:
    """1D homogenized coefficient as the harmonic mean, by midpoint quadrature."""
    y = (np.arange(n) + 0.5) / n
    return 1.0 / float(np.mean(1.0 / a.cell(y)))


def sample_on_cell(field: np.ndarray, grid: PeriodicGrid, y) -> tuple[np.ndarray, bool]:
    """Evaluate a cell-grid scalar field at periodic points ``y`` (one array per axis).

    Returns ``(values, exact)``; ``exact`` is False when some point falls between
    cell nodes and multilinear interpolation was used.
    """
    idx = [np.asarray(yk, dtype=float) * grid.n for yk in y]
    nearest = [np.rint(i) for i in idx]
    if all(np.allclose(i, r, atol=1e-8) for i, r in zip(idx, nearest)):
        return field[tuple(r.astype(int) % grid.n for r in nearest)], True
    base = [np.floor(i).astype(int) for i in idx]
    frac = [i - b for i, b in zip(idx, base)]
    out = 0.0
    for corner in np.ndindex(*(2,) * grid.dim):
        w = 1.0
        pos = []
        for c, b, f in zip(corner, base, frac):
            w = w * (f if c else 1.0 - f)
            pos.append((b + c) % grid.n)
        out = out + w * field[tuple(pos)]
    return out, False
