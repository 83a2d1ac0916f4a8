"""Spectral description of the fast corrector on the unit cell.

The discrete cell operator ``-L_yy`` (same flux-form stencil as the micro
solver) is diagonalised densely. In that basis the linearised fast dynamics
around a fixed unit vector ``b`` reduce to independent complex modes
``u_j(t) = u_j(0) exp((i - alpha) omega_j t)``, which gives closed forms for
the solution map and for the oscillatory corrector ``v``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cell import solve_cell
from .errors import TooLarge
from .grid import Coefficient, DiffusionOperator, PeriodicGrid, cross

MAX_DENSE = 4096
NEG_TOL = 1e-10


@dataclass(frozen=True)
class EigenBasis:
    grid: PeriodicGrid
    omegas: np.ndarray  # (J,), ascending, non-negative
    phis: np.ndarray  # (J,) + grid.shape, orthonormal in h^d-weighted L2
    clipped: float  # largest negative round-off eigenvalue that was set to zero

    @property
    def count(self) -> int:
        return len(self.omegas)

    def inner(self, f: np.ndarray) -> np.ndarray:
        """Expansion coefficients ``<phi_j, f>``; trailing axes of ``f`` are kept."""
        d = self.grid.dim
        flat_f = f.reshape((-1,) + f.shape[d:])
        flat_phi = self.phis.reshape(self.count, -1)
        return self.grid.cell_volume * np.tensordot(flat_phi, flat_f, axes=(1, 0))

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        """``sum_j coeffs[j] phi_j``; trailing axes of ``coeffs`` become field components."""
        out = np.tensordot(coeffs, self.phis, axes=(0, 0))
        # components first after tensordot; move them behind the grid axes
        return np.moveaxis(out, tuple(range(coeffs.ndim - 1)),
                           tuple(range(-(coeffs.ndim - 1), 0))) if coeffs.ndim > 1 else out


def eigendecompose(a: Coefficient, n: int, j_max: int | None = None) -> EigenBasis:
    """Dense symmetric eigensolve of the discrete ``-L_yy`` on an n^d cell grid."""
    grid = PeriodicGrid(a.dim, n, 1.0)
    size = n**a.dim
    if size > MAX_DENSE:
        raise TooLarge(f"dense eigensolve limited to {MAX_DENSE} unknowns, got {size}")
    j_max = size if j_max is None else j_max
    if not 1 <= j_max <= size:
        raise ValueError(f"j_max must lie in [1, {size}]")
    op = DiffusionOperator(grid, a.with_epsilon(1.0), resolution=None)
    M = -op.matrix()
    M = 0.5 * (M + M.T)
    w, V = np.linalg.eigh(M)
    w, V = w[:j_max], V[:, :j_max]
    neg = float(-w[w < 0].min()) if np.any(w < 0) else 0.0
    if neg > NEG_TOL * max(1.0, abs(w).max()):
        raise ValueError(f"operator has a negative eigenvalue {-neg:.3e}")
    w = np.clip(w, 0.0, None)
    phis = V.T / np.sqrt(grid.cell_volume)
    if phis[0].sum() < 0:
        phis[0] = -phis[0]
    for j in range(1, len(phis)):
        # fix the sign convention so results are reproducible across LAPACK builds
        k = np.argmax(np.abs(phis[j]))
        if phis[j].flat[k] < 0:
            phis[j] = -phis[j]
    return EigenBasis(grid, w, phis.reshape((j_max,) + grid.shape), neg)


def schrodinger_map(b, f: np.ndarray, alpha: float, t: float, basis: EigenBasis) -> np.ndarray:
    """Solution at time ``t`` of ``w' = -b x Lw - alpha b x b x Lw`` with ``w(0) = f``.

    The complex field ``u`` solving ``u' = -(i - alpha) L u`` is advanced mode by
    mode and mapped back by ``w = b b^T f + (I - b b^T) Re u + b x Im u``.
    """
    b = np.asarray(b, dtype=float)
    if abs(np.linalg.norm(b) - 1.0) > 1e-12:
        raise ValueError("b must be a unit vector")
    coeffs = basis.inner(f)  # (J, 3)
    growth = np.exp((1j - alpha) * basis.omegas * t)
    u = basis.synthesize(coeffs * growth[:, None])
    along = np.einsum("...c,c->...", f, b)[..., None] * b
    re, im = u.real, u.imag
    perp = re - np.einsum("...c,c->...", re, b)[..., None] * b
    return along + perp + cross(np.broadcast_to(b, im.shape), im)


@dataclass(frozen=True)
class CorrectorField:
    basis: EigenBasis
    chi_modes: np.ndarray  # (J, d); row 0 is zero
    alpha: float
    truncation_error: float

    def psi(self, tau: float) -> np.ndarray:
        """``sum_{j>=1} chi_j exp((i - alpha) omega_j tau) phi_j``, shape grid + (d,)."""
        growth = np.exp((1j - self.alpha) * self.basis.omegas * tau)
        growth[0] = 0.0
        return self.basis.synthesize(self.chi_modes * growth[:, None])

    def v(self, m0, grad_m0, tau: float) -> np.ndarray:
        return build_v(m0, grad_m0, self, tau)


def corrector_field(a: Coefficient, n: int, alpha: float, j_max: int | None = None) -> CorrectorField:
    """Eigenbasis plus the cell corrector chi expanded in it.

    The default truncation keeps ``(n/2)^d`` modes.
    """
    j_max = j_max if j_max is not None else (n // 2) ** a.dim
    basis = eigendecompose(a, n, j_max)
    sol = solve_cell(a, n, min_points=4)
    chi = np.moveaxis(sol.chi, 0, -1)  # grid + (d,)
    modes = basis.inner(chi)
    modes[0] = 0.0
    resid = chi - basis.synthesize(modes)
    trunc = float(np.sqrt(basis.grid.integrate(np.sum(resid**2, axis=-1))))
    return CorrectorField(basis, modes, alpha, trunc)


def build_v(m0, grad_m0, corr: CorrectorField, tau: float) -> np.ndarray:
    """Oscillatory corrector ``v(y, tau) = -Re(f_v Psi(y, tau))`` on the cell grid.

    ``grad_m0`` has rows = space (d x 3). Equivalent real form::

        v = -sum_j phi_j e^{-alpha w_j tau} [cos(w_j tau) G chi_j + sin(w_j tau) m0 x G chi_j]
    """
    m0 = np.asarray(m0, dtype=float)
    G = np.atleast_2d(np.asarray(grad_m0, dtype=float))
    if np.max(np.abs(G @ m0)) > 1e-10:
        raise ValueError("grad m0 must be orthogonal to m0")
    w = corr.basis.omegas
    gchi = corr.chi_modes @ G  # (J, 3): grad m0 applied to chi_j
    decay = np.exp(-corr.alpha * w * tau)
    decay[0] = 0.0
    cos_part = (decay * np.cos(w * tau))[:, None] * gchi
    sin_part = (decay * np.sin(w * tau))[:, None] * np.cross(m0, gchi)
    return -corr.basis.synthesize(cos_part + sin_part)
