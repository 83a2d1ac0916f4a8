"""Compactly supported averaging kernels with vanishing moments.

A kernel in the class (p, q) integrates to one, has vanishing moments of
orders 1..p, and its first q derivatives vanish at the ends of its support.
Two families are built from the same polynomial ansatz:

* ``one_sided``: ``t^(q+1) (1-t)^(q+1) P(t)`` on ``(0, 1)``, used for time
  averaging from the macro time forward;
* ``symmetric``: ``(1-t^2)^(q+1) P(t)`` on ``(-1, 1)`` with even ``P``, used
  for space averaging.

The coefficients of ``P`` solve a small Hankel system whose entries are
Beta integrals in closed form. The system is badly conditioned (coefficients
grow like 10^(2p)), so it is solved in extended precision and only the
result is rounded to float.
"""

from __future__ import annotations

from dataclasses import dataclass

import mpmath
import numpy as np

from .errors import IllConditioned

FAMILIES = ("symmetric", "one_sided")
MAX_P = 12
MASS_TOL = 1e-10
MOMENT_TOL = 1e-8
_DPS = 60


@dataclass(frozen=True)
class KernelSpec:
    p: int
    q: int
    family: str = "one_sided"

    def __post_init__(self):
        if self.p < 0 or self.q < 0:
            raise ValueError(f"kernel orders must be non-negative, got p={self.p}, q={self.q}")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")


@dataclass(frozen=True)
class Kernel:
    spec: KernelSpec
    coeffs: tuple  # c_0 .. c_p, ascending powers of t

    @property
    def p(self):
        return self.spec.p

    @property
    def q(self):
        return self.spec.q

    @property
    def family(self):
        return self.spec.family

    @property
    def support(self) -> tuple[float, float]:
        return (0.0, 1.0) if self.family == "one_sided" else (-1.0, 1.0)

    def weight(self, t):
        t = np.asarray(t, dtype=float)
        e = self.q + 1
        if self.family == "one_sided":
            return t**e * (1.0 - t) ** e
        return (1.0 - t * t) ** e

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        lo, hi = self.support
        inside = (t > lo) & (t < hi)
        poly = np.polynomial.polynomial.polyval(t, np.asarray(self.coeffs))
        return np.where(inside, self.weight(t) * poly, 0.0)

    def moments(self, rmax: int | None = None, nodes: int = 96) -> np.ndarray:
        """Moments ``int K(t) t^r dt`` for r = 0..rmax by Gauss-Legendre quadrature.

        The integrand is a polynomial on the support, so the rule is exact up to
        degree ``2*nodes - 1``.
        """
        rmax = self.p if rmax is None else rmax
        x, w = np.polynomial.legendre.leggauss(nodes)
        lo, hi = self.support
        t = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
        w = 0.5 * (hi - lo) * w
        k = self(t)
        return np.array([np.sum(w * k * t**r) for r in range(rmax + 1)])




def _verify(kernel: Kernel):
    mom = kernel.moments()
    resid = mom - np.eye(1, kernel.p + 1)[0]
    if abs(resid[0]) > MASS_TOL or np.any(np.abs(resid[1:]) > MOMENT_TOL):
        raise IllConditioned(
            f"kernel (p={kernel.p}, q={kernel.q}, {kernel.family}) fails moment check, "
            f"max residual {np.max(np.abs(resid)):.2e}")
    return kernel


def _solve_hankel(moment, size):
    """Solve ``sum_j moment(i + j) c_j = delta_i0`` for ``i < size`` in extended precision."""
    with mpmath.workdps(_DPS):
        vals = [moment(k) for k in range(2 * size - 1)]
        H = mpmath.matrix(size, size)
        for i in range(size):
            for j in range(size):
                H[i, j] = vals[i + j]
        rhs = mpmath.matrix([1] + [0] * (size - 1))
        return [float(v) for v in mpmath.lu_solve(H, rhs)]


def build_one_sided(p: int, q: int) -> Kernel:
    spec = KernelSpec(p, q, "one_sided")
    if p > MAX_P:
        raise IllConditioned(f"p={p} exceeds the conditioning guard p <= {MAX_P}")
    # I_j = int_0^1 t^(q+1+j) (1-t)^(q+1) dt = B(q+2+j, q+2)
    c = _solve_hankel(lambda j: mpmath.beta(q + 2 + j, q + 2), p + 1)
    return _verify(Kernel(spec, tuple(c)))


def build_symmetric(p: int, q: int) -> Kernel:
    spec = KernelSpec(p, q, "symmetric")
    if p > MAX_P:
        raise IllConditioned(f"p={p} exceeds the conditioning guard p <= {MAX_P}")
    m = p // 2 + 1  # even powers 0, 2, .., 2(m-1) <= p
    # int_{-1}^{1} t^(2k) (1-t^2)^(q+1) dt = B(k + 1/2, q + 2)
    even = _solve_hankel(lambda k: mpmath.beta(k + mpmath.mpf(1) / 2, q + 2), m)
    c = np.zeros(p + 1)
    c[0::2] = even[: len(c[0::2])]
    return _verify(Kernel(spec, tuple(float(v) for v in c)))


def build(spec: KernelSpec) -> Kernel:
    if spec.family == "one_sided":
        return build_one_sided(spec.p, spec.q)
    return build_symmetric(spec.p, spec.q)


def eval_scaled(K: Kernel, scale: float, x):
    """``K_scale(x) = K(x / scale) / scale``."""
    if not scale > 0:
        raise ValueError("scale must be positive")
    return K(np.asarray(x, dtype=float) / scale) / scale


def eval_tensor(K: Kernel, scale: float, x):
    """Tensor-product kernel: product of per-axis scaled evaluations.

    ``x`` is a sequence of d coordinate arrays (or a length-d point).
    """
    out = 1.0
    for xk in x:
        out = out * eval_scaled(K, scale, xk)
    return out
