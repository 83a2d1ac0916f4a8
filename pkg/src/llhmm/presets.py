"""Named material coefficients and macro initial fields.

Macro fields carry symbolic expressions so that their value, gradient and
Hessian at the macro point are exact; the upscaling references never touch
a grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import sympy as sp

from .errors import ConfigInvalid
from .grid import Coefficient, constant_coefficient

_Y = sp.symbols("y1 y2 y3")
_X = sp.symbols("x1 x2 x3")


def _paper_1d(y):
    return 1 + 0.5 * np.sin(2 * np.pi * y) + 0.5 * np.sin(4 * np.pi * y)


def _paper_2d(y1, y2):
    # trailing sin term has amplitude 1/4; with 1/2 the coefficient dips to -1/16
    return (0.5 + (0.5 + 0.25 * np.sin(2 * np.pi * y1)) * (0.5 + 0.25 * np.sin(2 * np.pi * y2))
            + 0.25 * np.cos(2 * np.pi * (y1 - y2)) + 0.25 * np.sin(2 * np.pi * y1))


COEFFICIENTS = {
    "paper_1d": (1, _paper_1d),
    "paper_2d": (2, _paper_2d),
}


def _symbols(dim, base):
    return _Y[:dim] if base == "y" else _X[:dim]


def _expr_locals(dim, base):
    names = {"pi": sp.pi}
    syms = _symbols(dim, base)
    for i, s in enumerate(syms):
        names[s.name] = s
    # a bare "y" / "x" is accepted in 1D
    if dim == 1:
        names[base] = syms[0]
    return names, syms


def coefficient_from_expression(text: str, dim: int, epsilon: float = 1.0) -> Coefficient:
    """Parse a unit-cell coefficient such as ``1 + 0.5*sin(2*pi*y)``.

    Variables are ``y`` (1D) or ``y1, y2``. Periodicity is the caller's
    responsibility; it is spot-checked here.
    """
    names, syms = _expr_locals(dim, "y")
    try:
        expr = sp.sympify(text, locals=names)
    except (sp.SympifyError, SyntaxError, TypeError) as exc:
        raise ConfigInvalid(f"coefficient: cannot parse {text!r}: {exc}") from None
    extra = expr.free_symbols - set(syms)
    if extra:
        raise ConfigInvalid(f"coefficient: unknown symbols {sorted(map(str, extra))}")
    f = sp.lambdify(syms, expr, "numpy")
    probe = np.linspace(0.0, 1.0, 7)
    pts = np.meshgrid(*([probe] * dim), indexing="ij")
    for k in range(dim):
        shifted = [p + (1.0 if i == k else 0.0) for i, p in enumerate(pts)]
        base = np.broadcast_to(np.asarray(f(*pts), dtype=float), pts[0].shape)
        moved = np.broadcast_to(np.asarray(f(*shifted), dtype=float), pts[0].shape)
        if not np.allclose(base, moved, atol=1e-9):
            raise ConfigInvalid(f"coefficient: {text!r} is not 1-periodic along axis {k + 1}")
    return Coefficient(f, dim, epsilon, name=f"expr:{text}", constant=not expr.free_symbols)


def get_coefficient(name: str, dim: int, epsilon: float = 1.0) -> Coefficient:
    """Resolve ``paper_1d``, ``paper_2d``, ``const:<value>`` or ``expr:<formula>``."""
    if name in COEFFICIENTS:
        cdim, func = COEFFICIENTS[name]
        if cdim != dim:
            raise ConfigInvalid(f"coefficient {name!r} is {cdim}D but dimension is {dim}")
        return Coefficient(func, dim, epsilon, name=name)
    if name.startswith("const:"):
        c = constant_coefficient(float(name[6:]), dim)
        return Coefficient(c.func, dim, epsilon, c.a_min, c.a_max, name, True)
    if name.startswith("expr:"):
        return coefficient_from_expression(name[5:], dim, epsilon)
    raise ConfigInvalid(f"unknown coefficient preset {name!r}")


@dataclass(frozen=True)
class MacroField:
    """Smooth unit vector field ``normalize(raw(x))`` given symbolically.

    ``raw`` is a tuple of three sympy expressions in ``x1..xd``.
    """

    name: str
    dim: int
    raw: tuple

    @cached_property
    def _syms(self):
        return _X[: self.dim]

    @cached_property
    def expr(self):
        raw = sp.Matrix(self.raw)
        return raw / sp.sqrt(sum(c**2 for c in raw))

    @cached_property
    def _fn(self):
        return sp.lambdify(self._syms, list(self.expr), "numpy")

    @cached_property
    def _raw_fn(self):
        return sp.lambdify(self._syms, list(self.raw), "numpy")

    def __call__(self, *x) -> np.ndarray:
        """Vector field values, shape ``x[0].shape + (3,)``."""
        shape = np.broadcast(*x).shape
        vals = [np.broadcast_to(np.asarray(v, dtype=float), shape) for v in self._fn(*x)]
        return np.stack(vals, axis=-1)

    def raw_values(self, *x) -> np.ndarray:
        shape = np.broadcast(*x).shape
        vals = [np.broadcast_to(np.asarray(v, dtype=float), shape) for v in self._raw_fn(*x)]
        return np.stack(vals, axis=-1)

    def _at_origin(self, exprs):
        subs = {s: 0 for s in self._syms}
        return np.array([[float(sp.N(e.subs(subs), 30)) for e in row] for row in exprs])

    @cached_property
    def value0(self) -> np.ndarray:
        return self._at_origin([list(self.expr)])[0]

    @cached_property
    def gradient0(self) -> np.ndarray:
        """``G[k, c] = d m_c / d x_k`` at the origin, shape (d, 3)."""
        return self._at_origin([[sp.diff(c, s) for c in self.expr] for s in self._syms])

    @cached_property
    def hessian0(self) -> np.ndarray:
        """``H[j, k, c] = d^2 m_c / dx_j dx_k`` at the origin, shape (d, d, 3)."""
        rows = []
        for sj in self._syms:
            for sk in self._syms:
                rows.append([sp.diff(c, sj, sk) for c in self.expr])
        return self._at_origin(rows).reshape(self.dim, self.dim, 3)

    def taylor_raw(self, *x) -> np.ndarray:
        """Degree-2 Taylor polynomial of the normalised field about the origin."""
        shape = np.broadcast(*x).shape
        out = np.broadcast_to(self.value0, shape + (3,)).copy()
        for k in range(self.dim):
            out += np.asarray(x[k])[..., None] * self.gradient0[k]
            for j in range(self.dim):
                out += 0.5 * (np.asarray(x[j]) * np.asarray(x[k]))[..., None] * self.hessian0[j, k]
        return out


_x1, _x2 = _X[0], _X[1]
_tp = 2 * sp.pi

MACRO_FIELDS = {
    "helix": MacroField("helix", 1, (sp.cos(_tp * _x1), sp.sin(_tp * _x1), sp.Integer(1))),
    "helix2d": MacroField("helix2d", 2, (sp.cos(_tp * _x1), sp.sin(_tp * _x2), sp.Integer(1))),
    "uniform": MacroField("uniform", 1, (sp.Integer(0), sp.Integer(0), sp.Integer(1))),
    "uniform2d": MacroField("uniform2d", 2, (sp.Integer(0), sp.Integer(0), sp.Integer(1))),
}


def get_macro_field(name: str, dim: int) -> MacroField:
    if name in MACRO_FIELDS:
        field = MACRO_FIELDS[name]
        if field.dim != dim:
            # same formula lifted/restricted to another dimension
            field = MacroField(f"{name}", dim, field.raw) if _fits(field, dim) else None
        if field is None:
            raise ConfigInvalid(f"macro field {name!r} is not defined in {dim}D")
        return field
    if name.startswith("expr:"):
        parts = [p.strip() for p in name[5:].split(";")]
        if len(parts) != 3:
            raise ConfigInvalid("macro field expression needs three ';'-separated components")
        names, syms = _expr_locals(dim, "x")
        try:
            raw = tuple(sp.sympify(p, locals=names) for p in parts)
        except (sp.SympifyError, SyntaxError, TypeError) as exc:
            raise ConfigInvalid(f"m_init: cannot parse {name!r}: {exc}") from None
        return MacroField(name, dim, raw)
    raise ConfigInvalid(f"unknown macro field preset {name!r}")


def _fits(field: MacroField, dim: int) -> bool:
    used = set().union(*(sp.sympify(c).free_symbols for c in field.raw))
    return used <= set(_X[:dim])
