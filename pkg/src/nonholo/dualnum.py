"""First-order dual numbers for forward-mode derivative propagation.

A :class:`Dual` carries a value, one tangent, and a perturbation level.
Components may themselves be duals, so nesting levels gives exact second and
third derivatives.  The level tag keeps simultaneous perturbations apart:
arithmetic between duals of different levels treats the lower level as a
constant, which is what makes expressions like "gradient of a function that
captures an outer-seeded value" come out right.

Each helper (`derivative`, `gradient`, `jacobian`, `directional`) allocates
a fresh level, seeds with it, and collapses it before returning, so callers
never see a half-open perturbation.

All functions in this module accept plain floats or duals, so any code
written against them is differentiable for free.
"""

from __future__ import annotations

import itertools
import math

from .errors import DomainError

_TAN_POLE_EPS = 1e-15
_LEVELS = itertools.count(1)


def _new_level() -> int:
    return next(_LEVELS)


class Dual:
    """Value plus tangent at one perturbation level."""

    __slots__ = ("re", "du", "level")

    def __init__(self, re, du=0.0, level=None):
        self.re = re
        self.du = du
        self.level = _new_level() if level is None else level

    def __repr__(self):
        return f"Dual({self.re!r}, {self.du!r}, level={self.level})"

    # Binary rules: same level combines tangents; a lower level is a
    # constant; a higher level takes over (delegation).

    def __add__(self, other):
        if isinstance(other, Dual):
            if other.level == self.level:
                return Dual(self.re + other.re, self.du + other.du, self.level)
            if other.level > self.level:
                return other.__add__(self)
        return Dual(self.re + other, self.du, self.level)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            if other.level == self.level:
                return Dual(self.re - other.re, self.du - other.du, self.level)
            if other.level > self.level:
                return other.__rsub__(self)
        return Dual(self.re - other, self.du, self.level)

    def __rsub__(self, other):
        # other is a constant here (plain number or lower level)
        return Dual(other - self.re, -self.du, self.level)

    def __mul__(self, other):
        if isinstance(other, Dual):
            if other.level == self.level:
                return Dual(self.re * other.re,
                            self.re * other.du + self.du * other.re, self.level)
            if other.level > self.level:
                return other.__mul__(self)
        return Dual(self.re * other, self.du * other, self.level)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            if other.level == self.level:
                if real(other.re) == 0.0:
                    raise DomainError("division by zero")
                q = self.re / other.re
                return Dual(q, (self.du - q * other.du) / other.re, self.level)
            if other.level > self.level:
                return other.__rtruediv__(self)
        if real(other) == 0.0:
            raise DomainError("division by zero")
        return Dual(self.re / other, self.du / other, self.level)

    def __rtruediv__(self, other):
        # constant / self
        if real(self.re) == 0.0:
            raise DomainError("division by zero")
        q = other / self.re
        return Dual(q, -q * self.du / self.re, self.level)

    def __neg__(self):
        return Dual(-self.re, -self.du, self.level)

    def __pos__(self):
        return self

    def __pow__(self, exponent):
        if isinstance(exponent, Dual):
            return exp(exponent * log(self))
        if exponent == 0:
            return Dual(_pow(self.re, 0), 0.0, self.level)
        if exponent == 1:
            return Dual(self.re, self.du, self.level)
        return Dual(_pow(self.re, exponent),
                    (exponent * _pow(self.re, exponent - 1)) * self.du,
                    self.level)

    def __rpow__(self, base):
        return exp(self * log(base))


def _pow(x, c):
    """x**c for a real constant c; funnels float errors into DomainError."""
    if isinstance(x, Dual):
        return x ** c
    try:
        return math.pow(x, c)
    except ValueError as err:  # negative base, fractional exponent
        raise DomainError(f"{x!r} ** {c!r}: {err}") from None
    except OverflowError as err:
        raise DomainError(f"{x!r} ** {c!r}: {err}") from None
    except ZeroDivisionError:
        raise DomainError(f"0.0 ** {c!r}: negative power of zero") from None


def real(x):
    """Innermost value of a possibly nested dual."""
    while isinstance(x, Dual):
        x = x.re
    return x


def tangent_at(x, level: int):
    """Tangent of ``x`` with respect to the perturbation ``level``."""
    if isinstance(x, Dual) and x.level == level:
        return x.du
    return 0.0


def tangent(x):
    """Tangent at the outermost level of ``x`` (0.0 for plain numbers)."""
    return x.du if isinstance(x, Dual) else 0.0


# -- elementary functions ----------------------------------------------------

def sin(x):
    if isinstance(x, Dual):
        return Dual(sin(x.re), cos(x.re) * x.du, x.level)
    return math.sin(x)


def cos(x):
    if isinstance(x, Dual):
        return Dual(cos(x.re), -sin(x.re) * x.du, x.level)
    return math.cos(x)


def tan(x):
    if isinstance(x, Dual):
        t = tan(x.re)
        return Dual(t, (1.0 + t * t) * x.du, x.level)
    if abs(math.cos(x)) <= _TAN_POLE_EPS:
        raise DomainError(f"tan evaluated at a pole (x={x!r})")
    return math.tan(x)


def sqrt(x):
    if isinstance(x, Dual):
        s = sqrt(x.re)
        if real(s) == 0.0:
            raise DomainError("sqrt derivative at zero")
        return Dual(s, x.du / (2.0 * s), x.level)
    if x < 0.0:
        raise DomainError(f"sqrt of negative value {x!r}")
    return math.sqrt(x)


def exp(x):
    if isinstance(x, Dual):
        e = exp(x.re)
        return Dual(e, e * x.du, x.level)
    try:
        return math.exp(x)
    except OverflowError:
        raise DomainError(f"exp overflow at {x!r}") from None


def log(x):
    if isinstance(x, Dual):
        if real(x.re) <= 0.0:
            raise DomainError(f"log of non-positive value {real(x.re)!r}")
        return Dual(log(x.re), x.du / x.re, x.level)
    if x <= 0.0:
        raise DomainError(f"log of non-positive value {x!r}")
    return math.log(x)


# -- differentiation helpers --------------------------------------------------

def derivative(fn, x):
    """d fn / dx at ``x`` for a scalar function of one scalar."""
    lvl = _new_level()
    return tangent_at(fn(Dual(x, 1.0, lvl)), lvl)


def gradient(fn, xs):
    """Partials of a scalar function with respect to each entry of ``xs``."""
    out = []
    for k in range(len(xs)):
        lvl = _new_level()
        seeded = [Dual(x, 1.0 if i == k else 0.0, lvl) for i, x in enumerate(xs)]
        out.append(tangent_at(fn(seeded), lvl))
    return out


def jacobian(fn, xs):
    """Jacobian rows of a vector function: J[i][k] = d fn_i / d xs_k."""
    cols = []
    for k in range(len(xs)):
        lvl = _new_level()
        seeded = [Dual(x, 1.0 if i == k else 0.0, lvl) for i, x in enumerate(xs)]
        cols.append([tangent_at(v, lvl) for v in fn(seeded)])
    p = len(cols[0]) if cols else 0
    return [[cols[k][i] for k in range(len(xs))] for i in range(p)]


def map_structure(fn, obj):
    """Apply ``fn`` to every scalar leaf of nested lists/tuples."""
    if isinstance(obj, (list, tuple)):
        return [map_structure(fn, o) for o in obj]
    return fn(obj)


def partials(fn, xs):
    """List over k of the partial of ``fn`` (any nesting of lists of
    scalars) with respect to xs[k], each with the structure of fn's value."""
    outs = []
    for k in range(len(xs)):
        lvl = _new_level()
        seeded = [Dual(x, 1.0 if i == k else 0.0, lvl) for i, x in enumerate(xs)]
        outs.append(map_structure(lambda leaf: tangent_at(leaf, lvl), fn(seeded)))
    return outs


def directional(fn, xs, ds):
    """Directional derivative of ``fn`` (any nesting of lists of scalars)
    at ``xs`` along ``ds``; returns the same structure of tangents."""
    lvl = _new_level()
    seeded = [Dual(x, d, lvl) for x, d in zip(xs, ds)]
    return map_structure(lambda leaf: tangent_at(leaf, lvl), fn(seeded))
