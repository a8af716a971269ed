"""Truncated Taylor jets in the four complex coordinates (w, z, wb, zb).

A :class:`Jet` stores the Taylor coefficients

    c[i, j, k, l] = d_w^i d_z^j d_wb^k d_zb^l f / (i! j! k! l!)

for every multi-index of total degree <= ``order`` (at most 4).  Coefficients
are held densely, graded by total degree, so truncation to a lower order is a
prefix slice.  Every coefficient may carry trailing batch dimensions: a single
jet can describe the same function at many sample points at once, or a whole
array of functions (the components of a differential form, say).  The batch
shape broadcasts against the shape of the base point.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass

import numpy as np

VARIABLES = ("w", "z", "wb", "zb")
MAX_ORDER = 4


class JetError(ArithmeticError):
    """Base class for jet arithmetic failures."""


class SingularPointError(JetError):
    """Division by a jet whose value vanishes."""


class BranchPointError(JetError):
    """ln or sqrt evaluated at a zero value."""


class InsufficientOrderError(JetError):
    """A derivative was requested beyond the stored order."""


class JetMismatchError(JetError):
    """Jets with different base points or orders were combined."""


@dataclass(frozen=True, eq=False)
class Point4:
    """A (batch of) points on the complexified manifold plus the cosmological constant.

    On the real slice ``wb == conj(w)`` and ``zb == conj(z)``; off it the four
    coordinates are independent.
    """

    w: np.ndarray
    z: np.ndarray
    wb: np.ndarray
    zb: np.ndarray
    lam: float

    def __post_init__(self):
        lam = float(self.lam)
        if lam == 0.0 or not np.isfinite(lam):
            raise ValueError("cosmological constant must be finite and non-zero")
        arrays = np.broadcast_arrays(
            *(np.asarray(getattr(self, name), dtype=complex) for name in VARIABLES)
        )
        for name, arr in zip(VARIABLES, arrays):
            object.__setattr__(self, name, np.array(arr))
        object.__setattr__(self, "lam", lam)

    @classmethod
    def real_slice(cls, w, z, lam) -> "Point4":
        w = np.asarray(w, dtype=complex)
        z = np.asarray(z, dtype=complex)
        return cls(w, z, np.conj(w), np.conj(z), lam)

    @property
    def shape(self) -> tuple:
        return self.w.shape

    @property
    def eps(self) -> int:
        return 1 if self.lam > 0 else -1

    def coords(self) -> tuple:
        return (self.w, self.z, self.wb, self.zb)

    def is_real_slice(self, tol: float = 1e-14) -> bool:
        return bool(
            np.all(np.abs(self.wb - np.conj(self.w)) <= tol)
            and np.all(np.abs(self.zb - np.conj(self.z)) <= tol)
        )

    def same_as(self, other: "Point4") -> bool:
        if self is other:
            return True
        return (
            self.lam == other.lam
            and self.shape == other.shape
            and all(np.array_equal(a, b) for a, b in zip(self.coords(), other.coords()))
        )

    def __getitem__(self, key) -> "Point4":
        return Point4(self.w[key], self.z[key], self.wb[key], self.zb[key], self.lam)


class _Table:
    """Index bookkeeping for jets of one order."""

    def __init__(self, order: int):
        idx = [
            a for a in itertools.product(range(order + 1), repeat=4) if sum(a) <= order
        ]
        idx.sort(key=lambda a: (sum(a), tuple(-x for x in a)))
        self.order = order
        self.indices = idx
        self.position = {a: n for n, a in enumerate(idx)}
        self.size = len(idx)
        self.factorial = np.array(
            [math.prod(math.factorial(x) for x in a) for a in idx], dtype=float
        )
        # product pairs grouped by target index, for reduceat
        pairs = []
        for (i, a), (j, b) in itertools.product(enumerate(idx), repeat=2):
            s = tuple(x + y for x, y in zip(a, b))
            if sum(s) <= order:
                pairs.append((self.position[s], i, j))
        pairs.sort()
        tgt = np.array([p[0] for p in pairs])
        self.left = np.array([p[1] for p in pairs])
        self.right = np.array([p[2] for p in pairs])
        self.starts = np.searchsorted(tgt, np.arange(self.size))
        # sizes of lower orders, for truncation by prefix
        self.prefix = [
            sum(1 for a in idx if sum(a) <= q) for q in range(order + 1)
        ]

    def partial_map(self, direction: int):
        """Source positions and factors for d/dx_direction of an order-(n) jet."""
        lower = table(self.order - 1)
        src = np.empty(lower.size, dtype=int)
        fac = np.empty(lower.size)
        for n, a in enumerate(lower.indices):
            b = list(a)
            b[direction] += 1
            src[n] = self.position[tuple(b)]
            fac[n] = b[direction]
        return src, fac


@functools.lru_cache(maxsize=None)
def table(order: int) -> _Table:
    if not 0 <= order <= MAX_ORDER:
        raise ValueError(f"jet order must lie in 0..{MAX_ORDER}, got {order}")
    return _Table(order)


@functools.lru_cache(maxsize=None)
def _partial_map(order: int, direction: int):
    return table(order).partial_map(direction)


def _direction(d) -> int:
    if isinstance(d, str):
        return VARIABLES.index(d)
    d = int(d)
    if not 0 <= d < 4:
        raise ValueError(f"direction must be 0..3 or one of {VARIABLES}")
    return d


class Jet:
    """Truncated Taylor expansion of a complex function at a :class:`Point4`."""

    __slots__ = ("base", "order", "coeffs")
    __array_priority__ = 1000

    def __init__(self, base: Point4, order: int, coeffs):
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape[0] != table(order).size:
            raise ValueError("coefficient array does not match jet order")
        self.base = base
        self.order = order
        self.coeffs = coeffs

    # -- construction --------------------------------------------------
    @classmethod
    def variable(cls, base: Point4, which, order: int) -> "Jet":
        d = _direction(which)
        t = table(order)
        value = base.coords()[d]
        coeffs = np.zeros((t.size,) + value.shape, dtype=complex)
        coeffs[0] = value
        if order >= 1:
            unit = [0, 0, 0, 0]
            unit[d] = 1
            coeffs[t.position[tuple(unit)]] = 1.0
        return cls(base, order, coeffs)

    @classmethod
    def constant(cls, base: Point4, value, order: int) -> "Jet":
        value = np.broadcast_to(np.asarray(value, dtype=complex), np.broadcast_shapes(np.shape(value), base.shape))
        coeffs = np.zeros((table(order).size,) + value.shape, dtype=complex)
        coeffs[0] = value
        return cls(base, order, coeffs)

    @classmethod
    def zeros(cls, base: Point4, order: int, shape=None) -> "Jet":
        shape = base.shape if shape is None else tuple(shape)
        return cls(base, order, np.zeros((table(order).size,) + shape, dtype=complex))

    # -- inspection ----------------------------------------------------
    @property
    def value(self) -> np.ndarray:
        return self.coeffs[0]

    @property
    def shape(self) -> tuple:
        return self.coeffs.shape[1:]

    def coefficient(self, alpha) -> np.ndarray:
        """Taylor coefficient for multi-index ``alpha`` = (i, j, k, l)."""
        alpha = tuple(int(a) for a in alpha)
        if sum(alpha) > self.order:
            raise InsufficientOrderError(f"multi-index {alpha} exceeds order {self.order}")
        return self.coeffs[table(self.order).position[alpha]]

    def derivative(self, alpha) -> np.ndarray:
        """Partial derivative value d^alpha f at the base point."""
        alpha = tuple(int(a) for a in alpha)
        return self.coefficient(alpha) * math.prod(math.factorial(a) for a in alpha)

    def items(self):
        t = table(self.order)
        return zip(t.indices, self.coeffs)

    def __repr__(self):
        return f"Jet(order={self.order}, shape={self.shape}, value={self.value!r})"

    # -- structural helpers ----------------------------------------------
    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise InsufficientOrderError(f"cannot raise jet order {self.order} to {order}")
        if order == self.order:
            return self
        return Jet(self.base, order, self.coeffs[: table(order).size])

    def __getitem__(self, key) -> "Jet":
        if not isinstance(key, tuple):
            key = (key,)
        return Jet(self.base, self.order, self.coeffs[(slice(None),) + key])

    def sum(self, axis) -> "Jet":
        axes = (axis,) if np.isscalar(axis) else tuple(axis)
        axes = tuple(a + 1 if a >= 0 else a for a in axes)
        return Jet(self.base, self.order, self.coeffs.sum(axis=axes))

    def _check(self, other: "Jet"):
        if self.order != other.order:
            raise JetMismatchError(f"jet orders differ: {self.order} vs {other.order}")
        if not self.base.same_as(other.base):
            raise JetMismatchError("jets are based at different points")

    def _lift(self, other):
        if isinstance(other, Jet):
            self._check(other)
            return other
        if isinstance(other, (int, float, complex, np.number, np.ndarray)):
            return None
        return NotImplemented

    # -- ring operations -------------------------------------------------
    def __add__(self, other):
        o = self._lift(other)
        if o is NotImplemented:
            return NotImplemented
        if o is None:
            other = np.asarray(other, dtype=complex)
            shape = np.broadcast_shapes(self.shape, other.shape)
            c = np.array(np.broadcast_to(self.coeffs, (self.coeffs.shape[0],) + shape))
            c[0] = c[0] + other
            return Jet(self.base, self.order, c)
        return Jet(self.base, self.order, self.coeffs + o.coeffs)

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.base, self.order, -self.coeffs)

    def __pos__(self):
        return self

    def __sub__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            return Jet(self.base, self.order, self.coeffs - other.coeffs)
        return self + (-np.asarray(other, dtype=complex))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        o = self._lift(other)
        if o is NotImplemented:
            return NotImplemented
        if o is None:
            return Jet(self.base, self.order, self.coeffs * np.asarray(other, dtype=complex))
        return Jet(self.base, self.order, _product(self.coeffs, o.coeffs, self.order))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            return self * other.reciprocal()
        other = np.asarray(other, dtype=complex)
        if np.any(other == 0):
            raise SingularPointError("division by zero constant")
        return Jet(self.base, self.order, self.coeffs / other)

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, c):
        if isinstance(c, Jet):
            return NotImplemented
        if isinstance(c, (int, np.integer)) and c >= 0:
            result = Jet.constant(self.base, 1.0, self.order) if c == 0 else self
            for _ in range(int(c) - 1):
                result = result * self
            return result
        if isinstance(c, (int, np.integer)):
            return (self ** (-int(c))).reciprocal()
        return self.power(c)

    # -- composition with univariate functions ---------------------------
    def compose(self, series) -> "Jet":
        """Apply f given its Taylor coefficients ``series[k]`` at the value of self."""
        nil = self.coeffs.copy()
        nil[0] = 0.0
        h = Jet(self.base, self.order, nil)
        result = Jet(self.base, self.order, np.zeros_like(self.coeffs))
        result.coeffs[0] = series[self.order]
        for k in range(self.order - 1, -1, -1):
            result = result * h
            result.coeffs[0] = result.coeffs[0] + series[k]
        return result

    def reciprocal(self) -> "Jet":
        a0 = self.value
        if np.any(a0 == 0):
            raise SingularPointError("division by a jet with zero value")
        inv = 1.0 / a0
        return self.compose([(-1) ** k * inv ** (k + 1) for k in range(self.order + 1)])

    def exp(self) -> "Jet":
        e = np.exp(self.value)
        return self.compose([e / math.factorial(k) for k in range(self.order + 1)])

    def log(self) -> "Jet":
        a0 = self.value
        if np.any(a0 == 0):
            raise BranchPointError("ln evaluated at zero")
        inv = 1.0 / a0
        series = [np.log(a0)] + [(-1) ** (k + 1) * inv**k / k for k in range(1, self.order + 1)]
        return self.compose(series)

    def power(self, c) -> "Jet":
        c = complex(c) if isinstance(c, complex) else float(c)
        a0 = self.value
        if np.any(a0 == 0):
            raise BranchPointError("non-integer power evaluated at zero")
        base = a0**c
        inv = 1.0 / a0
        series, binom = [], 1.0
        for k in range(self.order + 1):
            series.append(binom * base * inv**k)
            binom = binom * (c - k) / (k + 1)
        return self.compose(series)

    def sqrt(self) -> "Jet":
        return self.power(0.5)

    # -- differentiation -------------------------------------------------
    def partial(self, direction, times: int = 1) -> "Jet":
        d = _direction(direction)
        if times > self.order:
            raise InsufficientOrderError(
                f"cannot differentiate {times} times a jet of order {self.order}"
            )
        out = self
        for _ in range(times):
            src, fac = _partial_map(out.order, d)
            fac = fac.reshape((-1,) + (1,) * len(out.shape))
            out = Jet(out.base, out.order - 1, out.coeffs[src] * fac)
        return out

    def gradient(self) -> "Jet":
        """Jet of order-1 lower with a new leading batch axis of the 4 partials."""
        parts = [self.partial(d) for d in range(4)]
        return stack(parts, axis=0)


def _product(a, b, order):
    t = table(order)
    if order == 0:
        return a * b
    prod = a[t.left] * b[t.right]
    return np.add.reduceat(prod, t.starts, axis=0)


def stack(jets, axis: int = 0) -> Jet:
    """Stack jets (equal base and order) along a new batch axis."""
    jets = list(jets)
    first = jets[0]
    for j in jets[1:]:
        first._check(j)
    shape = np.broadcast_shapes(*(j.shape for j in jets))
    arrays = [np.broadcast_to(j.coeffs, (j.coeffs.shape[0],) + shape) for j in jets]
    ax = axis + 1 if axis >= 0 else axis
    return Jet(first.base, first.order, np.stack(arrays, axis=ax))


def variables(base: Point4, order: int) -> tuple:
    """The four coordinate jets (w, z, wb, zb) at ``base``."""
    return tuple(Jet.variable(base, d, order) for d in range(4))


def jet_arith(a: Jet, b: Jet, op: str) -> Jet:
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        return a / b
    raise ValueError(f"unknown jet operation {op!r}")


def jet_elementary(a: Jet, fn: str, c=None) -> Jet:
    if fn == "exp":
        return a.exp()
    if fn == "ln":
        return a.log()
    if fn == "sqrt":
        return a.sqrt()
    if fn == "pow":
        if c is None:
            raise ValueError("pow needs an exponent")
        return a ** c
    raise ValueError(f"unknown elementary function {fn!r}")


def jet_partial(a: Jet, direction, times: int = 1) -> Jet:
    return a.partial(direction, times)
