"""The Lax pair of Przanowski's equation and its commutator, with xi an exact polynomial variable."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import DEGENERACY_TOL, Background, GaugeSingularityError
from .jets import Jet, Point4, stack

DIRECTIONS = ("w", "z", "wb", "zb", "xi")
XI = 4


@dataclass(frozen=True)
class XiPolyVectorField:
    """sum_k P_k(xi) d_k over the directions (d_w, d_z, d_wb, d_zb, d_xi).

    ``coeffs`` is a jet with batch (5, degree + 1, *points): entry [k, n] is the
    coefficient of xi^n in P_k.
    """

    coeffs: Jet

    @property
    def degree(self) -> int:
        return self.coeffs.shape[1] - 1

    @property
    def base(self) -> Point4:
        return self.coeffs.base

    def values(self) -> np.ndarray:
        return self.coeffs.value

    def component(self, direction) -> np.ndarray:
        k = DIRECTIONS.index(direction) if isinstance(direction, str) else direction
        return self.coeffs.value[k]

    def max_abs(self) -> np.ndarray:
        v = np.abs(self.coeffs.value)
        return v.reshape((-1,) + v.shape[2:]).max(axis=0)

    def evaluate(self, xi) -> np.ndarray:
        """Component values at a numerical xi, shape (5, *points)."""
        v = self.coeffs.value
        powers = np.asarray(xi, dtype=complex) ** np.arange(v.shape[1]).reshape((-1,) + (1,) * (v.ndim - 2))
        return (v * powers).sum(axis=1)


def _poly_mul(a: Jet, b: Jet, degree: int) -> Jet:
    """Product of xi-polynomials with jet coefficients (batch (D, *P)), truncated at ``degree``."""
    terms = []
    for n in range(degree + 1):
        acc = None
        for i in range(min(n, a.shape[0] - 1) + 1):
            j = n - i
            if j >= b.shape[0]:
                continue
            t = a[i] * b[j]
            acc = t if acc is None else acc + t
        terms.append(acc if acc is not None else Jet.zeros(a.base, a.order, a.shape[1:]))
    return stack(terms, axis=0)


def _poly_dxi(a: Jet) -> Jet:
    """d/dxi of a polynomial with batch (D, *P), keeping D slots."""
    c = np.zeros_like(a.coeffs)
    D = a.shape[0]
    n = np.arange(1, D).reshape((-1,) + (1,) * (c.ndim - 2))
    c[:, : D - 1] = a.coeffs[:, 1:] * n
    return Jet(a.base, a.order, c)


def _field(base, order, degree, entries) -> XiPolyVectorField:
    """Build a field from {(direction, power): jet or scalar}."""
    c = np.zeros((Jet.zeros(base, order).coeffs.shape[0], 5, degree + 1) + base.shape, dtype=complex)
    for (k, n), v in entries.items():
        if isinstance(v, Jet):
            c[:, k, n] += v.truncate(order).coeffs
        else:
            c[0, k, n] += v
    return XiPolyVectorField(Jet(base, order, c))


def lax_fields_from(bg: Background, degree: int = 4):
    """l_0, l_1 built from a background; coefficient jets have order ``bg.order - 3``."""
    o = bg.order - 3
    if o < 0:
        raise ValueError("the Lax fields need K to order >= 3")
    for name, f in (("K_w", bg.Kw), ("K_wb", bg.Kwb), ("tilde K", bg.tilde_k)):
        if np.any(np.abs(f.value) < DEGENERACY_TOL):
            raise GaugeSingularityError(f"{name} vanishes at a sample point")
    t = lambda j: j.truncate(o)  # noqa: E731
    kt = bg.tilde_k
    inv = t(kt).reciprocal()
    e = t(bg.expK)
    Kw, Kwb = t(bg.Kw), t(bg.Kwb)
    x0 = (t(kt.partial(0)) + e * Kw * t(bg.Kwwb)) * inv - t(bg.Kwwb) / Kwb
    x1 = (t(kt.partial(1)) + e * Kw * t(bg.Kzwb)) * inv - t(bg.Kzwb) / Kwb
    x1_xi = -(e * Kwb) * inv + Kw.reciprocal()
    l0 = _field(bg.base, o, degree, {
        (0, 0): 1.0,
        (2, 1): -t(bg.Kwzb) * inv,
        (3, 1): t(bg.Kwwb) * inv,
        (XI, 1): x0,
    })
    l1 = _field(bg.base, o, degree, {
        (1, 0): 1.0,
        (2, 1): -t(bg.Q) * inv,
        (3, 1): t(bg.Kzwb) * inv,
        (XI, 1): x1,
        (XI, 2): x1_xi,
    })
    return l0, l1


def lax_fields_at(spec, at: Point4, order: int = 4, degree: int = 4):
    """The Lax pair (l_0, l_1) at ``at``; coefficients carry jets of order ``order - 3``."""
    return lax_fields_from(Background.of(spec, at, order), degree)


def _apply(X: XiPolyVectorField, f: Jet, degree: int) -> Jet:
    """X(f) for a xi-polynomial f with batch (D, *P); result order drops by one."""
    o = X.coeffs.order - 1
    out = None
    for k in range(4):
        t = _poly_mul(X.coeffs[k].truncate(o), f.partial(k), degree)
        out = t if out is None else out + t
    t = _poly_mul(X.coeffs[XI].truncate(o), _poly_dxi(f).truncate(o), degree)
    return out + t


def lax_commutator(l0: XiPolyVectorField, l1: XiPolyVectorField) -> XiPolyVectorField:
    """[l0, l1]^k = l0(l1^k) - l1(l0^k), exactly in xi; coefficient order drops by one."""
    if not l0.base.same_as(l1.base):
        raise ValueError("fields live at different points")
    if l0.coeffs.order < 1 or l1.coeffs.order < 1:
        from .jets import InsufficientOrderError

        raise InsufficientOrderError("commutator needs coefficient jets of order >= 1")
    degree = max(l0.degree, l1.degree)
    comps = []
    for k in range(5):
        comps.append(_apply(l0, l1.coeffs[k], degree) - _apply(l1, l0.coeffs[k], degree))
    return XiPolyVectorField(stack(comps, axis=0))


@dataclass(frozen=True)
class CommutatorDecomp:
    """[l0, l1] = A nabla_{01'} + B nabla_{11'} + (C1 xi + C2 xi^2 + C3 xi^3) d_xi.

    ``A`` and ``B`` are coefficient arrays in xi with shape (degree + 1, *points).
    """

    A: np.ndarray
    B: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    C3: np.ndarray

    def as_array(self) -> np.ndarray:
        C = np.zeros_like(self.A)
        C[1], C[2], C[3] = self.C1, self.C2, self.C3
        return np.stack([self.A, self.B, C])

    def scale(self) -> np.ndarray:
        v = np.abs(self.as_array())
        return v.reshape((-1,) + v.shape[2:]).max(axis=0)


def decompose_commutator(bg: Background, comm: XiPolyVectorField):
    """Express the commutator in the basis {nabla_{01'}, nabla_{11'}, xi^n d_xi}.

    Returns the decomposition and the leftover d_w, d_z components (which should vanish).
    """
    v = comm.values()
    kt = bg.tilde_k.value
    # columns: nabla_{01'} = (-K_wzb d_wb + K_wwb d_zb)/tK, nabla_{11'} = (-Q d_wb + K_zwb d_zb)/tK
    M = np.stack([
        np.stack([-bg.Kwzb.value / kt, -bg.Q.value / kt]),
        np.stack([bg.Kwwb.value / kt, bg.Kzwb.value / kt]),
    ])  # (2 rows, 2 cols, *P)
    Mm = np.moveaxis(M, (0, 1), (-2, -1))
    rhs = np.moveaxis(v[2:4], 0, -1)  # (D, *P, 2)
    sol = np.linalg.solve(Mm[None], rhs[..., None])[..., 0]
    sol = np.moveaxis(sol, -1, 0)  # (2, D, *P)
    xi = v[XI]
    decomp = CommutatorDecomp(sol[0], sol[1], xi[1], xi[2], xi[3])
    leftover = np.concatenate([v[0:2].reshape((-1,) + v.shape[2:]), xi[[0] + list(range(4, xi.shape[0]))]])
    return decomp, leftover


def commutator_decomposition(spec, at: Point4, order: int = 4):
    bg = Background.of(spec, at, order)
    l0, l1 = lax_fields_from(bg)
    return decompose_commutator(bg, lax_commutator(l0, l1))


def appendix_a_coefficients(spec, at: Point4, degree: int = 4) -> CommutatorDecomp:
    """A, B, C1, C2, C3 from closed formulas in K (needs K to order 4).

    With P = tilde K + K_w K_wb e^{lam K} and F = e^{lam K} K_w K_wb / tilde K:
    A = (xi K_w K_zwb - xi^2 K_wb) P / (tilde K K_w K_wb), B = -xi K_wwb P / (tilde K K_wb),
    C1 = -(K_wwb d_z - K_zwb d_w) F / K_wb, C3 = -nabla_{01'} F / K_w, and C2 as noted below.
    """
    bg = Background.of(spec, at, 4)
    for name, f in (("K_w", bg.Kw), ("K_wb", bg.Kwb), ("tilde K", bg.tilde_k)):
        if np.any(np.abs(f.value) < DEGENERACY_TOL):
            raise GaugeSingularityError(f"{name} vanishes at a sample point")
    o = 2
    t = lambda j: j.truncate(o)  # noqa: E731
    Kw, Kwb, e, kt = t(bg.Kw), t(bg.Kwb), t(bg.expK), bg.tilde_k
    F = e * Kw * Kwb / kt  # e^{lam K} K_w K_wb / tilde K
    P = (kt + Kw * Kwb * e).value
    kv, Kwv, Kwbv = kt.value, Kw.value, Kwb.value
    shape = (degree + 1,) + bg.base.shape
    A = np.zeros(shape, dtype=complex)
    B = np.zeros(shape, dtype=complex)
    A[1] = Kwv * bg.Kzwb.value * P / (kv * Kwv * Kwbv)
    A[2] = -Kwbv * P / (kv * Kwv * Kwbv)
    B[1] = -bg.Kwwb.value * P / (kv * Kwbv)

    def nab(a, f: Jet) -> Jet:
        """nabla_a f with a in (00', 01', 10', 11')."""
        g = [f.partial(i) for i in range(4)]
        oo = g[0].order
        inv = kt.truncate(oo).reciprocal()
        if a == 0:
            return g[0]
        if a == 2:
            return g[1]
        if a == 1:
            return (-bg.Kwzb.truncate(oo) * g[2] + bg.Kwwb.truncate(oo) * g[3]) * inv
        return (-bg.Q.truncate(oo) * g[2] + bg.Kzwb.truncate(oo) * g[3]) * inv

    F1 = F.truncate(1)
    C1 = -(bg.Kwwb.value * F1.partial(1).value - bg.Kzwb.value * F1.partial(0).value) / Kwbv
    C3 = -nab(1, F1).value / Kwv
    # xi^2 coefficient: d_w Y + X0 Y + nabla_{01'} X1 - nabla_{11'} X0 with Y = (1 - F)/K_w
    # and X0, X1 the xi-linear d_xi coefficients of l_0, l_1
    u = lambda j: j.truncate(1)  # noqa: E731
    inv = u(kt).reciprocal()
    X0 = (kt.partial(0) + u(e) * u(Kw) * u(bg.Kwwb)) * inv - u(bg.Kwwb) / u(Kwb)
    X1 = (kt.partial(1) + u(e) * u(Kw) * u(bg.Kzwb)) * inv - u(bg.Kzwb) / u(Kwb)
    Y = (1.0 - F) / Kw
    C2 = Y.partial(0).value + X0.value * Y.value + nab(1, X1).value - nab(3, X0).value
    return CommutatorDecomp(A, B, C1, C2, C3)


__all__ = [
    "XiPolyVectorField",
    "CommutatorDecomp",
    "lax_fields_at",
    "lax_fields_from",
    "lax_commutator",
    "decompose_commutator",
    "commutator_decomposition",
    "appendix_a_coefficients",
]
