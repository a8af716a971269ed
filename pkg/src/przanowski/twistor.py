"""Twistor line families, Przanowski extraction, recursion relations and the contour formula.

Conventions.  The Lax fibre coordinate is xi = xi^{1'}/xi^{0'} and a degree-k
function on the fibre is trivialised as Psi = sum_n xi^n psi_n (the U_0 chart),
so that the recursion relations read

    d^{(n+1,k)}_{A0'} psi_{n+1} = - d^{(n,k)}_{A1'} psi_n,
    d^{(n,k)}_{AA'} = nabla_{AA'} + (n - k/2) A_{AA'} - (k/4) B_{AA'}.

With this labelling psi_n lies in the kernel of *D*D at weight
(l, m) = (2n - k, 3k/2 - 2n).  The line parametrisations below use their own
fibre coordinate; :func:`fit_fibre_calibration` measures how it relates to the
Lax one.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Union

import numpy as np

from . import forms
from .expr import Ast, eval_jet, evaluate, parse
from .geometry import DEGENERACY_TOL, Background, Frame, GaugeSingularityError
from .jets import Jet, Point4
from .manifolds import CP2_K, S4H4_K
from .operators import WeightedSection, laplacian_weighted


class TwistorError(ArithmeticError):
    pass


class GaugeMismatchError(TwistorError):
    """The contact form pulled back to S1 or S2 is not proportional to dz or dzb."""


class ExtractionDomainError(TwistorError):
    """fg left the domain of the real logarithm."""


class IntegrabilityError(TwistorError):
    def __init__(self, curl):
        super().__init__(f"recursion right-hand sides are not integrable (max curl residual {curl:.3e})")
        self.curl = curl


class PoleOnContourError(TwistorError):
    pass


def _sqrt(x):
    return x.sqrt() if isinstance(x, Jet) else np.sqrt(np.asarray(x, dtype=complex))


def _conj(x):
    return np.conj(np.asarray(x, dtype=complex))


# -- line families ---------------------------------------------------------------


def _s4_lines(eps):
    def line_map(m, xi0, xi1):
        w, z, wb, zb = m
        s = _sqrt(1.0 - eps * w * wb * (1.0 + z * zb))
        return (xi0 / s, xi1 / s, (w * xi0 + wb * zb * xi1) / s, (w * z * xi0 - wb * xi1) / s)

    return line_map


def _s4_involution(Z):
    u0, u1, v0, v1 = Z
    return (-_conj(u1), _conj(u0), _conj(v1), -_conj(v0))


def _s4_conj(m):
    w, z, wb, zb = m
    return (_conj(wb), _conj(zb), _conj(w), _conj(z))


def _identity_coords(m):
    return tuple(m)


def _cp2_lines(eps):
    def line_map(m, xi0, xi1):
        W, Z, Wt, Zt = m
        a = 1.0 + Z * Zt
        D = 1.0 + W * Wt + Z * Zt
        l = (-a * xi1, xi0 / a + W * Zt * xi1, -Z * xi0 / a + W * xi1)
        p = (xi0 / D, -Wt * Z * xi0 / (a * D) + xi1, -Wt * xi0 / (a * D) - Zt * xi1)
        return l + p

    return line_map


def _cp2_involution(eps):
    H = np.array([1.0, 1.0, -eps])

    def inv(Zs):
        l, p = Zs[:3], Zs[3:]
        return tuple(H[j] * _conj(p[j]) for j in range(3)) + tuple(H[j] * _conj(l[j]) for j in range(3))

    return inv


def _cp2_conj(eps):
    def conj(m):
        W, Z, Wt, Zt = m
        return (-eps * _conj(Wt), -eps * _conj(Zt), -eps * _conj(W), -eps * _conj(Z))

    return conj


def _cp2_from_coords(eps):
    """(W, Z, Wt, Zt) from (w, z, wb, zb): z = Z, zb = -eps Zt, w = (1+Z Zt)/Wt, wb = -eps (1+Z Zt)/W."""

    def f(c):
        w, z, wb, zb = c
        Z = z
        Zt = -eps * zb
        a = 1.0 + Z * Zt
        return (-eps * a / wb, Z, a / w, Zt)

    return f


def _cp2_to_coords(eps):
    def f(m):
        W, Z, Wt, Zt = m
        a = 1.0 + Z * Zt
        return (a / Wt, Z, -eps * a / W, -eps * Zt)

    return f


def _cp2_incidence(m, Zs):
    W, Z, Wt, Zt = m
    l, p = Zs[:3], Zs[3:]
    P = (W, Z, 1.0)
    L = (Wt, Zt, 1.0)
    dot = lambda a, b: a[0] * b[0] + a[1] * b[1] + a[2] * b[2]  # noqa: E731
    return [dot(P, l), dot(p, l), dot(p, L)]


@dataclass(frozen=True)
class TwistorLineFamily:
    """A four-parameter family of twistor lines with contact form and real structure.

    ``line_map(moduli, xi0, xi1)`` returns homogeneous ambient coordinates and
    accepts jets or arrays.  ``contact`` lists (a, b, c) with tau = sum c Z_a dZ_b.
    ``blocks`` groups the ambient coordinates into projective factors.
    ``from_coords``/``to_coords`` convert between the family's moduli and the
    holomorphic coordinates (w, z, wb, zb) singled out by S1 and S2.
    """

    name: str
    eps: int
    dimension: int
    blocks: tuple
    line_map: Callable
    contact: tuple
    involution: Callable
    conj_moduli: Callable
    from_coords: Callable
    to_coords: Callable
    closed_form: str
    incidence: Callable = field(default=None)

    def lines(self, moduli, xi0, xi1):
        return self.line_map(moduli, xi0, xi1)

    def contact_pullback(self, Zs) -> Jet:
        """tau pulled back along jets ``Zs`` of the ambient coordinates; batch (4, *P)."""
        out = None
        for a, b, c in self.contact:
            t = forms.scale(Zs[a].truncate(Zs[b].order - 1), Zs[b].gradient(), 1) * c
            out = t if out is None else out + t
        return out


def builtin_family(name: str) -> TwistorLineFamily:
    """The line families of the four example manifolds."""
    if name in ("s4", "h4"):
        eps = -1 if name == "s4" else 1
        contact = ((0, 1, 1.0), (1, 0, -1.0), (2, 3, float(eps)), (3, 2, -float(eps)))
        return TwistorLineFamily(
            name, eps, 4, ((0, 1, 2, 3),), _s4_lines(eps), contact, _s4_involution, _s4_conj,
            _identity_coords, _identity_coords, S4H4_K,
        )
    if name in ("cp2", "bergmann"):
        eps = -1 if name == "cp2" else 1
        # tau = (1/2)(l^j dp_j - p_j dl^j): this sign restricts to xi0 dxi1 - xi1 dxi0 on every line
        contact = tuple((j, 3 + j, 0.5) for j in range(3)) + tuple((3 + j, j, -0.5) for j in range(3))
        return TwistorLineFamily(
            name, eps, 6, ((0, 1, 2), (3, 4, 5)), _cp2_lines(eps), contact, _cp2_involution(eps),
            _cp2_conj(eps), _cp2_from_coords(eps), _cp2_to_coords(eps), CP2_K, _cp2_incidence,
        )
    raise KeyError(f"unknown twistor family {name!r}; choose from ['bergmann', 'cp2', 'h4', 's4']")


# -- line checks -------------------------------------------------------------------


def incidence_residual(family: TwistorLineFamily, moduli, xi0, xi1) -> np.ndarray:
    """max |incidence relation| over the family's defining equations (0 for CP^3 lines)."""
    if family.incidence is None:
        return np.zeros(np.broadcast_shapes(*(np.shape(m) for m in moduli), np.shape(xi0)))
    Zs = family.lines(tuple(np.asarray(m, dtype=complex) for m in moduli), xi0, xi1)
    return np.max(np.abs(np.stack(np.broadcast_arrays(*family.incidence(moduli, Zs)))), axis=0)


def line_restriction(family: TwistorLineFamily, moduli, xi0, xi1) -> np.ndarray:
    """|tau restricted to the line - (xi0 dxi1 - xi1 dxi0)|, moduli frozen.

    The spinor (xi0, xi1) occupies the first two slots of a jet base point.
    """
    xi0 = np.asarray(xi0, dtype=complex)
    base = Point4(xi0, xi1, 0.0, 0.0, 1.0)
    m = tuple(Jet.constant(base, np.asarray(v, dtype=complex), 1) for v in moduli)
    x0, x1 = Jet.variable(base, 0, 1), Jet.variable(base, 1, 1)
    tau = family.contact_pullback(family.lines(m, x0, x1)).value
    target = np.stack(np.broadcast_arrays(-base.z, base.w, 0.0 * base.w, 0.0 * base.w))
    return np.max(np.abs(tau - target), axis=0)


@dataclass(frozen=True)
class ExtractionResult:
    at: Point4
    K: np.ndarray
    f: np.ndarray
    g: np.ndarray
    transverse: np.ndarray
    closed_form: np.ndarray

    @property
    def abs_diff(self) -> np.ndarray:
        return np.abs(self.K - self.closed_form)

    def rows(self) -> list:
        out = []
        for i in np.ndindex(self.at.shape):
            out.append({
                "moduli": [complex(c[i]).__repr__() for c in self.at.coords()],
                "K_extracted": float(np.real(self.K[i])),
                "K_closed_form": float(np.real(self.closed_form[i])),
                "abs_diff": float(self.abs_diff[i]),
            })
        return out


def extract_przanowski(family: TwistorLineFamily, lam: float, at: Point4, z_scale=1.0, tol: float = 1e-12) -> ExtractionResult:
    """K = (1/lam) ln(f g) from tau|S1 = f dz and tau|S2 = g dzb.

    ``at`` holds the coordinates (w, z, wb, zb) of the standard identification.
    With ``z_scale = a`` the identification becomes z' = a z, zb' = conj(a) zb;
    the result then refers to the same points of the manifold in the new chart.
    """
    a = complex(z_scale)
    ab = np.conj(a)
    base = Point4(at.w, a * at.z, at.wb, ab * at.zb, lam)
    w, z, wb, zb = (Jet.variable(base, d, 1) for d in range(4))
    moduli = family.from_coords((w, z / a, wb, zb / ab))
    one = Jet.constant(base, 1.0, 1)
    zero = Jet.constant(base, 0.0, 1)
    t1 = family.contact_pullback(family.lines(moduli, one, zero)).value
    t2 = family.contact_pullback(family.lines(moduli, zero, one)).value
    f, g = t1[1], t2[3]
    transverse = np.maximum(
        np.max(np.abs(t1[[0, 2, 3]]), axis=0) / np.abs(f),
        np.max(np.abs(t2[[0, 1, 2]]), axis=0) / np.abs(g),
    )
    if np.any(transverse > tol):
        raise GaugeMismatchError(f"contact form not proportional to dz / dzb (relative {transverse.max():.3e})")
    fg = f * g
    if at.is_real_slice():
        if np.any(np.abs(fg.imag) > 1e-9 * np.abs(fg)) or np.any(fg.real <= 0):
            raise ExtractionDomainError("f g is not real and positive on the real slice")
        K = np.log(fg.real) / lam
    else:
        if np.any((np.abs(fg.imag) <= 1e-14 * np.abs(fg)) & (fg.real <= 0)):
            raise ExtractionDomainError("f g lies on the branch cut of the logarithm")
        K = np.log(fg) / lam
    closed = evaluate(parse(family.closed_form), at, {"lam": lam, "eps": float(family.eps)})
    return ExtractionResult(at, K, f, g, transverse, closed)


# -- real structure ----------------------------------------------------------------


def _unit(v):
    return v / np.linalg.norm(v, axis=0, keepdims=True)


def _collinear(x, y):
    """|x - proj_y x| / |x| along axis 0."""
    yn = _unit(y)
    proj = np.sum(np.conj(yn) * x, axis=0, keepdims=True) * yn
    return np.linalg.norm(x - proj, axis=0) / np.linalg.norm(x, axis=0)


def _fibre_point(family, moduli, Zs):
    """Spinor (z0, z1) with line(moduli, z) projectively equal to Zs, and the misfit."""
    Z0 = np.stack(np.broadcast_arrays(*family.lines(moduli, 1.0, 0.0)))
    Z1 = np.stack(np.broadcast_arrays(*family.lines(moduli, 0.0, 1.0)))
    X = np.stack(np.broadcast_arrays(*Zs))
    blk = list(family.blocks[0])
    M = np.stack([Z0[blk], Z1[blk]], axis=-1)  # (len(blk), *P, 2)
    M = np.moveaxis(M, 0, -2)
    rhs = np.moveaxis(X[blk], 0, -1)[..., None]
    # batched least squares through the normal equations
    MH = np.conj(np.swapaxes(M, -1, -2))
    sol = np.linalg.solve(MH @ M, MH @ rhs)[..., 0]
    z0, z1 = sol[..., 0], sol[..., 1]
    line = np.stack(np.broadcast_arrays(*family.lines(moduli, z0, z1)))
    misfit = np.zeros(z0.shape)
    for b in family.blocks:
        misfit = np.maximum(misfit, _collinear(X[list(b)], line[list(b)]))
    return z0, z1, misfit


@dataclass(frozen=True)
class RealityReport:
    """``antipodal`` measures how far the fibre action is from xi -> -c / conj(xi) with c > 0;
    ``fibre_scale`` is the largest deviation of c from 1 (0 for the unit-sphere antipodal map)."""

    line_image: float
    involution_square: float
    antipodal: float
    fibre_scale: float
    passed: bool


def involution_reality_check(family: TwistorLineFamily, moduli, xi0, xi1, tol: float = 1e-12) -> RealityReport:
    """Check that iota maps line(m) to line(conj m), squares to the identity, and acts antipodally.

    The fibre test writes the image fibre coordinate as -c/conj(xi), xi = xi1/xi0,
    and measures how far c is from a positive real number; it is meaningful on
    real moduli (conj m = m).
    """
    moduli = tuple(np.asarray(m, dtype=complex) for m in moduli)
    Zs = family.lines(moduli, xi0, xi1)
    image = family.involution(Zs)
    target = family.conj_moduli(moduli)
    z0, z1, misfit = _fibre_point(family, target, image)
    twice = family.involution(image)
    X = np.stack(np.broadcast_arrays(*Zs))
    Y = np.stack(np.broadcast_arrays(*twice))
    square = np.zeros(misfit.shape)
    for b in family.blocks:
        square = np.maximum(square, _collinear(Y[list(b)], X[list(b)]))
    xi = np.asarray(xi1, dtype=complex) / np.asarray(xi0, dtype=complex)
    c = -(z1 / z0) * np.conj(xi)
    anti = np.where(c.real > 0, np.abs(c.imag) / np.abs(c), np.inf)
    worst = (float(misfit.max()), float(square.max()), float(anti.max()), float(np.max(np.abs(c - 1.0))))
    return RealityReport(*worst, passed=all(v < tol for v in worst[:3]))


# -- fibre calibration ---------------------------------------------------------------


@dataclass(frozen=True)
class FibreCalibration:
    """xi_lines = (alpha xi + beta) / (gamma xi + delta), with xi the Lax fibre coordinate.

    ``matrix`` has shape (2, 2, *P) normalised to unit determinant;
    ``misfit`` is the largest residual of the pointwise fit.
    """

    matrix: np.ndarray
    misfit: np.ndarray

    @property
    def is_identity(self) -> bool:
        m = self.matrix
        off = np.maximum(np.abs(m[0, 1]), np.abs(m[1, 0]))
        diag = np.abs(m[0, 0] - m[1, 1])
        return bool(np.all(off < 1e-9) and np.all(diag < 1e-9))


def _null_vector(M):
    """Right null vector of the last two axes (smallest singular value first returned)."""
    _, s, vh = np.linalg.svd(M)
    return np.conj(vh[..., -1, :]), s[..., -1] / np.maximum(s[..., 0], 1e-300)


def fit_fibre_calibration(family: TwistorLineFamily, spec, at: Point4, xis=None) -> FibreCalibration:
    """Fit the Moebius map between the Lax fibre coordinate and the lines' own.

    For each Lax xi the alpha-plane spanned by nabla_{A0'} + xi nabla_{A1'}
    must leave a point of the line fixed; for lines linear in the spinor this
    is a linear condition on that spinor.  A Moebius map is then fitted
    through the resulting pairs.
    """
    if xis is None:
        xis = np.array([0.3 + 0.1j, -0.7 + 0.4j, 1.1 - 0.2j, 0.05 - 0.9j, -1.3 - 0.6j])
    bg = Background.of(spec, at, 3)
    fr = Frame(bg)
    dual = fr.dual.value  # (4 frame, 4 coordinate, *P)
    w, z, wb, zb = (Jet.variable(at, d, 1) for d in range(4))
    moduli = family.from_coords((w, z, wb, zb))
    one = Jet.constant(at, 1.0, 1)
    zero = Jet.constant(at, 0.0, 1)
    Z0 = family.lines(moduli, one, zero)
    Z1 = family.lines(moduli, zero, one)
    z0v = np.stack([c.value for c in Z0])
    z1v = np.stack([c.value for c in Z1])
    g0 = np.stack([c.gradient().value for c in Z0])  # (dim, 4, *P)
    g1 = np.stack([c.gradient().value for c in Z1])
    pairs, misfit = [], np.zeros(at.shape)
    for xi in xis:
        rows = []
        for A in range(2):
            V = dual[2 * A] + xi * dual[2 * A + 1]  # (4, *P)
            d0 = np.einsum("ai...,i...->a...", g0, V)
            d1 = np.einsum("ai...,i...->a...", g1, V)
            for b in family.blocks:
                b = list(b)
                basis = np.stack([z0v[b], z1v[b]], axis=-1)  # (nb, *P, 2)
                basis = np.moveaxis(basis, 0, -2)
                q, _ = np.linalg.qr(basis, mode="complete")
                comp = np.conj(q[..., :, 2:])  # orthogonal complement
                cols = np.stack([np.moveaxis(d0[b], 0, -1), np.moveaxis(d1[b], 0, -1)], axis=-1)
                rows.append(np.swapaxes(comp, -1, -2) @ cols)
        M = np.concatenate(rows, axis=-2)
        v, smallest = _null_vector(M)
        pairs.append(v[..., 1] / v[..., 0])
        misfit = np.maximum(misfit, smallest)
    x = np.asarray(xis)
    y = np.stack(pairs, axis=-1)  # (*P, n)
    # y (gamma x + delta) = alpha x + beta
    A = np.stack([np.broadcast_to(x, y.shape), np.ones_like(y), -y * x, -y], axis=-1)
    coef, s = _null_vector(A)
    misfit = np.maximum(misfit, s)
    alpha, beta, gamma, delta = (coef[..., i] for i in range(4))
    det = np.sqrt(alpha * delta - beta * gamma)
    matrix = np.stack([np.stack([alpha, beta]), np.stack([gamma, delta])]) / det
    return FibreCalibration(matrix, misfit)


# -- recursion relations ---------------------------------------------------------------


PsiSource = Union[Ast, str, Callable]


@dataclass(frozen=True)
class RecursionState:
    """The coefficient psi_n of a degree-k function on the fibre, Psi = sum_n xi^n psi_n.

    ``psi`` is an expression (text or AST), a callable ``(at, order) -> Jet``,
    or a sampled array produced by :func:`recursion_step`.
    """

    k: int
    n: int
    psi: object

    @property
    def weights(self) -> tuple:
        """(l, m) = (2n - k, 3k/2 - 2n), the weight of psi_n under *D*D."""
        return (Fraction(2 * self.n - self.k), Fraction(3 * self.k, 2) - 2 * self.n)

    def jet(self, at: Point4, order: int, params=None) -> Jet:
        if isinstance(self.psi, str):
            return eval_jet(parse(self.psi), at, order, params)
        if isinstance(self.psi, np.ndarray):
            raise TypeError("a sampled state carries values only, not jets")
        if callable(self.psi) and not hasattr(self.psi, "__dataclass_fields__"):
            return self.psi(at, order)
        return eval_jet(self.psi, at, order, params)


def _d_tilde(fr: Frame, psi: Jet, a: int, n, k, o: int) -> Jet:
    """d^{(n,k)}_a psi truncated to order ``o``; a indexes (00', 01', 10', 11')."""
    A, B = fr.lee_forms
    dual = fr.dual
    Aa = forms.interior(dual[a].truncate(A.order), A, 1).truncate(o)
    Ba = forms.interior(dual[a].truncate(B.order), B, 1).truncate(o)
    nab = fr.apply(a, psi).truncate(o)
    p = psi.truncate(o)
    return nab + float(Fraction(n) - Fraction(k, 2)) * Aa * p - float(Fraction(k, 4)) * Ba * p


def twistor_derivative(spec, at: Point4, state: RecursionState, A: int, Ap: int) -> np.ndarray:
    """d^{(n,k)}_{AA'} psi_n = nabla_{AA'} psi + (n - k/2) A_{AA'} psi - (k/4) B_{AA'} psi."""
    fr = Frame(Background.of(spec, at, 3))
    psi = state.jet(at, 1, spec.params)
    return _d_tilde(fr, psi, 2 * A + Ap, state.n, state.k, 0).value


def recursion_residual(spec, at: Point4, lower: RecursionState, upper: RecursionState) -> np.ndarray:
    """max over A of |d^{(n+1,k)}_{A0'} psi_{n+1} + d^{(n,k)}_{A1'} psi_n| for consecutive states."""
    if upper.k != lower.k or upper.n != lower.n + 1:
        raise ValueError("states must be consecutive coefficients of one series")
    fr = Frame(Background.of(spec, at, 3))
    hi = upper.jet(at, 1, spec.params)
    lo = lower.jet(at, 1, spec.params)
    out = []
    for A in range(2):
        r = _d_tilde(fr, hi, 2 * A, upper.n, upper.k, 0) + _d_tilde(fr, lo, 2 * A + 1, lower.n, lower.k, 0)
        out.append(np.abs(r.value))
    return np.max(out, axis=0)


def integrability_residual(spec, at: Point4, state: RecursionState) -> np.ndarray:
    """*D*D psi_n at the weight of ``state``."""
    section = WeightedSection(state.jet(at, 2, spec.params), state.weights)
    return laplacian_weighted(spec, at, section)


def line_series(spec, family: TwistorLineFamily = None, coordinate: int = 0):
    """The two non-zero Lax-chart coefficients of a twistor coordinate of the S4/H4 lines.

    On U_0 the coordinates v_0/u_0 = w + wb zb xi_lines and v_1/u_0 = w z - wb xi_lines
    become psi_0 + psi_{-1}/xi with xi_lines = c/xi, c = -1/nabla_{01'}(wb zb)
    (the fitted calibration).  Returns (state n=-1, state n=0), k = 0.
    """
    hol, anti = (("w", "wb*zb"), ("w*z", "-wb"))[coordinate]
    anti_ast, hol_ast = parse(anti), parse(hol)
    params = spec.params

    def calibration(at, order):
        bg = Background.of(spec, at, min(order + 2, 4))
        fr = Frame(bg)
        target = eval_jet(parse("wb*zb"), at, order + 1, params)
        return -fr.apply(1, target).truncate(order).reciprocal()

    def lower(at, order):
        return calibration(at, order) * eval_jet(anti_ast, at, order, params)

    return RecursionState(0, -1, lower), RecursionState(0, 0, hol_ast)


@dataclass(frozen=True)
class SliceResult:
    """Output of :func:`recursion_step` on a two-dimensional slice.

    ``psi`` is the particular solution with psi(corner) = 0; ``mode`` is the
    solution of the homogeneous equations with mode(corner) = 1, so every
    solution on the slice is psi + kappa * mode.
    """

    state: RecursionState
    points: Point4
    psi: np.ndarray
    mode: np.ndarray
    curl: float
    constant: complex = 0.0

    def normalised(self, corner_value) -> np.ndarray:
        return self.psi + corner_value * self.mode


def _slice_points(corner, steps, nodes, free):
    c = [complex(v) for v in corner]
    i = np.arange(2 * nodes - 1) * 0.5
    I, J = np.meshgrid(i, i, indexing="ij")
    coords = [np.full(I.shape, v, dtype=complex) for v in c]
    coords[free[0]] = c[free[0]] + I * steps[0]
    coords[free[1]] = c[free[1]] + J * steps[1]
    return coords


def recursion_step(spec, state: RecursionState, corner, steps, nodes: int, direction: str = "up",
                   curl_tol: float = 1e-7) -> SliceResult:
    """Integrate the recursion relations for the next coefficient on a slice.

    ``direction="up"`` gives psi_{n+1} on the slice with (wb, zb) frozen, where
    nabla_{A0'} = (d_w, d_z); ``"down"`` gives psi_{n-1} on the slice with
    (w, z) frozen, where nabla_{A1'} spans (d_wb, d_zb).  ``corner`` is a
    complex 4-tuple, ``steps`` the complex spacings along the two free axes.
    The pair of first-order equations is integrated with RK4 along the second
    axis at the corner and then along the first axis.
    """
    if nodes < 1:
        raise ValueError("nodes must be positive")
    if direction == "up":
        free, unknown_ap, source_ap, n_new = (0, 1), 0, 1, state.n + 1
    elif direction == "down":
        free, unknown_ap, source_ap, n_new = (2, 3), 1, 0, state.n - 1
    else:
        raise ValueError("direction must be 'up' or 'down'")
    if nodes == 1:
        zero = np.zeros((1, 1), dtype=complex)
        pts = Point4(*[np.array([[complex(v)]]) for v in corner], spec.lam)
        return SliceResult(RecursionState(state.k, n_new, zero), pts, zero, np.ones((1, 1), dtype=complex), 0.0)
    coords = _slice_points(corner, steps, nodes, free)
    at = Point4(*coords, spec.lam)
    fr = Frame(Background.of(spec, at, 4))
    psi = state.jet(at, 2, spec.params)
    rhs = [-_d_tilde(fr, psi, 2 * A + source_ap, state.n, state.k, 1) for A in range(2)]
    lee_a, lee_b = fr.lee_forms
    coef = []
    for A in range(2):
        a = 2 * A + unknown_ap
        Aa = forms.interior(fr.dual[a].truncate(1), lee_a, 1).truncate(1)
        Ba = forms.interior(fr.dual[a].truncate(1), lee_b, 1).truncate(1)
        coef.append(float(Fraction(n_new) - Fraction(state.k, 2)) * Aa - float(Fraction(state.k, 4)) * Ba)
    # nabla_a = sum_j M[A, j] d_{free_j}; invert the 2x2 matrix of jets
    M = [[fr.dual[2 * A + unknown_ap][free[j]].truncate(1) for j in range(2)] for A in range(2)]
    det = M[0][0] * M[1][1] - M[0][1] * M[1][0]
    if np.any(np.abs(det.value) < DEGENERACY_TOL):
        raise GaugeSingularityError("frame vectors degenerate on the slice")
    inv = [[M[1][1] / det, -M[0][1] / det], [-M[1][0] / det, M[0][0] / det]]
    R = [inv[j][0] * rhs[0] + inv[j][1] * rhs[1] for j in range(2)]
    C = [inv[j][0] * coef[0] + inv[j][1] * coef[1] for j in range(2)]
    d0, d1 = free
    curl_c = C[0].partial(d1) - C[1].partial(d0)
    curl_r = R[0].partial(d1) - R[1].partial(d0) - C[0].value * R[1].value + C[1].value * R[0].value
    scale = max(float(np.max(np.abs(R[0].value))), float(np.max(np.abs(R[1].value))),
                float(np.max(np.abs(C[0].value))), float(np.max(np.abs(C[1].value))), 1.0)
    curl = float(max(np.max(np.abs(curl_c.value)), np.max(np.abs(curl_r.value)))) / scale
    if curl > curl_tol:
        raise IntegrabilityError(curl)
    Rv = [r.value for r in R]
    Cv = [c.value for c in C]

    def integrate(h, r, c, y0):
        """RK4 for y' = r - c y along the first axis of r, c (doubled resolution)."""
        m = (r.shape[0] + 1) // 2
        y = np.empty((m,) + r.shape[1:], dtype=complex)
        y[0] = y0
        for s in range(m - 1):
            i = 2 * s
            f = lambda j, v: r[j] - c[j] * v  # noqa: E731
            k1 = f(i, y[s])
            k2 = f(i + 1, y[s] + 0.5 * h * k1)
            k3 = f(i + 1, y[s] + 0.5 * h * k2)
            k4 = f(i + 2, y[s] + h * k3)
            y[s + 1] = y[s] + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        return y

    def solve(r0, r1):
        edge = integrate(steps[1], r1[0], Cv[1][0], 0.0)  # along the second axis at the corner
        return integrate(steps[0], r0[:, ::2], Cv[0][:, ::2], edge)

    psi_new = solve(Rv[0], Rv[1])
    # homogeneous mode with mode(corner) = 1
    edge = integrate(steps[1], np.zeros_like(Rv[1][0]), Cv[1][0], 1.0)
    mode = integrate(steps[0], np.zeros_like(Rv[0][:, ::2]), Cv[0][:, ::2], edge)
    nodes_pts = at[::2, ::2]
    return SliceResult(RecursionState(state.k, n_new, psi_new), nodes_pts, psi_new, mode, curl)


# -- contour formula -----------------------------------------------------------------


def contour_extract(series: Callable, radius: float = 1.0, nodes: int = 64, power: int = 1):
    """The xi^power Laurent coefficient (1/2 pi i) oint Psi(xi) xi^{-power-1} dxi by the trapezoidal rule.

    ``series`` may return arrays or jets; jets are combined linearly, so the
    result is then a jet as well.
    """
    if nodes < 1:
        raise ValueError("nodes must be positive")
    theta = 2.0 * np.pi * np.arange(nodes) / nodes
    xi = radius * np.exp(1j * theta)
    out = None
    for x in xi:
        v = series(x)
        val = v.value if isinstance(v, Jet) else np.asarray(v)
        if not np.all(np.isfinite(val)):
            raise PoleOnContourError(f"non-finite value of the series at xi = {x:.6g}")
        t = v * (x ** (-power) / nodes)
        out = t if out is None else out + t
    return out


def laurent_oracle(coeffs_a, coeffs_b, power: int) -> complex:
    """The xi^power coefficient of the product of two power series given by coefficient lists."""
    return complex(sum(coeffs_a[i] * coeffs_b[power - i] for i in range(power + 1)
                       if i < len(coeffs_a) and power - i < len(coeffs_b)))


def tau_f_contraction(spec, at: Point4) -> np.ndarray:
    """max |l_A contracted with tau_F| over A and xi-coefficients, tau_F = dxi - G00 - 2 xi G01 - xi^2 G11."""
    from .lax import lax_fields_from

    bg = Background.of(spec, at, 4)
    fr = Frame(bg)
    G = fr.gamma_closed.value
    worst = np.zeros(at.shape)
    for l in lax_fields_from(bg):
        v = l.values()
        D = v.shape[1]
        h = np.einsum("kd...,gk...->gd...", v[:4], G)
        res = v[4].copy()
        res -= h[0]
        res[1:] -= 2.0 * h[1][:-1]
        res[2:] -= h[2][:-2]
        worst = np.maximum(worst, np.abs(res).reshape((D,) + at.shape).max(axis=0))
    return worst


__all__ = [
    "TwistorLineFamily",
    "TwistorError",
    "GaugeMismatchError",
    "ExtractionDomainError",
    "IntegrabilityError",
    "PoleOnContourError",
    "builtin_family",
    "incidence_residual",
    "line_restriction",
    "ExtractionResult",
    "extract_przanowski",
    "RealityReport",
    "involution_reality_check",
    "FibreCalibration",
    "fit_fibre_calibration",
    "RecursionState",
    "twistor_derivative",
    "recursion_residual",
    "integrability_residual",
    "line_series",
    "SliceResult",
    "recursion_step",
    "contour_extract",
    "laurent_oracle",
    "tau_f_contraction",
]
