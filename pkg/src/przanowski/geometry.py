"""Tetrad, connection and curvature of the metric determined by a Przanowski function.

Spinor conventions: eps_{01} = eps^{01} = 1, indices are lowered as
psi_A = psi^B eps_{BA} and raised as psi^A = eps^{AB} psi_B.  The tetrad index
a = 2A + A' runs over (00', 01', 10', 11').  The connection enters Cartan's
first structure equation as

    de^{AA'} = Gamma^{AA'}_{CC'} ^ e^{CC'},
    Gamma_{AA'CC'} = eps_{AC} Gamma_{A'C'} + eps_{A'C'} Gamma_{AC},

and the primed curvature is R_{A'B'} = dGamma_{A'B'} + Gamma_{A'}^{C'} ^ Gamma_{C'B'}
lowered with the rule above; on an Einstein space R_{A'B'} = lam Sigma_{A'B'}.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import forms
from .jets import Jet, JetError, Point4, stack

EPS = np.array([[0.0, 1.0], [-1.0, 0.0]])
# eta_{ab} with g = eta_{ab} e^a e^b = 2(e^{00'} e^{11'} - e^{01'} e^{10'})
ETA = np.array([[0, 0, 0, 1], [0, 0, -1, 0], [0, -1, 0, 0], [1, 0, 0, 0]], dtype=float)
PAIRS = [(i, j) for i in range(4) for j in range(i + 1, 4)]
SYM = [(0, 0), (0, 1), (1, 1)]
DEGENERACY_TOL = 1e-12
# orientation: vol = ORIENTATION * det(e) dw^dz^dwb^dzb makes the Sigma^{A'B'} self-dual
ORIENTATION = -1.0


class GeometryError(ArithmeticError):
    pass


class DegenerateMetricError(GeometryError):
    pass


class GaugeSingularityError(GeometryError):
    """K_w or K_wb vanishes, so the adapted gauge breaks down."""


class FrameDegeneracyError(GeometryError):
    pass


def solve_jets(M: Jet, b: Jet, cond_limit: float = 1e13) -> Jet:
    """Solve M x = b for jet-valued M (batch (m, m, *P)) and b (batch (m, *P)).

    Taylor coefficients are obtained degree by degree:
    x_alpha = M_0^{-1} (b_alpha - sum_{0 < beta <= alpha} M_beta x_{alpha - beta}).
    """
    from .jets import table

    M, b = forms.align(M, b)
    t = table(M.order)
    Mc = np.moveaxis(M.coeffs, (1, 2), (-2, -1))  # (n, *P, m, m)
    bc = np.moveaxis(b.coeffs, 1, -1)  # (n, *P, m)
    cond = np.linalg.cond(Mc[0])
    if np.any(~np.isfinite(cond)) or np.any(cond > cond_limit):
        raise FrameDegeneracyError(f"structure-equation system is singular (cond={np.max(cond):.3g})")
    x = np.zeros_like(bc)
    for n, alpha in enumerate(t.indices):
        rhs = bc[n].copy()
        for k, beta in enumerate(t.indices[1 : n + 1], start=1):
            rest = tuple(a - c for a, c in zip(alpha, beta))
            if min(rest) < 0:
                continue
            rhs -= np.einsum("...ij,...j->...i", Mc[k], x[t.position[rest]])
        x[n] = np.linalg.solve(Mc[0], rhs[..., None])[..., 0]
    return Jet(M.base, M.order, np.moveaxis(x, -1, 1))


class Background:
    """Derivatives of K and the standard combinations built from them.

    Orders follow from the order of ``K``: first derivatives have order one
    less, second derivatives two less, and so on.
    """

    def __init__(self, K: Jet, lam: float):
        self.K = K
        self.lam = float(lam)
        self.base = K.base

    @classmethod
    def of(cls, spec, at: Point4, order: int = 4) -> "Background":
        return cls(spec.k_jet(at, order), spec.lam)

    @property
    def order(self) -> int:
        return self.K.order

    @cached_property
    def first(self):
        return [self.K.partial(i) for i in range(4)]

    @cached_property
    def second(self):
        return [[self.first[i].partial(j) for j in range(4)] for i in range(4)]

    @property
    def Kw(self):
        return self.first[0]

    @property
    def Kz(self):
        return self.first[1]

    @property
    def Kwb(self):
        return self.first[2]

    @property
    def Kzb(self):
        return self.first[3]

    @property
    def Kwwb(self):
        return self.second[0][2]

    @property
    def Kwzb(self):
        return self.second[0][3]

    @property
    def Kzwb(self):
        return self.second[1][2]

    @property
    def Kzzb(self):
        return self.second[1][3]

    @cached_property
    def expK(self) -> Jet:
        """e^{lam K}."""
        return (self.lam * self.K).exp()

    @cached_property
    def Q(self) -> Jet:
        """K_{z zb} + (2/lam) e^{lam K}."""
        return self.Kzzb + (2.0 / self.lam) * self.expK.truncate(self.order - 2)

    @cached_property
    def tilde_k(self) -> Jet:
        """K_{w zb} K_{z wb} - K_{w wb} (K_{z zb} + (2/lam) e^{lam K})."""
        return self.Kwzb * self.Kzwb - self.Kwwb * self.Q

    def require_gauge(self):
        o = self.order - 1
        for name, f in (("K_w", self.Kw), ("K_wb", self.Kwb)):
            if np.any(np.abs(f.value) < DEGENERACY_TOL):
                raise GaugeSingularityError(f"{name} vanishes at a sample point")
        return o

    def require_nondegenerate(self):
        if np.any(np.abs(self.tilde_k.value) < DEGENERACY_TOL):
            raise DegenerateMetricError("tilde K vanishes: the metric is degenerate")

    def dlog(self, f: Jet) -> Jet:
        """Gradient of ln f as a one-form (order of f minus one)."""
        g = f.gradient()
        return forms.scale(f.truncate(g.order).reciprocal(), g, 1)


def _onehot_form(base, order, shape_points, entries):
    """One-form with given jet/constant components, missing ones zero."""
    comps = []
    for i in range(4):
        v = entries.get(i)
        if v is None:
            comps.append(Jet.zeros(base, order))
        elif isinstance(v, Jet):
            comps.append(v.truncate(order))
        else:
            comps.append(Jet.constant(base, v, order))
    return stack(comps, axis=0)


def _spinor_tensor_T() -> np.ndarray:
    """T[a, c, u]: coefficient of the u-th symmetric connection one-form in Gamma^a_c.

    u = 0..2 are Gamma_{0'0'}, Gamma_{0'1'}, Gamma_{1'1'} and 3..5 the unprimed
    Gamma_{00}, Gamma_{01}, Gamma_{11}.
    """
    def sym_index(X, Y):
        return SYM.index(tuple(sorted((X, Y))))

    T = np.zeros((4, 4, 6))
    for A in range(2):
        for Ap in range(2):
            for C in range(2):
                for Cp in range(2):
                    for B in range(2):
                        for Bp in range(2):
                            f = EPS[A, B] * EPS[Ap, Bp]
                            if f == 0:
                                continue
                            # Gamma_{BB'CC'} = eps_{BC} Gamma_{B'C'} + eps_{B'C'} Gamma_{BC}
                            T[2 * A + Ap, 2 * C + Cp, sym_index(Bp, Cp)] += f * EPS[B, C]
                            T[2 * A + Ap, 2 * C + Cp, 3 + sym_index(B, C)] += f * EPS[Bp, Cp]
    return T


SPIN_T = _spinor_tensor_T()


def lower_primed(sym3: Jet) -> Jet:
    """(X^{0'0'}, X^{0'1'}, X^{1'1'}) -> (X_{0'0'}, X_{0'1'}, X_{1'1'})."""
    return stack([sym3[2], -sym3[1], sym3[0]], axis=0)


class Frame:
    """The adapted null tetrad and everything derived from it at a batch of points.

    Jet-valued attributes keep one derivative more than needed by the
    curvature; ``*_values`` accessors give plain arrays.
    """

    def __init__(self, bg: Background):
        self.bg = bg
        self.base = bg.base
        self.lam = bg.lam

    # -- tetrad and duals -----------------------------------------------------
    @cached_property
    def tetrad(self) -> Jet:
        """e^a_i with a = (00', 01', 10', 11'); batch (4, 4, *P)."""
        bg = self.bg
        o = bg.order - 2
        e00 = _onehot_form(self.base, o, None, {0: 1.0})
        e10 = _onehot_form(self.base, o, None, {1: 1.0})
        e01 = _onehot_form(self.base, o, None, {2: -bg.Kzwb, 3: -bg.Q})
        e11 = _onehot_form(self.base, o, None, {2: bg.Kwwb, 3: bg.Kwzb})
        return stack([e00, e01, e10, e11], axis=0)

    @cached_property
    def dual(self) -> Jet:
        """nabla_a^i, dual to the tetrad; batch (4, 4, *P)."""
        bg = self.bg
        o = bg.order - 2
        inv = bg.tilde_k.reciprocal()
        n00 = _onehot_form(self.base, o, None, {0: 1.0})
        n10 = _onehot_form(self.base, o, None, {1: 1.0})
        n01 = _onehot_form(self.base, o, None, {2: -bg.Kwzb * inv, 3: bg.Kwwb * inv})
        n11 = _onehot_form(self.base, o, None, {2: -bg.Q * inv, 3: bg.Kzwb * inv})
        return stack([n00, n01, n10, n11], axis=0)

    @cached_property
    def metric(self) -> Jet:
        """g_ij = eta_ab e^a_i e^b_j."""
        return _metric_from(self.tetrad)

    @cached_property
    def inverse_metric(self) -> Jet:
        return _metric_from(self.dual)

    @cached_property
    def det_tetrad(self) -> Jet:
        # rows (dw, dz) are unit, so det e = tilde K
        return self.bg.tilde_k

    def pairing(self) -> np.ndarray:
        """<nabla_a, e^b> values, batch (4, 4, *P)."""
        return np.einsum("ai...,bi...->ab...", self.dual.value, self.tetrad.value)

    def apply(self, a: int, f: Jet) -> Jet:
        """Directional derivative nabla_a f."""
        grad = f.gradient()
        return forms.interior(self.dual[a], grad, 1)

    # -- two-forms ----------------------------------------------------------
    def _e(self, A, Ap):
        return self.tetrad[2 * A + Ap]

    @cached_property
    def sigma(self) -> Jet:
        """Sigma^{A'B'} = 1/2 eps_{AB} e^{AA'} ^ e^{BB'}; batch (3, 4, 4, *P) over (0'0', 0'1', 1'1')."""
        out = []
        for Ap, Bp in SYM:
            s = None
            for A in range(2):
                for B in range(2):
                    if EPS[A, B] == 0:
                        continue
                    term = forms.wedge(self._e(A, Ap), 1, self._e(B, Bp), 1) * (0.5 * EPS[A, B])
                    s = term if s is None else s + term
            out.append(s)
        return stack(out, axis=0)

    @cached_property
    def sigma_asd(self) -> Jet:
        """Sigma^{AB} = 1/2 eps_{A'B'} e^{AA'} ^ e^{BB'}; batch (3, 4, 4, *P) over (00, 01, 11)."""
        out = []
        for A, B in SYM:
            s = None
            for Ap in range(2):
                for Bp in range(2):
                    if EPS[Ap, Bp] == 0:
                        continue
                    term = forms.wedge(self._e(A, Ap), 1, self._e(B, Bp), 1) * (0.5 * EPS[Ap, Bp])
                    s = term if s is None else s + term
            out.append(s)
        return stack(out, axis=0)

    @cached_property
    def sigma_closed(self) -> Jet:
        """The self-dual forms written directly in K: dw^dz, 1/2 dd-bar K + (1/lam) e^{lam K} dz^dzb, -tilde K dwb^dzb."""
        bg = self.bg
        o = bg.order - 2
        z = Jet.zeros(self.base, o, (3, 4, 4) + self.base.shape)
        c = z.coeffs.copy()
        c[0, 0, 0, 1] = 1.0
        c[0, 0, 1, 0] = -1.0
        hess = {(i, j): bg.second[i][j] for i in (0, 1) for j in (2, 3)}
        extra = (1.0 / self.lam) * bg.expK.truncate(o)
        for (i, j), h in hess.items():
            v = 0.5 * h.coeffs
            if (i, j) == (1, 3):
                v = v + extra.coeffs
            c[:, 1, i, j] = v
            c[:, 1, j, i] = -v
        c[:, 2, 2, 3] = -bg.tilde_k.coeffs
        c[:, 2, 3, 2] = bg.tilde_k.coeffs
        return Jet(self.base, o, c)

    # -- connection -----------------------------------------------------------
    def structure_system(self):
        """The 24x24 linear system M x = b for the six symmetric connection one-forms."""
        E = self.tetrad
        dE = forms.d(E, 1, lead=1)  # batch (a, i, j, *P)
        E = E.truncate(dE.order)
        eye = np.eye(4)
        # M[a,i,j,u,m] = sum_c T[a,c,u] (delta_mi e^c_j - delta_mj e^c_i)
        t1 = np.einsum("acu,mi,ncj...->naijum...", SPIN_T, eye, E.coeffs)
        Mfull = t1 - np.swapaxes(t1, 2, 3)
        rows_i = [p[0] for p in PAIRS]
        rows_j = [p[1] for p in PAIRS]
        Msel = Mfull[:, :, rows_i, rows_j]  # (n, a, pair, u, m, *P)
        n = Msel.shape[0]
        P = Msel.shape[5:]
        M = Jet(self.base, E.order, Msel.reshape((n, 24, 24) + P))
        bsel = dE.coeffs[:, :, rows_i, rows_j]
        b = Jet(self.base, dE.order, bsel.reshape((n, 24) + P))
        return M, b

    @cached_property
    def connection_structure(self) -> Jet:
        """All six connection one-forms from the structure equation; batch (6, 4, *P)."""
        M, b = self.structure_system()
        x = solve_jets(M, b)
        return Jet(self.base, x.order, x.coeffs.reshape((x.coeffs.shape[0], 6, 4) + x.shape[1:]))

    @property
    def gamma_primed(self) -> Jet:
        """Levi-Civita primed connection (Gamma_{0'0'}, Gamma_{0'1'}, Gamma_{1'1'}); batch (3, 4, *P)."""
        return self.connection_structure[0:3]

    @property
    def gamma_unprimed(self) -> Jet:
        return self.connection_structure[3:6]

    @cached_property
    def gamma_closed(self) -> Jet:
        """Primed connection from the closed formulas (valid on solutions of Przanowski's equation)."""
        bg = self.bg
        bg.require_gauge()
        dl_kwb = bg.dlog(bg.Kwb)
        dl_kw = bg.dlog(bg.Kw)
        dl_kt = bg.dlog(bg.tilde_k)
        o = dl_kt.order
        N = self.dual.truncate(o)
        E = self.tetrad.truncate(o)

        def nab(a, form):
            return forms.interior(N[a], form, 1)

        def comb(terms):
            out = None
            for coef, form in terms:
                t = forms.scale(coef, form, 1)
                out = t if out is None else out + t
            return out

        g00 = -comb([(nab(2 * A + 0, dl_kwb.truncate(o)), E[2 * A + 1]) for A in range(2)])
        g11 = comb([(nab(2 * A + 1, dl_kw.truncate(o)), E[2 * A + 0]) for A in range(2)])
        mix = dl_kt - dl_kwb.truncate(o)
        g01 = comb(
            [(nab(2 * A + 0, mix), E[2 * A + 0]) for A in range(2)]
            + [(nab(2 * A + 1, dl_kw.truncate(o)), E[2 * A + 1]) for A in range(2)]
        ) * 0.5
        return stack([g00, g01, g11], axis=0)

    def structure_residual(self, gamma_primed: Jet, gamma_unprimed: Jet = None) -> np.ndarray:
        """max |de^{AA'} - Gamma^{AA'}_{CC'} ^ e^{CC'}| per point, relative to max |de|."""
        M, b = self.structure_system()
        if gamma_unprimed is None:
            gamma_unprimed = self.gamma_unprimed
        x = np.concatenate([gamma_primed.value, gamma_unprimed.value], axis=0).reshape((24,) + self.base.shape)
        r = np.einsum("ij...,j...->i...", M.value, x) - b.value
        scale = np.maximum(np.abs(b.value).max(axis=0), 1e-300)
        return np.abs(r).max(axis=0) / scale

    # -- Lee forms ------------------------------------------------------------
    @cached_property
    def lee_forms(self):
        """The one-forms (A, B) with dSigma^{0'0'} = (B - A)^Sigma^{0'0'}, dSigma^{0'1'} = B^Sigma^{0'1'}
        and dSigma^{1'1'} = (B + A)^Sigma^{1'1'}.

        A = del(ln tK - 2 ln K_wb) + delbar(2 ln K_w) and, using Przanowski's
        equation, B = 2 del(ln K_wb) + 2 delbar(ln K_w).
        """
        bg = self.bg
        bg.require_gauge()
        dl_kt = bg.dlog(bg.tilde_k)
        o = dl_kt.order
        dl_kw = bg.dlog(bg.Kw).truncate(o)
        dl_kwb = bg.dlog(bg.Kwb).truncate(o)
        hol = np.array([1.0, 1.0, 0.0, 0.0]).reshape((4,) + (1,) * len(self.base.shape))
        ahol = 1.0 - hol
        A = (dl_kt - 2.0 * dl_kwb) * hol + (2.0 * dl_kw) * ahol
        B = (2.0 * dl_kwb) * hol + (2.0 * dl_kw) * ahol
        return A, B

    # -- Hodge star -------------------------------------------------------------
    def star(self, form: Jet, k: int) -> Jet:
        """Hodge star of a k-form; 4-forms map to scalars and scalars to 4-forms."""
        ginv = self.inverse_metric
        vol = self.det_tetrad * ORIENTATION
        form, ginv, vol = forms.align(form, ginv, vol)
        if k == 0:
            levi = LEVI4.reshape((4, 4, 4, 4) + (1,) * len(self.base.shape))
            return forms.scale(form * vol, Jet.constant(self.base, levi, form.order), 4)
        raised = form
        for slot in range(k):
            # raise index `slot`: contract ginv[i, j] with component axis `slot`
            gshape = ginv.coeffs.shape
            moved = Jet(self.base, raised.order, np.moveaxis(raised.coeffs, 1 + slot, 1))
            # moved batch: (j, rest..., *P); result (i, rest..., *P)
            rest = moved.shape[1 : k]
            gc = ginv.coeffs.reshape(gshape[:3] + (1,) * len(rest) + gshape[3:])
            mc = moved.coeffs.reshape(moved.coeffs.shape[:1] + (1,) + moved.coeffs.shape[1:])
            prod = (Jet(self.base, raised.order, gc) * Jet(self.base, raised.order, mc)).sum(axis=1)
            raised = Jet(self.base, raised.order, np.moveaxis(prod.coeffs, 1, 1 + slot))
        letters = "abcd"
        idx_in = letters[:k]
        idx_out = letters[k:]
        sub = f"{idx_in}{idx_out},n{idx_in}...->n{idx_out}..."
        contracted = forms.contract_constant(LEVI4, sub, raised) * (1.0 / math.factorial(k))
        return forms.scale(vol, contracted, 4 - k)


LEVI4 = forms.LEVI_CIVITA


def _metric_from(V: Jet) -> Jet:
    """eta^{ab} V_a^i V_b^j (eta is its own inverse); works for tetrads and duals."""
    out = None
    for a in range(4):
        for b in range(4):
            if ETA[a, b] == 0:
                continue
            term = forms.outer(V[a], 1, V[b], 1) * ETA[a, b]
            out = term if out is None else out + term
    return out


@dataclass(frozen=True)
class FrameData:
    """Values of the frame quantities at the sample points."""

    tetrad: np.ndarray
    dual: np.ndarray
    sigma: np.ndarray
    sigma_asd: np.ndarray
    gamma_primed: np.ndarray
    metric: np.ndarray
    tilde_k: np.ndarray
    frame: Frame

    @property
    def pairing(self) -> np.ndarray:
        return np.einsum("ai...,bi...->ab...", self.dual, self.tetrad)


@dataclass(frozen=True)
class CurvatureDecomp:
    r_primed: np.ndarray  # (3, 4, 4, *P): R_{0'0'}, R_{0'1'}, R_{1'1'}
    scalar: np.ndarray  # R
    weyl_sd: np.ndarray  # (5, *P)
    phi: np.ndarray  # (3, 3, *P)
    pair_antisymmetric: np.ndarray  # (*P) max modulus, vanishes by the Bianchi identity
    einstein_residual: np.ndarray  # (*P) relative
    weyl_norm: np.ndarray  # (*P) relative to |lam|
    phi_norm: np.ndarray  # (*P) relative to |lam|


def _background(spec, at, order):
    bg = Background.of(spec, at, order)
    bg.require_nondegenerate()
    return bg


def frame_at(spec, at: Point4, order: int = 4) -> FrameData:
    """Tetrad, duals, self-dual forms, connection and metric at ``at``."""
    fr = Frame(_background(spec, at, order))
    gp = fr.gamma_primed.value if order >= 3 else None
    return FrameData(
        tetrad=fr.tetrad.value,
        dual=fr.dual.value,
        sigma=fr.sigma.value,
        sigma_asd=fr.sigma_asd.value,
        gamma_primed=gp,
        metric=fr.metric.value,
        tilde_k=fr.bg.tilde_k.value,
        frame=fr,
    )


def connection_at(spec, at: Point4, method: str = "closed_form") -> np.ndarray:
    """Primed connection values (3, 4, *P) by the closed formulas or the structure equation."""
    fr = Frame(_background(spec, at, 3))
    if method == "closed_form":
        return fr.gamma_closed.value
    if method == "structure_equation":
        return fr.gamma_primed.value
    raise ValueError(f"unknown connection method {method!r}")


def primed_curvature(fr: Frame, gamma: Jet = None) -> Jet:
    """R_{A'B'} = dGamma_{A'B'} + Gamma_{A'}^{C'} ^ Gamma_{C'B'} as (3, 4, 4, *P)."""
    g = fr.gamma_primed if gamma is None else gamma
    dg = forms.d(g, 1, lead=1)
    g0 = g.truncate(dg.order)
    r00 = dg[0] + 2.0 * forms.wedge(g0[0], 1, g0[1], 1)
    r01 = dg[1] + forms.wedge(g0[0], 1, g0[2], 1)
    r11 = dg[2] + 2.0 * forms.wedge(g0[1], 1, g0[2], 1)
    return stack([r00, r01, r11], axis=0)


def _trace_tensor():
    T = np.zeros((2, 2, 2, 2))
    for A, B, C, D in np.ndindex(2, 2, 2, 2):
        T[A, B, C, D] = 0.5 * (EPS[C, A] * EPS[D, B] + EPS[D, A] * EPS[C, B])
    return T


TRACE = _trace_tensor()
TRACE_NORM = np.einsum("abcd,ac,bd->", TRACE, EPS, EPS)


def decompose(r_primed: np.ndarray, sigma: np.ndarray, sigma_asd: np.ndarray, lam: float) -> CurvatureDecomp:
    """Project the primed curvature two-forms on the Sigma bases."""
    P = r_primed.shape[3:]
    rows_i = [p[0] for p in PAIRS]
    rows_j = [p[1] for p in PAIRS]
    basis = np.concatenate([sigma, sigma_asd], axis=0)[:, rows_i, rows_j]  # (6 basis, 6 comps, *P)
    rvec = r_primed[:, rows_i, rows_j]  # (3, 6, *P)
    Bm = np.moveaxis(basis, (0, 1), (-1, -2))  # (*P, comps, basis)
    Rm = np.moveaxis(rvec, (0, 1), (-1, -2))  # (*P, comps, 3)
    coef = np.linalg.solve(Bm, Rm)  # (*P, basis, 3)
    coef = np.moveaxis(coef, (-2, -1), (1, 0))  # (3 R, 6 basis, *P)
    X = np.zeros((2, 2, 2, 2) + P, dtype=complex)
    Phi = np.zeros((2, 2, 2, 2) + P, dtype=complex)
    for r, (A, B) in enumerate(SYM):
        for s, (C, D) in enumerate(SYM):
            f = 0.5 if C != D else 1.0
            for (a, b) in {(A, B), (B, A)}:
                for (c, d_) in {(C, D), (D, C)}:
                    X[a, b, c, d_] = f * coef[r, s]
                    Phi[a, b, c, d_] = f * coef[r, 3 + s]
    r12 = np.einsum("abcd...,ac,bd->...", X, EPS, EPS) / TRACE_NORM
    W = X - r12 * TRACE.reshape(TRACE.shape + (1,) * len(P))
    Wsym = np.zeros_like(W)
    for p in itertools.permutations(range(4)):
        Wsym += np.transpose(W, list(p) + list(range(4, W.ndim)))
    Wsym /= 24.0
    anti = np.abs(W - Wsym).reshape((16,) + P).max(axis=0)
    weyl = np.stack([Wsym[0, 0, 0, 0], Wsym[0, 0, 0, 1], Wsym[0, 0, 1, 1], Wsym[0, 1, 1, 1], Wsym[1, 1, 1, 1]])
    phi = np.stack([np.stack([Phi[A, B, C, D] for (C, D) in SYM]) for (A, B) in SYM])
    lowered = np.stack([sigma[2], -sigma[1], sigma[0]])
    target = lam * lowered
    scale = np.abs(target).reshape((-1,) + P).max(axis=0)
    einstein = np.abs(r_primed - target).reshape((-1,) + P).max(axis=0) / scale
    return CurvatureDecomp(
        r_primed=r_primed,
        scalar=12.0 * r12,
        weyl_sd=weyl,
        phi=phi,
        pair_antisymmetric=anti / abs(lam),
        einstein_residual=einstein,
        weyl_norm=np.abs(weyl).max(axis=0) / abs(lam),
        phi_norm=np.abs(phi).reshape((9,) + P).max(axis=0) / abs(lam),
    )


def curvature_at(spec, at: Point4) -> CurvatureDecomp:
    """Curvature of the Levi-Civita connection and its spinor decomposition."""
    fr = Frame(_background(spec, at, 4))
    R = primed_curvature(fr)
    return decompose(R.value, fr.sigma.value, fr.sigma_asd.value, fr.lam)


def lee_forms_at(spec, at: Point4):
    """Values of the one-forms (A, B), each (4, *P)."""
    fr = Frame(_background(spec, at, 3))
    A, B = fr.lee_forms
    return A.value, B.value


def lee_residuals(fr: Frame) -> np.ndarray:
    """Relative residuals of dSigma = (B -+ A) ^ Sigma for the three self-dual forms; (3, *P)."""
    A, B = fr.lee_forms
    S = fr.sigma
    dS = forms.d(S, 2, lead=1)
    o = dS.order
    A, B, S = A.truncate(o), B.truncate(o), S.truncate(o)
    out = []
    for idx, lee in ((0, B - A), (1, B), (2, B + A)):
        r = dS[idx] - forms.wedge(lee, 1, S[idx], 2)
        scale = np.maximum(forms.max_abs(dS[idx]), forms.max_abs(forms.wedge(lee, 1, S[idx], 2)))
        out.append(forms.max_abs(r) / np.maximum(scale, 1e-300))
    return np.stack(out)


def scalar_curvature_metric(spec, at: Point4) -> np.ndarray:
    """Scalar curvature of g_ij from its Christoffel symbols (positive on round spheres).

    Independent of the spinor machinery; with the sign conventions used here it
    equals -12 lam on solutions, the opposite sign to the spinor scalar.
    """
    fr = Frame(_background(spec, at, 4))
    g = fr.metric
    ginv = fr.inverse_metric.truncate(1)
    dg = stack([g.partial(k) for k in range(4)], axis=2).coeffs  # g_{ij,k}
    lower = 0.5 * (dg + np.swapaxes(dg, 2, 3) - np.moveaxis(dg, 3, 1))  # [l, i, j] = Gamma_{l ij}
    lower = Jet(fr.base, 1, lower)
    chris = (Jet(fr.base, 1, ginv.coeffs[:, :, :, None, None]) * Jet(fr.base, 1, lower.coeffs[:, None])).sum(axis=1)
    dchris = np.stack([chris.partial(k).value for k in range(4)], axis=3)  # [r, i, j, k] = d_k Gamma^r_ij
    G0 = chris.truncate(0).value
    riem = (
        np.einsum("rnsm...->rsmn...", dchris)
        - np.einsum("rmsn...->rsmn...", dchris)
        + np.einsum("rml...,lns...->rsmn...", G0, G0)
        - np.einsum("rnl...,lms...->rsmn...", G0, G0)
    )
    ricci = np.einsum("rsrn...->sn...", riem)
    return np.einsum("sn...,sn...->...", fr.inverse_metric.value, ricci)


def hodge_star(form: np.ndarray, frame: Frame, degree: int) -> np.ndarray:
    """Hodge star of a constant-coefficient form given by its component array."""
    j = Jet.constant(frame.base, form, 0)
    return frame.star(j, degree).value


__all__ = [
    "Background",
    "Frame",
    "FrameData",
    "CurvatureDecomp",
    "frame_at",
    "connection_at",
    "curvature_at",
    "lee_forms_at",
    "lee_residuals",
    "hodge_star",
    "scalar_curvature_metric",
    "primed_curvature",
    "decompose",
    "solve_jets",
    "GeometryError",
    "DegenerateMetricError",
    "GaugeSingularityError",
    "FrameDegeneracyError",
    "JetError",
]
