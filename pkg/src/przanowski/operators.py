"""Przanowski's equation, its linearisation, and the weighted Laplacian *D*D."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import forms
from .expr import conjugate, eval_jet, parse, variables_used
from .geometry import DEGENERACY_TOL, Background, Frame
from .jets import Jet, Point4


class WeightError(ValueError):
    pass


@dataclass(frozen=True)
class OperatorReport:
    """Residual of an operator identity at a batch of points."""

    at: Point4
    residual: np.ndarray
    normalisation: np.ndarray
    degenerate: np.ndarray

    @property
    def relative(self) -> np.ndarray:
        norm = np.where(self.normalisation > 0, self.normalisation, 1.0)
        return np.abs(self.residual) / norm

    @property
    def max_relative(self) -> float:
        return float(np.max(self.relative))


@dataclass(frozen=True)
class WeightedSection:
    """A jet-valued section f of L^{l,m}; the weights record how f scales under the C* action and conformal rescaling."""

    value: Jet
    weights: tuple

    def __post_init__(self):
        l, m = self.weights
        object.__setattr__(self, "weights", (Fraction(l), Fraction(m)))


def tilde_k_at(spec, at: Point4) -> np.ndarray:
    """K_{w zb} K_{z wb} - K_{w wb}(K_{z zb} + (2/lam) e^{lam K})."""
    return Background.of(spec, at, 2).tilde_k.value


def prz_terms(bg: Background):
    """The three terms of Przanowski's equation as jets: mixed, diagonal, first-derivative."""
    o = bg.order - 2
    mixed = bg.Kzwb * bg.Kwzb
    diag = -bg.Kwwb * bg.Q
    first = bg.Kw.truncate(o) * bg.Kwb.truncate(o) * bg.expK.truncate(o)
    return mixed, diag, first


def prz_jet(bg: Background) -> Jet:
    mixed, diag, first = prz_terms(bg)
    return mixed + diag + first


def prz_residual(spec, at: Point4) -> OperatorReport:
    """Residual of Przanowski's equation, normalised by its largest term; flags tilde K ~ 0."""
    bg = Background.of(spec, at, 2)
    mixed, diag, first = (t.value for t in prz_terms(bg))
    norm = np.max(np.abs(np.stack([mixed, diag, first])), axis=0)
    degenerate = np.abs(bg.tilde_k.value) < DEGENERACY_TOL
    return OperatorReport(at, mixed + diag + first, norm, degenerate)


def lin_prz_jet(bg: Background, delta: Jet) -> Jet:
    """The linearised Przanowski operator applied to delta K (result order = order - 2)."""
    o = min(bg.order, delta.order) - 2
    if o < 0:
        raise ValueError("linearised operator needs jets of order >= 2")
    d1 = [delta.partial(i).truncate(o + 1) for i in range(4)]
    d2 = lambda i, j: d1[i].partial(j).truncate(o)  # noqa: E731
    t = lambda j: j.truncate(o)  # noqa: E731
    e = t(bg.expK)
    Kw, Kwb = t(bg.Kw), t(bg.Kwb)
    out = (
        t(bg.Kzwb) * d2(0, 3)
        + t(bg.Kwzb) * d2(1, 2)
        - t(bg.Kwwb) * d2(1, 3)
        - t(bg.Q) * d2(0, 2)
    )
    out = out + e * (Kw * t(d1[2]) + Kwb * t(d1[0]) + (bg.lam * Kw * Kwb - 2.0 * t(bg.Kwwb)) * t(delta))
    return out


def lin_prz_apply(spec, at: Point4, delta_k: Jet) -> np.ndarray:
    """Value of the linearised Przanowski operator on ``delta_k`` (a jet of order >= 2)."""
    bg = Background.of(spec, at, max(2, delta_k.order))
    return lin_prz_jet(bg, delta_k).value


def _weighted_d(frame: Frame, f: Jet, k: int, l, m):
    """D = d + (l/2) A - ((l+m)/2) B on a k-form of weight (l, m)."""
    A, B = frame.lee_forms
    df = forms.d(f, k)
    conn = A * float(Fraction(l) / 2) - B * float(Fraction(l + m) / 2)
    df, twist = forms.align(df, forms.wedge(conn, 1, f, k))
    return df + twist


def star_d_star_d(frame: Frame, f: Jet, weights=None) -> Jet:
    """*D*D f for a scalar f of weight (l, m); ``weights=None`` gives the plain *d*d.

    The 3-form *Df has weight (l, m+2), so even at (l, m) = (0, 0) the outer D
    carries a -B twist.
    """
    if weights is None:
        one = forms.d(f, 0)
        three = frame.star(one, 1)
        four = forms.d(three, 3)
    else:
        l, m = (Fraction(w) for w in weights)
        one = _weighted_d(frame, f, 0, l, m)
        three = frame.star(one, 1)
        four = _weighted_d(frame, three, 3, l, m + 2)
    return frame.star(four, 4)


def laplacian_weighted(spec, at: Point4, section: WeightedSection) -> np.ndarray:
    """*D*D f with D = d + (l/2) A - ((l+m)/2) B; the 3-form *Df carries weight (l, m+2)."""
    if section.value.order < 2:
        raise ValueError("the section needs a jet of order >= 2")
    frame = Frame(Background.of(spec, at, 4))
    frame.bg.require_nondegenerate()
    return star_d_star_d(frame, section.value.truncate(2), section.weights).value


def conformal_laplacian(spec, at: Point4, f: Jet, scalar_curvature) -> np.ndarray:
    """(*d*d - R/6) f."""
    frame = Frame(Background.of(spec, at, 4))
    return star_d_star_d(frame, f.truncate(2)).value - np.asarray(scalar_curvature) / 6.0 * f.value


def gauge_kernel_element(spec, at: Point4, dw_expr, dz_expr, order: int = 3) -> Jet:
    """delta K generated by the holomorphic coordinate change (w, z) -> (w + t dw, z + t dz).

    delta K = K_w dw + K_z dz + K_wb dwb + K_zb dzb + (1/lam)(d_z dz + d_zb dzb), the
    conjugate parts obtained by formal conjugation of the expressions.  The sign of
    the last term keeps e^{lam K} dz dzb invariant, as the metric requires.
    """
    dw_ast = parse(dw_expr) if isinstance(dw_expr, str) else dw_expr
    dz_ast = parse(dz_expr) if isinstance(dz_expr, str) else dz_expr
    if not variables_used(dw_ast) <= {"w", "z"}:
        raise ValueError("delta w must be holomorphic in (w, z)")
    if not variables_used(dz_ast) <= {"z"}:
        raise ValueError("delta z must depend on z only")
    K = spec.k_jet(at, order + 1)
    first = [K.partial(i) for i in range(4)]
    fields = [eval_jet(a, at, order + 1, spec.params) for a in (dw_ast, dz_ast, conjugate(dw_ast), conjugate(dz_ast))]
    out = None
    for i in range(4):
        term = first[i] * fields[i].truncate(order)
        out = term if out is None else out + term
    div = fields[1].partial(1) + fields[3].partial(3)
    return out + div * (1.0 / spec.lam)


__all__ = [
    "OperatorReport",
    "WeightedSection",
    "WeightError",
    "tilde_k_at",
    "prz_terms",
    "prz_jet",
    "prz_residual",
    "lin_prz_jet",
    "lin_prz_apply",
    "star_d_star_d",
    "laplacian_weighted",
    "conformal_laplacian",
    "gauge_kernel_element",
]
