"""Differential forms with jet-valued components.

A k-form is a :class:`~przanowski.jets.Jet` whose first k batch axes are
coordinate indices in the cobasis (dw, dz, dwb, dzb) and hold the fully
antisymmetric components, with the convention

    omega = (1/k!) omega_{i1..ik} dx^i1 ^ ... ^ dx^ik,

so that ``dw ^ dz`` has components [0, 1] = 1 and [1, 0] = -1.  Remaining
batch axes are sample points.  Operations truncate mixed-order operands to
their common order.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from .jets import Jet, stack


def _perm_sign(p) -> int:
    sign, p = 1, list(p)
    for i in range(len(p)):
        while p[i] != i:
            j = p[i]
            p[i], p[j] = p[j], p[i]
            sign = -sign
    return sign


def levi_civita(n: int = 4) -> np.ndarray:
    eps = np.zeros((n,) * n)
    for p in itertools.permutations(range(n)):
        eps[p] = _perm_sign(p)
    return eps


LEVI_CIVITA = levi_civita(4)


def align(*jets):
    order = min(j.order for j in jets)
    return [j.truncate(order) for j in jets]


def alt(t: Jet, k: int, lead: int = 0) -> Jet:
    """Antisymmetrise the k batch axes that follow ``lead`` label axes."""
    if k <= 1:
        return t
    c = t.coeffs
    out = np.zeros_like(c)
    head = list(range(1 + lead))
    rest = list(range(1 + lead + k, c.ndim))
    for p in itertools.permutations(range(k)):
        out += _perm_sign(p) * np.transpose(c, head + [1 + lead + q for q in p] + rest)
    return Jet(t.base, t.order, out / math.factorial(k))


def outer(a: Jet, ka: int, b: Jet, kb: int) -> Jet:
    a, b = align(a, b)
    pa, pb = a.shape[ka:], b.shape[kb:]
    ca = a.coeffs.reshape(a.coeffs.shape[: 1 + ka] + (1,) * kb + pa)
    cb = b.coeffs.reshape(b.coeffs.shape[:1] + (1,) * ka + b.coeffs.shape[1 : 1 + kb] + pb)
    return Jet(a.base, a.order, ca) * Jet(b.base, b.order, cb)


def wedge(a: Jet, ka: int, b: Jet, kb: int) -> Jet:
    if ka == 0:
        return scale(a, b, kb)
    if kb == 0:
        return scale(b, a, ka)
    factor = math.comb(ka + kb, ka)
    return alt(outer(a, ka, b, kb), ka + kb) * factor


def scale(f: Jet, form: Jet, k: int) -> Jet:
    """Multiply a k-form by a scalar jet."""
    f, form = align(f, form)
    c = f.coeffs.reshape(f.coeffs.shape[:1] + (1,) * k + f.coeffs.shape[1:])
    return Jet(f.base, f.order, c) * form


def d(form: Jet, k: int, lead: int = 0) -> Jet:
    """Exterior derivative of a k-form (order drops by one).

    ``lead`` counts label axes (e.g. a tetrad index) in front of the form indices.
    """
    grad = stack([form.partial(i) for i in range(4)], axis=lead)
    return alt(grad, k + 1, lead) * (k + 1)


def top(form: Jet) -> Jet:
    """Coefficient of dw ^ dz ^ dwb ^ dzb of a 4-form."""
    return form[0, 1, 2, 3]


def interior(vector: Jet, form: Jet, k: int) -> Jet:
    """Contract a vector field (components along d/dx^i) into the first slot of a k-form."""
    vector, form = align(vector, form)
    c = vector.coeffs.reshape(vector.coeffs.shape[:2] + (1,) * (k - 1) + vector.coeffs.shape[2:])
    return (Jet(vector.base, vector.order, c) * form).sum(axis=0)


def contract_constant(tensor: np.ndarray, subscripts: str, form: Jet) -> Jet:
    """Apply a constant linear map to the component axes, e.g. ``'ij,j...->i...'``."""
    return Jet(form.base, form.order, np.einsum(subscripts, tensor, form.coeffs))


def max_abs(form: Jet) -> np.ndarray:
    """Per-point max modulus over the component axes of the value."""
    v = np.abs(form.value)
    k = v.ndim - len(form.base.shape)
    return v.reshape((-1,) + v.shape[k:]).max(axis=0) if k else v
