import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from przanowski.jets import (
    BranchPointError,
    InsufficientOrderError,
    Jet,
    JetMismatchError,
    Point4,
    SingularPointError,
    jet_arith,
    jet_elementary,
    jet_partial,
    table,
    variables,
)

from conftest import central_difference

BASE = Point4(0.3 + 0.2j, -0.1 + 0.4j, 0.5 - 0.1j, 0.2 + 0.3j, 1.0)


def random_jet(seed, order=3, value=1.0):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=table(order).size) + 1j * rng.normal(size=table(order).size)
    c[0] = value + 0.3 * c[0]
    return Jet(BASE, order, c)


def test_storage_size_at_order_four():
    assert table(4).size == 70
    assert table(2).size == 15


def test_product_of_w_and_wb():
    p = Point4(2.0, 0.0, 3.0, 0.0, 1.0)
    w, _, wb, _ = variables(p, 2)
    f = jet_arith(w, wb, "mul")
    assert f.value == 6
    assert f.derivative((1, 0, 0, 0)) == 3
    assert f.derivative((0, 0, 1, 0)) == 2
    assert f.derivative((1, 0, 1, 0)) == 1
    others = [a for a, _ in f.items() if a not in [(0, 0, 0, 0), (1, 0, 0, 0), (0, 0, 1, 0), (1, 0, 1, 0)]]
    assert all(f.coefficient(a) == 0 for a in others)


def test_self_division_is_one():
    a = random_jet(1)
    q = jet_arith(a, a, "div")
    assert np.allclose(q.coeffs[0], 1.0)
    assert np.allclose(q.coeffs[1:], 0.0, atol=1e-13)


def test_cubic_mixed_derivative_matches_finite_differences():
    p = Point4(1.0, 1.0, 0.0, 0.0, 1.0)
    w, z, _, _ = variables(p, 3)
    f = (w + z) ** 3
    got = f.derivative((2, 1, 0, 0))
    fd = central_difference(lambda a, b, c, d: (a + b) ** 3, p.coords(), (2, 1, 0, 0), h=1e-4, dps=40)
    assert got == pytest.approx(6.0)
    assert abs(got - fd) / abs(got) < 1e-6


def test_division_by_zero_value_raises():
    p = Point4(0.0, 1.0, 0.0, 1.0, 1.0)
    w = Jet.variable(p, 0, 2)
    with pytest.raises(SingularPointError):
        jet_arith(w, w, "div")


def test_log_and_sqrt_at_zero_raise():
    p = Point4(0.0, 1.0, 0.0, 1.0, 1.0)
    w = Jet.variable(p, 0, 2)
    with pytest.raises(BranchPointError):
        jet_elementary(w, "ln")
    with pytest.raises(BranchPointError):
        jet_elementary(w, "sqrt")


def test_mixed_orders_are_rejected():
    with pytest.raises(JetMismatchError):
        random_jet(1, 2) + random_jet(2, 3)


def test_exp_of_zero_is_one():
    z = Jet.zeros(BASE, 3)
    e = jet_elementary(z, "exp")
    assert np.allclose(e.coeffs[0], 1.0) and np.allclose(e.coeffs[1:], 0.0)


@given(st.integers(0, 10_000))
def test_exp_inverts_log(seed):
    a = random_jet(seed, value=2.0)
    back = jet_elementary(jet_elementary(a, "ln"), "exp")
    assert np.max(np.abs(back.coeffs - a.coeffs)) < 1e-12 * np.max(np.abs(a.coeffs))


@given(st.integers(0, 10_000))
def test_sqrt_squares_back(seed):
    a = random_jet(seed, value=2.0)
    r = jet_elementary(a, "sqrt")
    assert np.max(np.abs((r * r).coeffs - a.coeffs)) < 1e-12 * np.max(np.abs(a.coeffs))


# sympy values of the derivatives of exp(lam K) for S4 (lam = -1) at w = 0.3 + 0.2i, z = 0.1 - 0.4i
S4_EXP_ORACLE = {
    (1, 0, 0, 0): 0.051006329583510492225 - 0.03400421972234032815j,
    (1, 0, 1, 0): 0.27270374804666562099,
    (1, 1, 0, 1): -0.015941437684428178974 + 0.010627625122952119316j,
    (2, 0, 1, 1): 0.070395675422477566925 + 0.19710789118293718739j,
}


def _s4_exp(w, z, wb, zb):
    lam = -1.0
    return np.exp(lam * (2 / lam) * np.log(w * wb / (1 + w * wb * (1 + z * zb))))


def test_exp_of_s4_function_matches_oracles():
    p = Point4.real_slice(0.3 + 0.2j, 0.1 - 0.4j, -1.0)
    w, z, wb, zb = variables(p, 4)
    lam = -1.0
    E = (lam * ((2 / lam) * (w * wb / (1 + w * wb * (1 + z * zb))).log())).exp()
    for alpha, want in S4_EXP_ORACLE.items():
        got = E.derivative(alpha)
        assert abs(got - want) < 1e-12
        fd = central_difference(_s4_exp, p.coords(), alpha, h=1e-3)
        assert abs(got - fd) < 1e-6 * max(1.0, abs(got)) * 10


def test_partial_of_square():
    p = Point4(3.0, 0.0, 0.0, 0.0, 1.0)
    w = Jet.variable(p, 0, 3)
    d = jet_partial(w * w, "w")
    assert d.order == 2
    assert d.value == 6
    assert d.derivative((1, 0, 0, 0)) == 2


def test_partial_of_independent_direction_is_zero():
    a = Jet.variable(BASE, "w", 3) * Jet.variable(BASE, "wb", 3)
    assert np.all(jet_partial(a, "z").coeffs == 0)


def test_partial_beyond_order_raises():
    with pytest.raises(InsufficientOrderError):
        jet_partial(random_jet(0, order=2), 0, times=3)


def test_h4_mixed_second_derivative_matches_symbolic_value():
    # d_w d_wb of 2 ln(w wb / (1 - w wb (1 + z zb))) at w = 1/2, z = 0 is 32/9 (sympy)
    p = Point4(0.5, 0.0, 0.5, 0.0, 1.0)
    w, z, wb, zb = variables(p, 2)
    K = 2.0 * (w * wb / (1 - w * wb * (1 + z * zb))).log()
    assert abs(jet_partial(jet_partial(K, "w"), "wb").value - 32 / 9) < 1e-13


@given(st.integers(0, 10_000), st.integers(0, 10_000), st.integers(0, 10_000))
def test_ring_axioms(s1, s2, s3):
    a, b, c = random_jet(s1), random_jet(s2), random_jet(s3)
    tol = 1e-12 * 100
    assert np.allclose(((a * b) * c).coeffs, (a * (b * c)).coeffs, atol=tol)
    assert np.allclose((a * (b + c)).coeffs, (a * b + a * c).coeffs, atol=tol)
    assert np.allclose((a * b).coeffs, (b * a).coeffs, atol=tol)
    assert np.allclose((a + b).coeffs, (b + a).coeffs, atol=tol)


@given(st.integers(0, 10_000), st.integers(0, 10_000), st.integers(0, 3))
def test_leibniz_rule(s1, s2, d):
    a, b = random_jet(s1), random_jet(s2)
    lhs = (a * b).partial(d)
    rhs = a.partial(d) * b.truncate(2) + a.truncate(2) * b.partial(d)
    assert np.allclose(lhs.coeffs, rhs.coeffs, atol=1e-12)


def _composite(w, z, wb, zb):
    return mpmath.exp(w * zb) / (1 + z * z) + mpmath.sqrt(2 + wb) * mpmath.log(3 + w * z)


@settings(max_examples=10)
@given(st.floats(-0.4, 0.4), st.floats(-0.4, 0.4), st.floats(-0.4, 0.4), st.floats(-0.4, 0.4))
def test_every_coefficient_matches_finite_differences(a, b, c, d):
    p = Point4(a + 0.1j, b, c, d - 0.2j, 1.0)
    w, z, wb, zb = variables(p, 4)
    f = (w * zb).exp() / (1 + z * z) + (2 + wb).sqrt() * (3 + w * z).log()
    for alpha, _ in f.items():
        if sum(alpha) == 0:
            continue
        got = f.derivative(alpha)
        fd = central_difference(_composite, p.coords(), alpha, h=1e-6, dps=50)
        assert abs(got - fd) <= 1e-5 * max(1.0, abs(got))


def test_derivative_and_coefficient_differ_by_factorials():
    f = random_jet(3, order=4)
    for alpha, c in f.items():
        assert np.allclose(f.derivative(alpha), c * math.prod(math.factorial(k) for k in alpha))
