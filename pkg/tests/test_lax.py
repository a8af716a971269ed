import numpy as np
import pytest

from przanowski.geometry import Background
from przanowski.jets import Point4
from przanowski.lax import (
    appendix_a_coefficients,
    commutator_decomposition,
    lax_commutator,
    lax_fields_at,
)
from przanowski.manifolds import builtin
from przanowski.operators import prz_residual

# -K_{w zb}/tilde K for H4 at w = wb = 1/2, z = zb = 3/10, lam = 1 (exact rational, sympy)
H4_WB_COEFFICIENT = 254043 / 1600000


def field_scale(l0, l1):
    return np.maximum(1.0, np.maximum(l0.max_abs(), l1.max_abs()))


def commutator_relative(spec, at):
    l0, l1 = lax_fields_at(spec, at)
    return lax_commutator(l0, l1).max_abs() / field_scale(l0, l1)


def test_constant_parts_are_coordinate_derivatives(spec):
    l0, l1 = lax_fields_at(spec, spec.sample(5, seed=1))
    v0, v1 = l0.values(), l1.values()
    assert np.all(v0[:, 0] == np.array([1, 0, 0, 0, 0])[:, None])
    assert np.all(v1[:, 0] == np.array([0, 1, 0, 0, 0])[:, None])


def test_degree_bounds(spec):
    l0, l1 = lax_fields_at(spec, spec.sample(5, seed=2))
    assert np.all(l0.values()[:, 3:] == 0) and np.all(l1.values()[:, 3:] == 0)
    assert np.all(l0.component("xi")[2] == 0)
    c = lax_commutator(l0, l1)
    assert c.degree == 4


def test_wb_coefficient_at_h4_point():
    h4 = builtin("h4")
    l0, _ = lax_fields_at(h4, Point4(0.5, 0.3, 0.5, 0.3, 1.0))
    assert abs(l0.component("wb")[1] - H4_WB_COEFFICIENT) < 1e-13


def test_commutator_vanishes_on_solutions(spec):
    assert commutator_relative(spec, spec.sample(100, seed=3)).max() < 1e-8


def test_commutator_detects_perturbation():
    p = builtin("s4").perturbed(0.01, "w*wb")
    assert commutator_relative(p, p.sample(50, seed=4)).min() > 1e-5


def test_self_commutator_is_zero(spec):
    l0, _ = lax_fields_at(spec, spec.sample(5, seed=5))
    assert np.all(lax_commutator(l0, l0).values() == 0)


def test_commutator_rejects_fields_at_different_points():
    h4 = builtin("h4")
    l0, _ = lax_fields_at(h4, h4.sample(3, seed=0))
    _, l1 = lax_fields_at(h4, h4.sample(3, seed=1))
    with pytest.raises(ValueError):
        lax_commutator(l0, l1)


def test_commutator_has_no_w_or_z_components(spec):
    for s in (spec, spec.perturbed(0.05)):
        _, leftover = commutator_decomposition(s, s.sample(30, seed=6))
        assert np.max(np.abs(leftover)) < 1e-10


def test_appendix_coefficients_vanish_on_solutions(spec):
    app = appendix_a_coefficients(spec, spec.sample(50, seed=7))
    assert np.max(np.abs(app.as_array())) < 1e-9


@pytest.mark.parametrize("amp", [0.0, 0.01, 0.1])
def test_appendix_reconstructs_direct_commutator(spec, amp):
    s = spec.perturbed(amp) if amp else spec
    at = s.sample(50, seed=8)
    direct, _ = commutator_decomposition(s, at)
    app = appendix_a_coefficients(s, at)
    l0, l1 = lax_fields_at(s, at)
    scale = np.maximum(direct.scale(), field_scale(l0, l1))
    diff = np.abs(direct.as_array() - app.as_array()).reshape(-1, 50).max(axis=0)
    assert np.max(diff / scale) < 1e-10


def test_a_coefficient_closed_form():
    p = builtin("h4").perturbed(0.01)
    at = p.sample(20, seed=9)
    bg = Background.of(p, at, 2)
    Kw, Kwb, kt = bg.Kw.value, bg.Kwb.value, bg.tilde_k.value
    P = kt + Kw * Kwb * bg.expK.value
    direct, _ = commutator_decomposition(p, at)
    expected1 = Kw * bg.Kzwb.value * P / (kt * Kw * Kwb)
    expected2 = -Kwb * P / (kt * Kw * Kwb)
    assert np.max(np.abs(direct.A[1] - expected1) / np.abs(expected1)) < 1e-10
    assert np.max(np.abs(direct.A[2] - expected2) / np.abs(expected2)) < 1e-10


def test_printed_b_coefficient_has_the_wrong_denominator():
    p = builtin("h4").perturbed(0.01)
    at = p.sample(20, seed=10)
    bg = Background.of(p, at, 2)
    kt = bg.tilde_k.value
    P = kt + bg.Kw.value * bg.Kwb.value * bg.expK.value
    printed = -bg.Kwwb.value * P / (kt * bg.Kw.value)
    direct, _ = commutator_decomposition(p, at)
    assert np.min(np.abs(direct.B[1] - printed) / np.abs(printed)) > 1e-3
    corrected = -bg.Kwwb.value * P / (kt * bg.Kwb.value)
    assert np.max(np.abs(direct.B[1] - corrected) / np.abs(corrected)) < 1e-10


def test_a_and_b_carry_the_pointwise_residual_as_a_factor(spec):
    p = spec.perturbed(0.02, "z*zb")
    at = p.sample(20, seed=11)
    res = prz_residual(p, at).residual
    app = appendix_a_coefficients(p, at)
    bg = Background.of(p, at, 2)
    kt, Kw, Kwb = bg.tilde_k.value, bg.Kw.value, bg.Kwb.value
    assert np.allclose(app.A[2] * kt * Kw * Kwb / res, -Kwb, rtol=1e-10)
    assert np.allclose(app.B[1] * kt * Kwb / res, -bg.Kwwb.value, rtol=1e-10)


def _scaling_deviation(name, amplitudes):
    s = builtin(name)
    at = s.sample(20, seed=12)
    sizes = [commutator_relative(s.perturbed(a, "w*wb"), at) / a for a in amplitudes]
    return max(np.max(np.abs(x / sizes[0] - 1)) for x in sizes[1:])


NONLINEAR_AT_TENTH = pytest.mark.xfail(
    strict=True, reason="amplitude 1e-1 is outside the linear regime of the commutator for this function"
)


@pytest.mark.parametrize(
    "name",
    ["h4", pytest.param("s4", marks=NONLINEAR_AT_TENTH), pytest.param("cp2", marks=NONLINEAR_AT_TENTH),
     "bergmann"],
)
def test_commutator_scaling_over_stated_amplitudes(name):
    assert _scaling_deviation(name, (1e-3, 1e-2, 1e-1)) < 0.2


def test_commutator_scales_linearly_for_small_perturbations(spec):
    assert _scaling_deviation(spec.name, (1e-5, 1e-4, 1e-3)) < 0.2


def test_commutator_and_prz_agree_on_mixed_corpus():
    for name in ("s4", "h4", "cp2", "bergmann"):
        for amp in (0.0, 1e-3, 1e-2):
            s = builtin(name).perturbed(amp) if amp else builtin(name)
            at = s.sample(20, seed=13)
            comm = commutator_relative(s, at) < 1e-8
            prz = prz_residual(s, at).relative < 1e-8
            assert np.array_equal(comm, prz)
