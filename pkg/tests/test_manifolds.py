import json

import numpy as np
import pytest

from przanowski.manifolds import SpecError, builtin, load_manifold, spec_from_dict


def test_s4_defaults():
    s = load_manifold("s4")
    assert s.lam == -1 and s.eps == -1


def test_bergmann_is_positive_cp2_variant():
    b, c = load_manifold("bergmann"), load_manifold("cp2")
    assert b.eps == 1 and c.eps == -1
    assert b.source == c.source


def test_zero_lambda_rejected(tmp_path):
    p = tmp_path / "flat.json"
    p.write_text(json.dumps({"name": "flat", "lambda": 0, "K": "w*wb", "domain": {"w": [0, 1], "z": [0, 1]}}))
    with pytest.raises(SpecError) as info:
        load_manifold(f"file:{p}")
    assert info.value.path == "lambda"


def test_eps_must_match_sign_of_lambda():
    with pytest.raises(SpecError) as info:
        spec_from_dict({"lambda": 1.0, "eps": -1, "K": "w", "domain": {"w": [0, 1], "z": [0, 1]}})
    assert info.value.path == "eps"


def test_schema_errors_name_the_field():
    with pytest.raises(SpecError) as info:
        spec_from_dict({"lambda": 1.0, "K": "w", "domain": {"w": [1, 0], "z": [0, 1]}})
    assert info.value.path == "domain.w"
    with pytest.raises(SpecError) as info:
        spec_from_dict({"lambda": 1.0, "K": "w+", "domain": {"w": [0, 1], "z": [0, 1]}})
    assert info.value.path == "K"
    with pytest.raises(SpecError) as info:
        spec_from_dict({"lambda": 1.0, "K": "w", "domain": {"w": [0, 1]}})
    assert info.value.path == "domain.z"


def test_unknown_builtin():
    with pytest.raises(SpecError):
        load_manifold("t4")


def test_samples_are_seeded_and_in_the_box(spec):
    a, b = spec.sample(30, seed=4), spec.sample(30, seed=4)
    assert np.array_equal(a.w, b.w)
    assert a.is_real_slice()
    assert np.all(spec.domain["w"].contains(a.w)) and np.all(spec.domain["z"].contains(a.z))


def test_file_round_trip(tmp_path):
    s = builtin("h4")
    p = tmp_path / "h4.json"
    p.write_text(json.dumps(s.to_json()))
    t = load_manifold(str(p))
    assert t.source == s.source and t.lam == s.lam and t.domain == s.domain
