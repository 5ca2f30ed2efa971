import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xxness.chain import (
    ChainSpec,
    PerturbationSpec,
    apply_perturbation,
    build_homogeneous,
    build_krawtchouk,
    is_mirror_symmetric,
    reflect,
    site_uniforms,
)
from xxness.errors import InvalidParameterError, InvalidSizeError


def test_homogeneous_builder():
    spec = build_homogeneous(5, delta=2.5)
    assert spec.n_sites == 5 and spec.last_site == 4
    assert np.all(spec.couplings == 1.0) and np.all(spec.fields == 0.0)
    assert spec.delta == 2.5


def test_krawtchouk_builder_values():
    spec = build_krawtchouk(4, 0.3)
    N = 3
    n = np.arange(4)
    assert np.allclose(spec.fields, 0.3 * (N - n) + 0.7 * n)
    assert np.allclose(spec.couplings, np.sqrt(0.21) * np.sqrt([3, 4, 3]))


def test_krawtchouk_half_is_mirror_symmetric():
    assert is_mirror_symmetric(build_krawtchouk(12, 0.5))
    assert not is_mirror_symmetric(build_krawtchouk(12, 0.3))
    assert is_mirror_symmetric(build_homogeneous(7))


@pytest.mark.parametrize("args, exc", [
    (([], [0.0]), InvalidSizeError),
    (([1.0, 1.0], [0.0, 0.0]), InvalidSizeError),
    (([0.0], [0.0, 0.0]), InvalidParameterError),
    (([1.0], [0.0, np.nan]), InvalidParameterError),
])
def test_chain_validation(args, exc):
    with pytest.raises(exc):
        ChainSpec(*args)


def test_negative_delta_rejected():
    with pytest.raises(InvalidParameterError):
        ChainSpec([1.0], [0.0, 0.0], -0.1)


def test_arrays_are_read_only():
    spec = build_homogeneous(3)
    with pytest.raises(ValueError):
        spec.fields[0] = 1.0


def test_json_round_trip():
    spec = ChainSpec([0.5, 1.25], [0.1, 0.2, 0.3], 2.0)
    again = ChainSpec.from_json(spec.to_json())
    assert again == spec and hash(again) == hash(spec)


def test_missing_key_names_the_field():
    with pytest.raises(InvalidParameterError, match="couplings"):
        ChainSpec.from_dict({"fields": [0, 0], "delta": 1})


def test_linear_field_perturbation():
    spec = apply_perturbation(build_homogeneous(5), PerturbationSpec("linear-field", 2.0))
    assert np.allclose(spec.fields, 2.0 * np.arange(5) / 4)


def test_random_field_is_deterministic_and_prefix_stable():
    a = site_uniforms(42, 10)
    b = site_uniforms(42, 25)
    assert np.array_equal(a, b[:10])
    assert not np.array_equal(a, site_uniforms(43, 10))
    spec = apply_perturbation(build_homogeneous(10), PerturbationSpec("random-field", 0.4, 42))
    assert np.array_equal(spec.fields, 0.4 * a)


@pytest.mark.parametrize("kind, strength, seed", [
    ("quadratic", 1.0, 0),
    ("random-field", -1.0, 0),
    ("random-field", 1.0, 2**64),
])
def test_perturbation_validation(kind, strength, seed):
    with pytest.raises(InvalidParameterError):
        PerturbationSpec(kind, strength, seed)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.1, 3.0), min_size=1, max_size=10), st.data())
def test_reflect_is_an_involution(couplings, data):
    fields = data.draw(st.lists(st.floats(-2, 2), min_size=len(couplings) + 1, max_size=len(couplings) + 1))
    spec = ChainSpec(couplings, fields, 1.0)
    assert reflect(reflect(spec)) == spec
    if reflect(spec) == spec:
        assert is_mirror_symmetric(spec)
    assert is_mirror_symmetric(spec) == is_mirror_symmetric(reflect(spec))
