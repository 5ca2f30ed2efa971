import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xxness.chain import ChainSpec, build_homogeneous, build_krawtchouk, reflect
from xxness.errors import GapError, InvalidSizeError, NumericError
from xxness.spectral import (
    SpectralData,
    closed_form_homogeneous,
    closed_form_krawtchouk,
    diagonalize,
    eigenvalues,
    krawtchouk_polynomials,
    matrix_function,
    rescale_to_window,
    transfer_fidelity,
)

chains = st.integers(2, 14).flatmap(lambda n: st.tuples(
    st.lists(st.floats(0.2, 2.0), min_size=n - 1, max_size=n - 1),
    st.lists(st.floats(-1.0, 1.0), min_size=n, max_size=n),
))


def test_two_site_example():
    sd = diagonalize(ChainSpec([1.0], [0.0, 0.0], 2.0))
    assert np.allclose(sd.eigenvalues, [-1.0, 1.0])
    assert np.allclose(sd.phi_first, [1 / np.sqrt(2)] * 2)
    assert np.allclose(sd.phi_last, [-1 / np.sqrt(2), 1 / np.sqrt(2)])
    shifted_sq = matrix_function(sd, lambda e: e**2)
    assert np.allclose(shifted_sq, [[5.0, 4.0], [4.0, 5.0]])


def test_gap_error_carries_the_energy():
    with pytest.raises(GapError) as info:
        diagonalize(build_homogeneous(4, 1.0))
    assert info.value.energy == pytest.approx(1.0 - 2 * np.cos(np.pi / 5))


def test_homogeneous_closed_form():
    num = diagonalize(build_homogeneous(60, 3.0))
    ref = closed_form_homogeneous(60, 3.0)
    assert np.max(np.abs(num.eigenvalues - ref.eigenvalues)) < 1e-12
    assert np.max(np.abs(num.wavefunctions - ref.wavefunctions)) < 1e-12


@pytest.mark.parametrize("p", [0.1, 0.3, 0.5, 0.8])
def test_krawtchouk_closed_form(p):
    num = diagonalize(build_krawtchouk(40, p, 1.0))
    ref = closed_form_krawtchouk(40, p, 1.0)
    assert np.allclose(num.eigenvalues, np.arange(40), atol=1e-10)
    assert np.max(np.abs(num.wavefunctions - ref.wavefunctions)) < 1e-10


def test_krawtchouk_polynomial_low_orders():
    K = krawtchouk_polynomials(4, 0.25, [0.0, 1.0, 2.0])
    assert K[0] == [1.0, 1.0, 1.0]
    assert np.allclose(K[1], [1.0, 1.0 - 1 / 1.0, 1.0 - 2 / 1.0])
    # K_n(0) = 1 for every n
    assert np.allclose([row[0] for row in K], 1.0)


def test_sign_convention_survives_underflow():
    # end amplitudes of the outer modes are ~1e-80 here
    sd = diagonalize(build_krawtchouk(120, 0.2, 1.0))
    assert np.all(sd.phi_first >= 0)
    ref = closed_form_krawtchouk(120, 0.2, 1.0)
    assert np.max(np.abs(sd.wavefunctions - ref.wavefunctions)) < 1e-10


@settings(max_examples=60, deadline=None)
@given(chains)
def test_orthonormal_and_positive_first_site(chain):
    J, B = chain
    spec = ChainSpec(J, B, 10.0)
    sd = diagonalize(spec)
    U = sd.wavefunctions
    assert np.max(np.abs(U.T @ U - np.eye(spec.n_sites))) < 1e-10
    assert np.all(np.diff(sd.eigenvalues) > 0)
    assert np.all(sd.phi_first > 0)
    assert np.allclose((U * sd.eigenvalues) @ U.T, spec.matrix(), atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(chains)
def test_reflected_spectral_data_matches_reflected_chain(chain):
    J, B = chain
    spec = ChainSpec(J, B, 10.0)
    a = diagonalize(spec).reflected()
    b = diagonalize(reflect(spec))
    assert np.allclose(a.wavefunctions, b.wavefunctions, atol=1e-9)


def test_eigenvalues_only_matches():
    spec = build_krawtchouk(30, 0.4)
    assert np.allclose(eigenvalues(spec), diagonalize(spec).eigenvalues)


def test_matrix_function_reports_bad_energy():
    sd = diagonalize(build_homogeneous(3, 3.0))
    with pytest.raises(NumericError, match="mode energy"):
        matrix_function(sd, lambda e: np.where(e > 4, np.inf, e))


@pytest.mark.parametrize("N", [3, 10, 25, 50])
def test_perfect_state_transfer(N):
    sd = diagonalize(build_krawtchouk(N + 1, 0.5, 1.0))
    assert transfer_fidelity(sd, np.pi) == pytest.approx(1.0, abs=1e-10)


def test_homogeneous_chain_does_not_transfer_perfectly():
    assert transfer_fidelity(diagonalize(build_homogeneous(50, 3.0)), np.pi) < 0.999


def test_rescale_to_window():
    spec = rescale_to_window(build_krawtchouk(20, 0.5), 1.0, 2.0)
    E = eigenvalues(spec) + spec.delta
    assert E[0] == pytest.approx(1.0) and E[-1] == pytest.approx(2.0)
    assert np.allclose(np.diff(E), 1 / 19)


def test_rescale_negative_offset_goes_into_fields():
    spec = rescale_to_window(ChainSpec(np.ones(9), np.full(10, 10.0)), 0.5, 1.0)
    assert spec.delta == 0.0
    E = eigenvalues(spec)
    assert E[0] == pytest.approx(0.5) and E[-1] == pytest.approx(1.0)


def test_csv_output():
    sd = diagonalize(build_krawtchouk(4, 0.5, 1.0))
    short = sd.to_csv(full=False).splitlines()
    assert short[0] == "k,x_k,x_k_plus_delta,phi_0,phi_3"
    assert len(short) == 5
    full = sd.to_csv(full=True).splitlines()
    assert full[0].split(",")[2:] == ["phi_0", "phi_1", "phi_2", "phi_3"]


def test_spectral_data_validates_shape():
    with pytest.raises(InvalidSizeError):
        SpectralData(np.array([1.0, 2.0]), np.eye(3))
