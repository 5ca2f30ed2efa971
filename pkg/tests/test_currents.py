import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from xxness.chain import ChainSpec, build_homogeneous, build_krawtchouk, reflect
from xxness.currents import (
    BathConfig,
    asymptotic_kappa,
    bose_occupation,
    conductivity,
    current_report,
    flow_bounds,
    heat_flow,
    high_gap_limits,
    kappa,
    log_m_coefficient,
    m_coefficient,
    mirror_flows,
    ness_coefficients,
    sinh_ratio,
    spin_flow,
)
from xxness.errors import DomainError, GapError, InvalidParameterError, SymmetryError
from xxness.spectral import diagonalize, rescale_to_window

# frozen values for the two-site chain J = 1, delta = 2 at beta = (0.1, 0.2)
TWO_SITE_SPIN = 2.0601895381850093
TWO_SITE_HEAT = 2.0465687082542336


@pytest.fixture
def two_site():
    return diagonalize(build_homogeneous(2, 2.0))


def test_bose_occupation_values():
    assert bose_occupation(0.1, 1.0) == pytest.approx(9.50833194477505, rel=1e-14)
    assert bose_occupation(1.0, np.log(2.0)) == pytest.approx(1.0, rel=1e-14)
    assert bose_occupation(1.0, 800.0) == 0.0


def test_bose_occupation_domain():
    with pytest.raises(DomainError):
        bose_occupation(1.0, 0.0)
    with pytest.raises(DomainError):
        bose_occupation(-1.0, 1.0)


def test_sinh_ratio_is_stable():
    assert sinh_ratio(0.3, 0.7) == pytest.approx(np.sinh(0.3) / np.sinh(0.7), rel=1e-14)
    assert sinh_ratio(-0.3, 0.7) == pytest.approx(np.sinh(-0.3) / np.sinh(0.7), rel=1e-14)
    assert sinh_ratio(900.0, 1000.0) == pytest.approx(np.exp(-100.0), rel=1e-12)


def test_two_site_flows(two_site):
    bath = BathConfig(0.1, 0.2)
    assert spin_flow(two_site, bath) == pytest.approx(TWO_SITE_SPIN, rel=1e-13)
    assert heat_flow(two_site, bath) == pytest.approx(TWO_SITE_HEAT, rel=1e-13)
    q, h = mirror_flows(two_site, bath)
    assert q == pytest.approx(TWO_SITE_SPIN, rel=1e-13)
    assert h == pytest.approx(TWO_SITE_HEAT, rel=1e-13)


def test_two_site_flows_by_hand(two_site):
    # modes E = 1, 3 with phi_0^2 = phi_N^2 = 1/2
    bath = BathConfig(0.1, 0.2)
    total = 0.0
    heat = 0.0
    for E in (1.0, 3.0):
        n0, nN = bose_occupation(0.1, E), bose_occupation(0.2, E)
        w = 2 * np.pi * 0.25 * (n0 - nN) / (0.5 * (2 * n0 + 1) + 0.5 * (2 * nN + 1))
        total += 2 * w
        heat += E * w
    assert spin_flow(two_site, bath) == pytest.approx(total, rel=1e-13)
    assert heat_flow(two_site, bath) == pytest.approx(heat, rel=1e-13)


def test_rates_and_occupations(two_site):
    bath = BathConfig(0.5, 0.5)
    co = ness_coefficients(two_site, bath)
    assert np.allclose(co.occupations, bose_occupation(0.5, two_site.energies) /
                       (2 * bose_occupation(0.5, two_site.energies) + 1))
    assert np.allclose(co.big_c - co.big_c_tilde, 2 * np.pi)


def test_equal_temperatures_give_zero_flow():
    sd = diagonalize(build_krawtchouk(15, 0.3, 0.5))
    bath = BathConfig(0.7, 0.7)
    assert spin_flow(sd, bath) == 0.0
    assert heat_flow(sd, bath) == 0.0


def test_mirror_flows_need_mirror_chain():
    sd = diagonalize(build_krawtchouk(10, 0.3, 0.5))
    with pytest.raises(SymmetryError):
        mirror_flows(sd, BathConfig(0.1, 0.2))
    with pytest.raises(SymmetryError):
        kappa(sd, 1.0)


def test_mirror_flows_need_equal_h(two_site):
    with pytest.raises(InvalidParameterError):
        mirror_flows(two_site, BathConfig(0.1, 0.2, 1.0, 2.0))


@pytest.mark.parametrize("factory", [
    lambda: build_homogeneous(40, 2.5),
    lambda: build_krawtchouk(40, 0.5, 0.3),
])
def test_general_and_matrix_forms_agree(factory):
    sd = diagonalize(factory())
    rng = np.random.default_rng(3)
    for b0, bN in rng.uniform(0.01, 3.0, size=(10, 2)):
        bath = BathConfig(b0, bN)
        q, h = mirror_flows(sd, bath)
        assert q == pytest.approx(spin_flow(sd, bath), rel=1e-9)
        assert h == pytest.approx(heat_flow(sd, bath), rel=1e-9)


def test_antisymmetry_under_bath_swap_with_reflection():
    spec = ChainSpec([0.8, 1.3, 0.6, 1.1], [0.1, 0.5, 0.2, 0.9, 0.3], 2.5)
    sd = diagonalize(spec)
    mirror = diagonalize(reflect(spec))
    bath = BathConfig(0.2, 0.9, 1.3, 0.7, 0.8)
    assert spin_flow(mirror, bath.swapped()) == pytest.approx(-spin_flow(sd, bath), rel=1e-12)
    assert heat_flow(mirror, bath.swapped()) == pytest.approx(-heat_flow(sd, bath), rel=1e-12)


def test_sign_follows_temperature_order():
    sd = diagonalize(build_krawtchouk(8, 0.4, 0.5))
    assert spin_flow(sd, BathConfig(0.1, 1.0)) > 0
    assert spin_flow(sd, BathConfig(1.0, 0.1)) < 0


random_chain = st.integers(2, 12).flatmap(lambda n: st.tuples(
    st.lists(st.floats(0.5, 1.5), min_size=n - 1, max_size=n - 1),
    st.lists(st.floats(0.0, 1.0), min_size=n, max_size=n),
    st.floats(0.05, 20.0),
    st.floats(0.05, 20.0),
))


@settings(max_examples=80, deadline=None)
@given(random_chain)
def test_bounds_dominate(args):
    J, B, t_hot, t_cold = args
    if t_hot <= t_cold:
        t_hot, t_cold = t_cold, t_hot
    if t_hot == t_cold:
        return
    try:
        sd = diagonalize(ChainSpec(J, B, 2.0))
    except GapError:
        assume(False)
    bath = BathConfig.from_temperatures(t_hot, t_cold)
    b = flow_bounds(sd, bath)
    slack = 1e-12
    assert b.spin - spin_flow(sd, bath) >= -slack * max(1.0, b.spin)
    assert b.heat - heat_flow(sd, bath) >= -slack * max(1.0, b.heat)
    assert b.spin_matrix - b.spin >= -slack * max(1.0, b.spin)
    assert b.heat_matrix - b.heat >= -slack * max(1.0, b.heat)


def test_m_coefficient_identities():
    # homogeneous: sum phi_0^2 E = B_0 + delta = delta
    assert m_coefficient(diagonalize(build_homogeneous(30, 2.5))) == pytest.approx(2.5, rel=1e-12)
    # Krawtchouk p = 1/2: binomial mean N/2 plus delta
    assert m_coefficient(diagonalize(build_krawtchouk(31, 0.5, 0.7))) == pytest.approx(15.7, rel=1e-12)


@pytest.mark.parametrize("spec", [
    build_homogeneous(25, 3.0),
    build_krawtchouk(25, 0.5, 1.0),
    ChainSpec(np.linspace(0.6, 1.4, 9), np.linspace(0.0, 1.0, 10), 2.0),
])
def test_log_m_matches_direct_sum(spec):
    assert np.exp(log_m_coefficient(spec)) == pytest.approx(m_coefficient(diagonalize(spec)), rel=1e-9)


def test_log_m_survives_underflow():
    spec = build_krawtchouk(300, 0.5, 1.0)
    N = 299
    assert log_m_coefficient(spec) == pytest.approx(np.log(N / 2 + 1.0), rel=1e-10)


def test_kappa_matches_small_gap_heat_flow():
    sd = diagonalize(build_krawtchouk(12, 0.5, 0.5))
    T, dT = 0.8, 1e-4
    bath = BathConfig.from_temperatures(T + dT / 2, T - dT / 2)
    N = 11
    assert kappa(sd, T) == pytest.approx(heat_flow(sd, bath) * N / dT, rel=1e-6)
    assert conductivity(sd, bath) == pytest.approx(kappa(sd, T), rel=1e-12)


def test_kappa_high_temperature_regime():
    sd = diagonalize(build_homogeneous(101, 3.0))
    T = 200.0
    ratio = kappa(sd, T) * 2 * T / (np.pi * 100 * 3.0)
    assert ratio == pytest.approx(1.0, abs=1e-3)


def test_asymptotic_kappa_krawtchouk_dominant_mode():
    spec = rescale_to_window(build_krawtchouk(31, 0.5), 1.0, 2.0)
    sd = diagonalize(spec)
    T = 0.004
    assert kappa(sd, T) == pytest.approx(asymptotic_kappa("krawtchouk-half", 31, 1.0, 2.0, T), rel=0.05)


def test_asymptotic_kappa_rejects_unknown_family():
    with pytest.raises(InvalidParameterError):
        asymptotic_kappa("dimer", 10, 1.0, 2.0, 0.1)


def test_high_gap_limits_reached():
    sd = diagonalize(build_krawtchouk(21, 0.5, 0.1))
    bath = BathConfig.from_temperatures(1e7, 10.0)
    q_lim, h_lim = high_gap_limits(sd, bath)
    assert q_lim == pytest.approx(2 * np.pi)
    assert h_lim == pytest.approx(np.pi * (0.5 * 20 + 0.1))
    assert spin_flow(sd, bath) == pytest.approx(q_lim, rel=1e-3)
    assert spin_flow(sd, bath) < q_lim and heat_flow(sd, bath) < h_lim


def test_current_report(two_site):
    rep = current_report(two_site, BathConfig(0.1, 0.2))
    rec = rep.as_record()
    assert rec["spin_flow_left"] == pytest.approx(TWO_SITE_SPIN, rel=1e-13)
    assert rec["matrix_rel_diff"] < 1e-12
    assert "mirror-symmetric" in rec["notes"]
    assert rec["m_coefficient"] == pytest.approx(2.0)


def test_current_report_non_mirror_has_no_matrix_values():
    rep = current_report(diagonalize(build_krawtchouk(6, 0.3, 0.5)), BathConfig(0.1, 0.2))
    assert rep.spin_flow_matrix is None and rep.kappa is None


@pytest.mark.filterwarnings("error")
def test_extreme_temperature_ratio_stays_finite():
    sd = diagonalize(build_homogeneous(30, 2.5))
    for bath in (BathConfig(0.02, 50.0), BathConfig(50.0, 0.02)):
        q, h = mirror_flows(sd, bath)
        assert np.isfinite(spin_flow(sd, bath))
        assert spin_flow(sd, bath) == pytest.approx(q, rel=1e-9)
        assert heat_flow(sd, bath) == pytest.approx(h, rel=1e-9)
