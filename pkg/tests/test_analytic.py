import math

import mpmath as mp
import pytest
from hypothesis import assume, given, strategies as st

from heraldsim import analytic as an

mp.mp.dps = 40
F = 48.7e6


def mp_trigger(mu, beta, d, f):
    return (1 - (1 - mp.mpf(d)) * mp.exp(-mp.mpf(beta) * mp.mpf(mu))) * f


# ---- Eq. 2 / Eq. 3

def test_trigger_rate_limits():
    assert an.triggering_rate(0.3, 0.1, 1.0, F) == F
    assert an.triggering_rate(0.0, 0.1, 0.0, F) == 0.0


def test_trigger_rate_against_high_precision():
    got = an.triggering_rate(0.0061794, 1.0, 0.0, F)
    want = float(mp_trigger(mp.mpf("0.0061794"), 1, 0, F))
    assert got == pytest.approx(want, rel=1e-12)
    assert got == pytest.approx(3.00e5, rel=1e-3)


def test_deadtime_limited_rate():
    assert an.deadtime_limited_rate(3.0e5, 10e-6) == pytest.approx(7.5e4, rel=1e-12)
    assert an.deadtime_limited_rate(123.0, 0.0) == 123.0
    big = an.deadtime_limited_rate(1e9, 10e-6)
    assert big == pytest.approx(float(mp.mpf(1e9) / (1 + mp.mpf(1e9) * mp.mpf("1e-5"))), rel=1e-12)
    assert big == pytest.approx(9.99900e4, rel=1e-6)
    assert big < 1e5


def test_inverse_deadtime_correction():
    assert an.inverse_deadtime_correction(7.5e4, 10e-6) == pytest.approx(3.0e5, rel=1e-12)
    assert an.inverse_deadtime_correction(42.0, 0.0) == 42.0
    with pytest.raises(ValueError, match="rate exceeds deadtime saturation"):
        an.inverse_deadtime_correction(1e5, 10e-6)


@given(x=st.floats(0, 1e7), tau=st.floats(0, 1e-4))
def test_deadtime_round_trip(x, tau):
    y = an.inverse_deadtime_correction(an.deadtime_limited_rate(x, tau), tau)
    assert y == pytest.approx(x, rel=1e-12, abs=1e-300)


# ---- Eq. 4

def test_psm_fixture():
    beta_mu = 0.0061794
    assert an.psm_heralding_rate(beta_mu, 1.0, 0.0, F, 2, 10e-6) == pytest.approx(1.2007e5, abs=10)


def test_psm_no_deadtime_fixture():
    assert an.psm_heralding_rate(0.01, 1.0, 0.0, 1e6, 2, 0.0) == pytest.approx(9975.0, abs=0.1)
    assert an.psm_heralding_rate(0.01, 1.0, 0.0, 1e6, 1, 0.0) == pytest.approx(9950.2, abs=0.1)


@given(mu=st.floats(0, 2), beta=st.floats(0, 1), d=st.floats(0, 0.1), tau=st.floats(0, 1e-4))
def test_psm_m1_is_eq3_of_eq2(mu, beta, d, tau):
    n_t = an.triggering_rate(mu, beta, d, F)
    assert an.psm_heralding_rate(mu, beta, d, F, 1, tau) == an.deadtime_limited_rate(n_t, tau)


@given(mu=st.floats(1e-4, 2), beta=st.floats(1e-3, 1), d=st.floats(0, 1e-3), tau=st.floats(0, 1e-4),
       m=st.integers(1, 7))
def test_psm_monotone_in_m_and_deadtime(mu, beta, d, tau, m):
    r = an.psm_heralding_rate(mu, beta, d, F, m, tau)
    assert an.psm_heralding_rate(mu, beta, d, F, m + 1, tau) >= r * (1 - 1e-12)
    assert an.psm_heralding_rate(mu, beta, d, F, m, tau * 1.5 + 1e-7) <= r * (1 + 1e-12)


# ---- Eq. 1 and chi

def test_qber_fixtures():
    assert an.qber_from_psnr(4.0) == 0.1
    assert an.qber_from_psnr(0.0) == 0.5
    assert an.qber_from_psnr(math.inf) == 0.0
    with pytest.raises(ValueError):
        an.qber_from_psnr(-1.0)


def test_qber_strictly_decreasing():
    grid = [10 ** (k / 20.0) for k in range(-40, 60)]
    q = [an.qber_from_psnr(p) for p in grid]
    assert all(a > b for a, b in zip(q, q[1:]))


@given(s=st.floats(0, 1e6), extra=st.floats(1e-3, 1e6))
def test_qber_of_measured_psnr_in_range(s, extra):
    q = an.qber_from_psnr(an.psnr_from_counts(s, s + extra))
    assert 0 <= q <= 0.5


def test_chi():
    assert an.chi_improvement(0.745, 0.12) == pytest.approx(6.953, abs=5e-4)
    assert an.chi_improvement(0.1 / 1.1, 0.1) == pytest.approx(1.0, rel=1e-14)
    assert an.chi_improvement(0.5, 0.1) == pytest.approx(5.5, rel=1e-14)
    with pytest.raises(ValueError, match="undefined improvement at zero flux"):
        an.chi_improvement(0.5, 0.0)


def test_psnr_from_counts():
    assert an.psnr_from_counts(100, 150) == 2.0
    assert an.psnr_from_counts(0, 10) == 0.0
    with pytest.raises(ValueError, match="no measurable noise"):
        an.psnr_from_counts(100, 100)


# ---- Eqs. 5 to 7

def test_noisy_fraction():
    assert an.noisy_fraction(1e4, 0.0, 10e-6).f == 1.0
    assert an.noisy_fraction(1e4, 5e3, 0.0).f == 1.0
    rep = an.noisy_fraction(1e4, 1e4, 10e-6)
    assert rep.f == pytest.approx(1.1 / 1.2, rel=1e-12)
    assert rep.n_qkd_noisy == pytest.approx(1e4 / 1.2, rel=1e-12)


def test_improved_fraction():
    f = an.noisy_fraction(1e4, 1e4, 10e-6).f
    assert an.improved_fraction(1e4, 1.0, 1.0, 10e-6) == pytest.approx(f, rel=1e-14)
    assert an.improved_fraction(1e4, 1.0, math.inf, 10e-6) == 1.0
    assert an.improved_fraction(1e4, 1.0, 1e15, 10e-6) == pytest.approx(1.0, rel=1e-12)
    # 1.1 / (1 + 0.1 (1 + 1/6.953))
    assert an.improved_fraction(1e4, 1.0, 6.953, 10e-6) == pytest.approx(0.98709, abs=1e-5)


@given(n=st.floats(1, 1e6), noise=st.floats(1e-3, 1e6), chi=st.floats(1, 100), tau=st.floats(0, 1e-4))
def test_improvement_never_hurts(n, noise, chi, tau):
    rep = an.noisy_fraction(n, noise, tau, chi)
    assert rep.f <= rep.f_improved * (1 + 1e-12)
    assert rep.f_improved <= 1 + 1e-12


# ---- Appendix A chain

def test_appendix_zero_deadtime_limit():
    mu, b1, b2, a = 0.12, 0.02, 0.017, 0.0991
    rep = an.appendix_a_pipeline(mu, b1, b2, F, 0.0, 0.0, a)
    n1, n2 = rep.N_t1, rep.N_t2
    assert rep.N_detected == pytest.approx(a * (n1 + n2 - 2 * n1 * n2 / F), rel=1e-14)
    assert rep.N_detected == pytest.approx(a * rep.N_trigger, rel=1e-14)


def test_appendix_xor_fixture():
    # N_d1 = N_d2 = 6.0e4 at F = 48.7 MHz, reached by choosing beta*mu
    x = -math.log(1 - 6.0e4 / F)
    rep = an.appendix_a_pipeline(1.0, x, x, F, 0.0, 0.0, 0.5)
    assert rep.N_XOR == pytest.approx(73.92, abs=0.01)


@given(mu=st.floats(1e-3, 0.5), b1=st.floats(1e-3, 0.5), b2=st.floats(1e-3, 0.5), t_hr=st.floats(0, 2e-5),
       t_hd=st.floats(0, 2e-5), a=st.floats(1e-3, 1))
def test_appendix_invariants(mu, b1, b2, t_hr, t_hd, a):
    # the chain describes receivers that recover no faster than the heralding detectors
    t_hr, t_hd = min(t_hr, t_hd), max(t_hr, t_hd)
    rep = an.appendix_a_pipeline(mu, b1, b2, F, t_hr, t_hd, a)
    assert rep.N_d1 <= rep.N_t1 and rep.N_d2 <= rep.N_t2
    assert rep.N_XOR <= min(rep.N_d1, rep.N_d2)
    assert rep.N_trigger >= 0
    assert rep.N_detected <= a * rep.N_trigger * (1 + 1e-12)


# ---- CAR and afterpulsing

def test_car_model():
    car, _ = an.analytic_car(0.01, 0.1, 0.1, 0.0, 0.0, 0.0)
    p = float(1 - mp.exp(mp.mpf("-0.001")))
    assert car == pytest.approx((0.01 * 0.01 + p * p) / (p * p), rel=1e-10)
    assert car == pytest.approx(101.0, rel=2e-3)
    cars = [an.analytic_car(mu, 0.1, 0.1, 0.0, 0.0, 0.0)[0] for mu in (0.1, 1.0, 10.0)]
    assert cars[0] > cars[1] > cars[2] > 1.0


def test_car_singles_are_deadtime_limited():
    _, (s, i) = an.analytic_car(0.1, 0.05, 0.02, 1e-5, 5.5e-6, 10e-6, F)
    p_s = 1 - (1 - 1e-5) * math.exp(-0.005)
    assert s == pytest.approx(an.deadtime_limited_rate(p_s * F, 10e-6), rel=1e-14)
    assert i < s


def test_afterpulse_psnr():
    assert an.afterpulse_psnr(100, 10, 0, 0) == 10.0
    assert an.afterpulse_psnr(100, 10, 5, 1) == pytest.approx(105 / 11, rel=1e-14)
    assert an.afterpulse_ratio_prediction(695, 100, 6.95) == pytest.approx(1.0, rel=1e-14)
    with pytest.raises(ValueError):
        an.afterpulse_psnr(1, 0, 1, 0)


# ---- exact zero-deadtime click model

def test_heralded_clicks_single_pair_limit():
    # at small mu a herald carries at most one photon: no triples to first order
    h = an.heralded_click_probs(1e-5, [0.5], [0.0], (0.2, 0.2))
    assert h.p3 == pytest.approx(0.2, rel=1e-3)
    assert h.g2 < 1e-3


def test_heralded_clicks_noise_only_is_uncorrelated():
    h = an.heralded_click_probs(0.1, [0.3], [0.0], (0.0, 0.0), noise_mean=0.3, noise_click=(0.5, 0.5))
    assert h.g2 == pytest.approx(1.0, rel=1e-12)


def test_heralded_clicks_thinning_identity():
    # Poisson pairs: herald probability is 1 - exp(-mu beta) for one dark-free arm
    h = an.heralded_click_probs(0.2, [0.3], [0.0], (0.1, 0.1))
    assert h.herald_prob == pytest.approx(1 - math.exp(-0.06), rel=1e-14)


@given(mu=st.floats(1e-3, 1), a=st.floats(0.01, 0.5))
def test_heralded_g2_below_two(mu, a):
    h = an.heralded_click_probs(mu, [0.1, 0.1], [1e-6, 1e-6], (a, a))
    assume(h.p3 > 0)
    assert 0 <= h.g2 < 2.0
