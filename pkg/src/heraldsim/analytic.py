"""Closed-form rate equations for heralded sources with multiplexed heralding.

Every function is pure.  Rates are counts per second, times are seconds,
probabilities are per clock slot.  All photon statistics are Poissonian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence


def triggering_rate(mu: float, beta: float, dark_prob: float, clock_rate_hz: float) -> float:
    """Deadtime-free trigger rate ``[1 - (1 - d) exp(-beta mu)] F``."""
    if dark_prob >= 1.0:
        return clock_rate_hz
    # expm1/log1p keep full precision when beta * mu and d are tiny
    return -math.expm1(math.log1p(-dark_prob) - beta * mu) * clock_rate_hz


def deadtime_limited_rate(n_t: float, deadtime_s: float) -> float:
    """Non-paralyzable deadtime: ``N_t / (1 + N_t tau)``."""
    return n_t / (1.0 + n_t * deadtime_s)


def inverse_deadtime_correction(n_d: float, deadtime_s: float) -> float:
    """Recover the incident rate from a deadtime-limited rate.

    Raises ValueError when ``n_d >= 1 / tau`` (the detector cannot count
    that fast).
    """
    if n_d < 0:
        raise ValueError(f"rate must be >= 0, got {n_d!r}")
    if deadtime_s > 0 and n_d * deadtime_s >= 1.0:
        raise ValueError(f"rate exceeds deadtime saturation: {n_d:g} >= 1/tau = {1.0 / deadtime_s:g}")
    return n_d / (1.0 - n_d * deadtime_s)


def psm_heralding_rate(mu: float, beta: float, dark_prob: float, clock_rate_hz: float,
                       m: int, deadtime_s: float) -> float:
    """Heralding rate of m identical, equally split heralding detectors.

    ``beta`` is the total heralding-arm collection and detection efficiency
    before the split.  Multi-detector coincidences are not vetoed here.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m!r}")
    n_arm = triggering_rate(mu, beta / m, dark_prob, clock_rate_hz)
    return m * n_arm / (1.0 + n_arm * deadtime_s)


def arm_rates(mu: float, betas: Sequence[float], dark_probs: Sequence[float], clock_rate_hz: float,
              deadtimes_s: Sequence[float]) -> list[float]:
    """Deadtime-limited detection rate of each heralding arm (arms may differ)."""
    return [deadtime_limited_rate(triggering_rate(mu, b, d, clock_rate_hz), t)
            for b, d, t in zip(betas, dark_probs, deadtimes_s)]


def qber_from_psnr(psnr: float) -> float:
    """``1 / (2 (1 + PSNR))``; +inf maps to 0."""
    if math.isnan(psnr) or psnr < 0:
        raise ValueError(f"psnr must be >= 0, got {psnr!r}")
    if math.isinf(psnr):
        return 0.0
    return 1.0 / (2.0 * (1.0 + psnr))


def chi_improvement(alpha_s: float, mu: float) -> float:
    """PSNR gain of a heralded source over a weak coherent source."""
    if mu <= 0:
        raise ValueError("undefined improvement at zero flux (mu must be > 0)")
    return alpha_s * (1.0 + mu) / mu


def psnr_from_counts(s_signal_only: float, s_plus_noise: float) -> float:
    """PSNR from a noise-off rate S and a noise-on rate S' + N.

    Uses ``S / (S' + N - S)``, i.e. neglects the noise-induced deadtime
    that makes S' slightly smaller than S.
    """
    if s_signal_only < 0:
        raise ValueError(f"signal rate must be >= 0, got {s_signal_only!r}")
    noise = s_plus_noise - s_signal_only
    if noise <= 0:
        raise ValueError(f"no measurable noise: S'+N = {s_plus_noise:g} <= S = {s_signal_only:g}")
    return s_signal_only / noise


@dataclass(frozen=True)
class NoisyFractionReport:
    n_qkd_noisy: float
    f: float
    f_improved: float


def improved_fraction(n_qkd: float, psnr: float, chi: float, receiver_deadtime_s: float) -> float:
    """Fraction of QKD photons kept when heralding cuts detected noise by chi."""
    if chi < 1:
        raise ValueError(f"chi must be >= 1, got {chi!r}")
    if psnr <= 0:
        raise ValueError(f"psnr must be > 0, got {psnr!r}")
    x = n_qkd * receiver_deadtime_s
    if math.isinf(psnr) or math.isinf(chi):
        return 1.0
    return (1.0 + x) / (1.0 + x * (1.0 + 1.0 / (chi * psnr)))


def noisy_fraction(n_qkd: float, n_noise: float, receiver_deadtime_s: float, chi: float = 1.0) -> NoisyFractionReport:
    """Detected QKD rate and kept fraction for a free-running receiver.

    ``f`` is written with ``N_QKD (1 + 1/PSNR) = N_QKD + N_noise`` so that
    zero noise (infinite PSNR) and zero signal are both well defined.
    ``f_improved`` applies the heralding gain ``chi``; chi = 1 gives f.
    """
    if n_qkd < 0 or n_noise < 0:
        raise ValueError("rates must be >= 0")
    tau = receiver_deadtime_s
    n_noisy = n_qkd / (1.0 + (n_qkd + n_noise) * tau)
    f = (1.0 + n_qkd * tau) / (1.0 + (n_qkd + n_noise) * tau)
    if n_noise == 0:
        f_imp = 1.0
    elif n_qkd == 0:
        f_imp = f
    else:
        f_imp = improved_fraction(n_qkd, n_qkd / n_noise, chi, tau)
    return NoisyFractionReport(n_qkd_noisy=n_noisy, f=f, f_improved=f_imp)


@dataclass(frozen=True)
class AppendixAReport:
    N_t1: float
    N_t2: float
    N_d1: float
    N_d2: float
    N_XOR: float
    N_trigger: float
    n_t1: float
    n_t2: float
    n_d1: float
    n_d2: float
    n_r1: float
    n_r2: float
    dN_d1: float
    dN_d2: float
    N_detected: float

    def as_dict(self) -> dict[str, float]:
        return dict(self.__dict__)


def appendix_a_pipeline(mu: float, beta1: float, beta2: float, clock_rate_hz: float,
                        herald_deadtime_s: float, receiver_deadtime_s: float, alpha_s: float,
                        dark_probs: tuple[float, float] = (0.0, 0.0)) -> AppendixAReport:
    """Two-detector PSM heralding and receiver detection rates.

    Evaluated in the fixed order trigger -> deadtime -> coincidence ->
    herald -> shadow rates -> deadtime mismatch -> proportions -> detected,
    because the shadow-rate exponent consumes the other arm's rate and the
    coincidence rate.  The exponent ``(N_dj - N_XOR) tau_hd beta_i mu`` is
    used exactly as written.  ``dark_probs`` generalises the trigger rates
    to the dark-count form; the default (0, 0) is the dark-free model.
    The correction terms assume ``receiver_deadtime_s >= herald_deadtime_s``;
    otherwise they change sign and ``N_detected`` can exceed
    ``alpha_s * N_trigger``.
    """
    F, t_hr, t_hd = clock_rate_hz, herald_deadtime_s, receiver_deadtime_s
    betas = (beta1, beta2)
    N_t = [triggering_rate(mu, b, d, F) for b, d in zip(betas, dark_probs)]
    N_d = [deadtime_limited_rate(n, t_hr) for n in N_t]
    N_xor = N_d[0] * N_d[1] / F
    N_trigger = N_d[0] + N_d[1] - 2.0 * N_xor
    n_t = [(1.0 - math.exp(-(N_d[1 - i] - N_xor) * t_hd * betas[i] * mu)) * F for i in range(2)]
    n_d = [deadtime_limited_rate(n, t_hr) for n in n_t]
    dN = [N_t[i] / (1.0 + N_t[i] * t_hr) - N_t[i] / (1.0 + N_t[i] * t_hd) for i in range(2)]
    n_r = [dN[i] / N_d[i] * n_d[i] if N_d[i] > 0 else 0.0 for i in range(2)]
    correction = sum(dN[i] + n_d[i] - alpha_s * n_r[i] for i in range(2))
    N_detected = alpha_s * (N_trigger - alpha_s * correction)
    return AppendixAReport(N_t1=N_t[0], N_t2=N_t[1], N_d1=N_d[0], N_d2=N_d[1], N_XOR=N_xor,
                           N_trigger=N_trigger, n_t1=n_t[0], n_t2=n_t[1], n_d1=n_d[0], n_d2=n_d[1],
                           n_r1=n_r[0], n_r2=n_r[1], dN_d1=dN[0], dN_d2=dN[1], N_detected=N_detected)


def analytic_car(mu: float, beta_signal: float, beta_idler: float, dark_signal: float, dark_idler: float,
                 deadtime_s: float, clock_rate_hz: float = 48.7e6) -> tuple[float, tuple[float, float]]:
    """Coincidence-to-accidental ratio and deadtime-limited singles rates.

    True coincidences per slot are ``mu beta_s beta_i`` on top of the
    accidental floor ``P_s P_i``; singles ``P_x = 1 - (1 - d_x) exp(-beta_x mu)``.
    Deadtime only enters the reported singles rates (signal, idler).
    """
    p_s = 1.0 - (1.0 - dark_signal) * math.exp(-beta_signal * mu)
    p_i = 1.0 - (1.0 - dark_idler) * math.exp(-beta_idler * mu)
    p_acc = p_s * p_i
    if p_acc == 0:
        raise ValueError("no singles: CAR undefined")
    car = (mu * beta_signal * beta_idler + p_acc) / p_acc
    singles = (deadtime_limited_rate(p_s * clock_rate_hz, deadtime_s),
               deadtime_limited_rate(p_i * clock_rate_hz, deadtime_s))
    return car, singles


def afterpulse_psnr(s: float, n: float, s_ap: float, n_ap: float) -> float:
    """PSNR ``(S + S_AP) / (N + N_AP)`` with afterpulse-heralded detections."""
    den = n + n_ap
    if den <= 0:
        raise ValueError("zero noise denominator")
    return (s + s_ap) / den


def afterpulse_ratio_prediction(s: float, n: float, chi: float) -> float:
    """Expected S_AP / N_AP, the signal-to-noise proportion in the channel: S / (N chi)."""
    if n <= 0 or chi <= 0:
        raise ValueError("n and chi must be > 0")
    return s / (n * chi)


@dataclass(frozen=True)
class HeraldedClickProbs:
    """Zero-deadtime, XOR-vetoed HBT statistics per herald."""

    herald_prob: float   # heralds per clock slot
    p3: float            # P(detector 3 clicks | herald)
    p4: float
    p34: float           # P(both click | herald)

    @property
    def g2(self) -> float:
        return self.p34 / (self.p3 * self.p4)

    @property
    def clicks_per_herald(self) -> float:
        return self.p3 + self.p4


def heralded_click_probs(mu: float, betas: Sequence[float], herald_darks: Sequence[float],
                         photon_click: tuple[float, float], *, noise_mean: float = 0.0,
                         noise_click: tuple[float, float] = (0.0, 0.0),
                         receiver_darks: tuple[float, float] = (0.0, 0.0)) -> HeraldedClickProbs:
    """Exact herald and receiver click probabilities without any deadtime.

    Every pair's heralding photon is detected at arm i with probability
    ``betas[i]`` and its twin at receiver detector j with
    ``photon_click[j]``.  For Poisson pair numbers the per-category counts
    are independent Poisson variables, which makes every joint probability
    a product of exponentials.  Noise photons are Poisson with mean
    ``noise_mean`` per gate.  A herald is issued when exactly one arm
    fires.
    """
    B = sum(betas)
    m = len(betas)
    silent = [(1.0 - d) * math.exp(-mu * b) for b, d in zip(betas, herald_darks)]

    def joint(quiet: tuple[int, ...]) -> float:
        a_q = sum(photon_click[j] for j in quiet)
        n_q = sum(noise_click[j] for j in quiet)
        rx = math.prod(1.0 - receiver_darks[j] for j in quiet) * math.exp(-noise_mean * n_q)
        total = 0.0
        for i in range(m):
            others = math.prod(silent[k] for k in range(m) if k != i)
            fires = 1.0 - (1.0 - herald_darks[i]) * math.exp(-mu * betas[i] * (1.0 - a_q))
            total += others * math.exp(-mu * (1.0 - B) * a_q - mu * betas[i] * a_q) * fires
        return total * rx

    h = joint(())
    if h <= 0:
        raise ValueError("herald probability is zero")
    z = {q: joint(q) / h for r in (1, 2) for q in combinations((0, 1), r)}
    p3 = 1.0 - z[(0,)]
    p4 = 1.0 - z[(1,)]
    p34 = 1.0 - z[(0,)] - z[(1,)] + z[(0, 1)]
    return HeraldedClickProbs(herald_prob=h, p3=p3, p4=p4, p34=p34)


def noise_mean_from_prob(noise_prob: float) -> float:
    """Poisson mean whose probability of at least one photon is ``noise_prob``."""
    return -math.log1p(-noise_prob)
