"""Reduce Counters to physical metrics with first-order standard errors."""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import analytic
from .model import Counters


class InsufficientStatistics(ValueError):
    """A metric is undefined for the given tallies (e.g. a zero denominator)."""


@dataclass(frozen=True)
class MetricEstimate:
    value: float
    std_error: float
    n_samples: int

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError("std_error must be >= 0")


def herald_rate(counters: Counters, clock_rate_hz: float) -> MetricEstimate:
    """Heralds per second with a binomial error on the per-slot probability."""
    n = counters.slots
    if n <= 0:
        raise InsufficientStatistics("zero slots")
    p = counters.heralds / n
    return MetricEstimate(p * clock_rate_hz, clock_rate_hz * math.sqrt(p * (1.0 - p) / n), n)


def slot_rate(count: int, slots: int, clock_rate_hz: float) -> MetricEstimate:
    """Any per-slot tally as a rate in counts/s (binomial error)."""
    if slots <= 0:
        raise InsufficientStatistics("zero slots")
    p = count / slots
    return MetricEstimate(p * clock_rate_hz, clock_rate_hz * math.sqrt(max(p * (1.0 - p), 0.0) / slots), slots)


def receiver_rate(counters: Counters, clock_rate_hz: float) -> MetricEstimate:
    """Herald-conditioned receiver detections (det3 + det4) per second."""
    return slot_rate(counters.det3 + counters.det4, counters.slots, clock_rate_hz)


def g2_estimate(counters: Counters) -> MetricEstimate:
    """Conditional HBT estimator ``triples * heralds / (det3 * det4)``.

    Relative error from independent Poisson counts.  With zero triples the
    error uses one count so that an antibunched result still carries an
    honest uncertainty.
    """
    t, h, d3, d4 = counters.triples, counters.heralds, counters.det3, counters.det4
    if d3 <= 0 or d4 <= 0 or h <= 0:
        raise InsufficientStatistics("insufficient statistics: zero receiver singles")
    value = t * h / (d3 * d4)
    # (d3 + d4) / (d3 d4) keeps the result exactly symmetric under 3 <-> 4
    rel = math.sqrt(1.0 / max(t, 1) + 1.0 / h + (d3 + d4) / (d3 * d4))
    err = value * rel if t > 0 else h / (d3 * d4)
    return MetricEstimate(value, err, h)


def car_estimate(counters: Counters) -> MetricEstimate:
    """Same-slot over adjacent-slot signal-idler coincidences."""
    t, a = counters.car_true_coinc, counters.car_accidental
    if a <= 0:
        raise InsufficientStatistics("zero accidental coincidences")
    value = t / a
    err = value * math.sqrt((1.0 / t if t > 0 else 0.0) + 1.0 / a)
    return MetricEstimate(value, err, counters.slots)


def psnr_qber_estimate(counters_on: Counters, counters_off: Counters) -> tuple[MetricEstimate, MetricEstimate]:
    """PSNR ``S / (S' + N - S)`` from a noise-on and a noise-off run, and QBER.

    Both runs must cover the same number of slots.  Totals are all receiver
    clicks, dark counts included.  The two totals are treated as
    independent Poisson counts.
    """
    if counters_on.slots != counters_off.slots:
        raise ValueError("runs must cover the same number of slots")
    s = counters_off.receiver_total
    t = counters_on.receiver_total
    noise = t - s
    if noise <= 0:
        raise InsufficientStatistics(f"no measurable noise: S'+N = {t} <= S = {s}")
    psnr = s / noise
    # d psnr / d s = t / noise^2, d psnr / d t = -s / noise^2
    psnr_err = math.sqrt(s * t * t + t * s * s) / noise ** 2
    q = analytic.qber_from_psnr(psnr)
    q_err = 0.5 * psnr_err / (1.0 + psnr) ** 2
    n = counters_on.slots
    return MetricEstimate(psnr, psnr_err, n), MetricEstimate(q, q_err, n)
