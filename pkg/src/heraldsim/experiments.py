"""Named scenario sweeps that regenerate each measurement as a table.

Every scenario pins the non-axis parameters to the base config, so tables
from different scenarios are comparable.  Replicate r runs with seed
``rng.derived_seed(base.seed, r)``; within one replicate every axis point
uses the same seed, so neighbouring points share their random numbers and
trends are not masked by independent scatter.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable

from scipy.optimize import brentq

from . import analytic, engine
from . import estimators as est
from .config import config_digest, get_param, is_known_key, set_param
from .model import (ConfigError, Counters, SystemConfig, db_to_transmittance, ideal_split,
                    single_detector_variant, validate_config, with_heralding_deadtime, with_receiver_deadtime,
                    without_afterpulsing)
from .rng import derived_seed


class Scenario(str, Enum):
    CAR_VS_FLUX = "car-vs-flux"
    G2_VS_HERALD_RATE = "g2-vs-herald-rate"
    RECEIVER_COUNTS_VS_G2 = "receiver-counts-vs-g2"
    QBER_VS_G2 = "qber-vs-g2"
    PSNR_VS_NOISE = "psnr-vs-noise"
    HERALD_RATE_VS_DEADTIME = "herald-rate-vs-deadtime"
    RECEIVER_RATE_VS_DEADTIME = "receiver-rate-vs-deadtime"
    QBER_VS_DEADTIME = "qber-vs-deadtime"
    VALIDATION_MATRIX = "validate"


# Noise probabilities per gate.  At the default profile they take the
# heralded g2 from about 0.2 (no noise) to about 0.99.
DEFAULT_NOISE_LEVELS = (0.0, 0.01, 0.03, 0.1, 0.15, 0.25, 0.4, 0.6, 0.9, 0.99)
DEFAULT_MU_VALUES = (0.02, 0.05, 0.08, 0.12, 0.16, 0.2, 0.3)
DEFAULT_DEADTIMES = (0.0, 1e-6, 2e-6, 5e-6, 10e-6)
CAR_MU_VALUES = (1e-4, 3e-4, 1e-3, 3e-3, 0.01, 0.03, 0.1, 0.3, 1.0)

_DEFAULT_AXES: dict[Scenario, tuple[str, tuple[float, ...]]] = {
    Scenario.CAR_VS_FLUX: ("source.mu", CAR_MU_VALUES),
    Scenario.G2_VS_HERALD_RATE: ("source.mu", DEFAULT_MU_VALUES),
    Scenario.RECEIVER_COUNTS_VS_G2: ("source.mu", DEFAULT_MU_VALUES),
    Scenario.QBER_VS_G2: ("receiver.noise_prob_per_gate", DEFAULT_NOISE_LEVELS),
    Scenario.PSNR_VS_NOISE: ("receiver.noise_prob_per_gate", DEFAULT_NOISE_LEVELS),
    Scenario.HERALD_RATE_VS_DEADTIME: ("heralding.deadtime_s", DEFAULT_DEADTIMES),
    Scenario.RECEIVER_RATE_VS_DEADTIME: ("heralding.deadtime_s", DEFAULT_DEADTIMES),
    Scenario.QBER_VS_DEADTIME: ("heralding.deadtime_s", (1e-6, 5e-6, 10e-6)),
    Scenario.VALIDATION_MATRIX: ("source.mu", (0.01, 0.05, 0.12, 0.3)),
}


@dataclass(frozen=True)
class SweepSpec:
    """One scenario swept along one dotted parameter.

    ``inner`` optionally adds a second, nested parameter (used by the
    QBER-vs-deadtime scenario, which needs a noise sweep per deadtime).
    """

    scenario: Scenario
    base: SystemConfig
    axis: str
    values: tuple[float, ...]
    replicates: int = 3
    inner: tuple[str, tuple[float, ...]] | None = None

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        if not is_known_key(self.axis, self.base):
            raise ConfigError(f"unknown sweep axis {self.axis!r}")
        if not self.values:
            raise ConfigError("sweep values must be non-empty")
        if list(self.values) != sorted(self.values):
            raise ConfigError("sweep values must be sorted")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if self.inner is not None and not is_known_key(self.inner[0], self.base):
            raise ConfigError(f"unknown inner axis {self.inner[0]!r}")


def default_spec(scenario: Scenario | str, base: SystemConfig, *, replicates: int = 3) -> SweepSpec:
    scenario = Scenario(scenario)
    axis, values = _DEFAULT_AXES[scenario]
    inner = ("receiver.noise_prob_per_gate", DEFAULT_NOISE_LEVELS) if scenario == Scenario.QBER_VS_DEADTIME else None
    return SweepSpec(scenario, base, axis, values, replicates, inner)


@dataclass(frozen=True)
class SweepRow:
    scenario: str
    axis: str
    axis_value: float
    replicate: int
    seed: int
    digest: str
    coords: dict[str, float] = field(default_factory=dict)
    metrics: dict[str, est.MetricEstimate | None] = field(default_factory=dict)
    analytic: dict[str, float] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)

    def value(self, name: str) -> float:
        m = self.metrics.get(name)
        return math.nan if m is None else m.value

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario, "axis": self.axis, "axis_value": self.axis_value,
            "replicate": self.replicate, "seed": self.seed, "digest": self.digest,
            "coords": dict(self.coords),
            "metrics": {k: None if v is None else {"value": v.value, "std_error": v.std_error,
                                                   "n_samples": v.n_samples}
                        for k, v in self.metrics.items()},
            "analytic": dict(self.analytic), "errors": dict(self.errors),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SweepRow":
        metrics = {k: None if v is None else est.MetricEstimate(v["value"], v["std_error"], v["n_samples"])
                   for k, v in d["metrics"].items()}
        return cls(d["scenario"], d["axis"], d["axis_value"], d["replicate"], d["seed"], d["digest"],
                   dict(d["coords"]), metrics, dict(d["analytic"]), dict(d["errors"]))


# ---------------------------------------------------------------- analytics

def _herald_inputs(cfg: SystemConfig):
    cfg = validate_config(cfg)
    her = cfg.heralding
    return (cfg, list(her.collection_efficiencies), [d.dark_prob for d in her.detectors],
            [d.deadtime_s for d in her.detectors])


def analytic_herald_rate(cfg: SystemConfig, *, deadtime_s: float | None = None) -> float:
    """Sum of per-arm deadtime-limited rates; equals the m-arm formula for identical arms."""
    cfg, betas, darks, deads = _herald_inputs(cfg)
    if deadtime_s is not None:
        deads = [deadtime_s] * len(betas)
    return sum(analytic.arm_rates(cfg.source.mu, betas, darks, cfg.source.clock_rate_hz, deads))


def heralded_clicks(cfg: SystemConfig) -> analytic.HeraldedClickProbs:
    """Zero-deadtime herald and receiver statistics of ``cfg`` (Poisson pairs)."""
    cfg, betas, darks, _ = _herald_inputs(cfg)
    rx = cfg.receiver
    return analytic.heralded_click_probs(
        cfg.source.mu, betas, darks, rx.photon_click_probs,
        noise_mean=analytic.noise_mean_from_prob(rx.noise_prob_per_gate), noise_click=rx.noise_click_probs,
        receiver_darks=(rx.detector3.dark_prob, rx.detector4.dark_prob))


def analytic_receiver_rate(cfg: SystemConfig) -> float:
    """Heralded receiver detection rate from the two-detector pipeline (m <= 2).

    The receiver is treated as one detector with deadtime equal to the
    larger receiver deadtime; its per-herald detection probability is the
    exact zero-deadtime value.
    """
    cfg, betas, darks, deads = _herald_inputs(cfg)
    if cfg.heralding.m > 2:
        raise ValueError("pipeline covers at most two heralding arms")
    alpha = heralded_clicks(replace(cfg, receiver=replace(cfg.receiver, noise_prob_per_gate=0.0))).clicks_per_herald
    b2 = betas[1] if len(betas) == 2 else 0.0
    d2 = darks[1] if len(darks) == 2 else 0.0
    rx = cfg.receiver
    rep = analytic.appendix_a_pipeline(cfg.source.mu, betas[0], b2, cfg.source.clock_rate_hz, max(deads),
                                       max(rx.detector3.deadtime_s, rx.detector4.deadtime_s), alpha,
                                       (darks[0], d2))
    return rep.N_detected


def analytic_qber(cfg: SystemConfig) -> float:
    """QBER from the zero-deadtime PSNR of ``cfg`` against its noise-free twin."""
    on = heralded_clicks(cfg).clicks_per_herald
    off = heralded_clicks(replace(cfg, receiver=replace(cfg.receiver, noise_prob_per_gate=0.0))).clicks_per_herald
    return analytic.qber_from_psnr(off / (on - off)) if on > off else math.nan


def operating_mu(cfg: SystemConfig, g2_target: float = 0.2, *, lo: float = 1e-4, hi: float = 2.0) -> float:
    """Pair number at which the zero-deadtime heralded g2 of ``cfg`` equals ``g2_target``."""
    def f(mu):
        return heralded_clicks(set_param(cfg, "source.mu", mu)).g2 - g2_target
    return brentq(f, lo, hi, xtol=1e-10)


# ---------------------------------------------------------------- per-point evaluators

def _safe(errors: dict[str, str], name: str, fn: Callable[[], est.MetricEstimate]) -> est.MetricEstimate | None:
    try:
        return fn()
    except (ValueError, ZeroDivisionError) as exc:
        errors[name] = str(exc)
        return None


def _paired(cfg: SystemConfig) -> dict[str, SystemConfig]:
    return {"m2": cfg, "m1": single_detector_variant(cfg)}


def _eval_car(cfg: SystemConfig, errors: dict[str, str]):
    F = cfg.source.clock_rate_hz
    c = engine.simulate(cfg)
    rx = cfg.receiver
    metrics = {
        "car": _safe(errors, "car", lambda: est.car_estimate(c)),
        "signal_rate": est.slot_rate(c.det3_all + c.det4_all, c.slots, F),
        "idler_rate": est.slot_rate(sum(c.det_arm), c.slots, F),
    }
    beta_s = rx.photon_click_probs[0]
    beta_i = cfg.heralding.collection_efficiencies[0]
    car, (s, i) = analytic.analytic_car(cfg.source.mu, beta_s, beta_i, rx.detector3.dark_prob,
                                        cfg.heralding.detectors[0].dark_prob, rx.detector3.deadtime_s, F)
    return metrics, {"car": car, "signal_rate": s, "idler_rate": i}


def _eval_psm(cfg: SystemConfig, errors: dict[str, str]):
    F = cfg.source.clock_rate_hz
    metrics, ana = {}, {}
    for tag, c_cfg in _paired(cfg).items():
        c = engine.simulate(c_cfg)
        metrics[f"herald_rate_{tag}"] = est.herald_rate(c, F)
        metrics[f"receiver_rate_{tag}"] = est.receiver_rate(c, F)
        metrics[f"g2_{tag}"] = _safe(errors, f"g2_{tag}", lambda: est.g2_estimate(c))
        ana[f"herald_rate_{tag}"] = analytic_herald_rate(c_cfg)
        ana[f"herald_rate_nodeadtime_{tag}"] = analytic_herald_rate(c_cfg, deadtime_s=0.0)
        ana[f"receiver_rate_{tag}"] = analytic_receiver_rate(c_cfg)
        ana[f"g2_{tag}"] = heralded_clicks(c_cfg).g2
    for q in ("herald_rate", "receiver_rate"):
        a, b = metrics[f"{q}_m1"], metrics[f"{q}_m2"]
        if a.value > 0:
            g = b.value / a.value - 1.0
            rel = math.sqrt((a.std_error / a.value) ** 2 + (b.std_error / max(b.value, 1e-300)) ** 2)
            metrics[f"{q}_gain"] = est.MetricEstimate(g, (1.0 + g) * rel, a.n_samples)
        else:
            errors[f"{q}_gain"] = "zero m = 1 rate"
            metrics[f"{q}_gain"] = None
        ana[f"{q}_gain"] = ana[f"{q}_m2"] / ana[f"{q}_m1"] - 1.0 if ana[f"{q}_m1"] > 0 else math.nan
    for tag in ("m1", "m2"):
        ref = ana[f"herald_rate_nodeadtime_{tag}"]
        h = metrics[f"herald_rate_{tag}"]
        if ref > 0:
            metrics[f"herald_fraction_{tag}"] = est.MetricEstimate(h.value / ref, h.std_error / ref, h.n_samples)
    return metrics, ana


def _noise_metrics(on: Counters, off: Counters, F: float, errors: dict[str, str]):
    metrics: dict[str, est.MetricEstimate | None] = {
        "g2": _safe(errors, "g2", lambda: est.g2_estimate(on)),
        "herald_rate": est.herald_rate(on, F),
        "signal_rate_S": est.slot_rate(off.receiver_total, off.slots, F),
        "total_rate_S_plus_N": est.slot_rate(on.receiver_total, on.slots, F),
        "noise_rate": est.slot_rate(on.noise_total, on.slots, F),
    }
    pq = None
    try:
        pq = est.psnr_qber_estimate(on, off)
    except ValueError as exc:
        errors["psnr"] = errors["qber"] = str(exc)
    metrics["psnr"] = pq[0] if pq else None
    metrics["qber"] = pq[1] if pq else None
    n = on.noise_total
    metrics["ap_noise_fraction"] = (est.MetricEstimate(on.ap_noise_det / n, math.sqrt(on.ap_noise_det) / n, n)
                                    if n > 0 else None)
    if n == 0:
        errors["ap_noise_fraction"] = "no noise detections"
    metrics["ap_herald_fraction"] = (est.MetricEstimate(on.heralds_afterpulse / on.heralds,
                                                        math.sqrt(on.heralds_afterpulse) / on.heralds, on.heralds)
                                     if on.heralds > 0 else None)
    return metrics


def _noise_analytic(cfg: SystemConfig) -> dict[str, float]:
    return {"g2": heralded_clicks(cfg).g2, "qber": analytic_qber(cfg)}


# ---------------------------------------------------------------- sweeps

def _point_configs(spec: SweepSpec, seed: int) -> list[tuple[float, dict[str, float], SystemConfig]]:
    base = replace(spec.base, seed=seed)
    out = []
    for v in spec.values:
        cfg = set_param(base, spec.axis, v)
        if spec.inner is None:
            out.append((v, {}, validate_config(cfg)))
        else:
            name, inner_values = spec.inner
            for w in inner_values:
                out.append((v, {name: w}, validate_config(set_param(cfg, name, w))))
    return out


def _prepare_base(spec: SweepSpec) -> SweepSpec:
    if spec.scenario == Scenario.CAR_VS_FLUX:
        return replace(spec, base=car_setup(spec.base))
    return spec


def _run_point(args) -> list[SweepRow]:
    spec, r, seed, v, coords, cfg, off = args
    errors: dict[str, str] = {}
    sc = spec.scenario
    F = cfg.source.clock_rate_hz
    if sc == Scenario.CAR_VS_FLUX:
        metrics, ana = _eval_car(cfg, errors)
    elif sc in (Scenario.G2_VS_HERALD_RATE, Scenario.RECEIVER_COUNTS_VS_G2, Scenario.HERALD_RATE_VS_DEADTIME,
                Scenario.RECEIVER_RATE_VS_DEADTIME):
        metrics, ana = _eval_psm(cfg, errors)
    elif sc in (Scenario.QBER_VS_G2, Scenario.PSNR_VS_NOISE, Scenario.QBER_VS_DEADTIME):
        on = engine.simulate(cfg)
        if off is None:
            off = engine.simulate(set_param(cfg, "receiver.noise_prob_per_gate", 0.0))
        metrics = _noise_metrics(on, off, F, errors)
        ana = _noise_analytic(cfg)
    else:
        raise ConfigError(f"scenario {sc.value!r} is not a sweep; use run_validation_matrix")
    return [SweepRow(sc.value, spec.axis, float(v), r, seed, config_digest(cfg), coords, metrics, ana, errors)]


def run_sweep(spec: SweepSpec, *, workers: int = 1) -> list[SweepRow]:
    """One row per axis value (and inner value) per replicate.

    Estimator failures become entries of ``row.errors`` and a None metric;
    they never abort the sweep.  ``workers > 1`` runs points in separate
    processes; each point's simulation stays sequential.
    """
    if spec.scenario == Scenario.VALIDATION_MATRIX:
        return validation_rows(run_validation_matrix(spec.base, mus=spec.values), spec.base)
    spec = _prepare_base(spec)
    jobs = []
    noise_scenario = spec.scenario in (Scenario.QBER_VS_G2, Scenario.PSNR_VS_NOISE, Scenario.QBER_VS_DEADTIME)
    for r in range(spec.replicates):
        seed = derived_seed(spec.base.seed, r)
        off_cache: dict[str, Counters] = {}
        for v, coords, cfg in _point_configs(spec, seed):
            off = None
            if noise_scenario and workers <= 1:
                # the noise-off twin depends on everything but the noise level
                off_cfg = set_param(cfg, "receiver.noise_prob_per_gate", 0.0)
                key = config_digest(off_cfg)
                if key not in off_cache:
                    off_cache[key] = engine.simulate(off_cfg)
                off = off_cache[key]
            jobs.append((spec, r, seed, v, coords, cfg, off))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_point, jobs))
    else:
        results = [_run_point(j) for j in jobs]
    return [row for rows in results for row in rows]


def car_setup(base: SystemConfig) -> SystemConfig:
    """Source-characterisation layout: one idler detector, one signal detector.

    Both arms get the heralding arm's total collection efficiency, the idler
    detector keeps heralding detector 1's dark probability and the signal
    detector keeps receiver detector 3's.  The signal detector is gated on
    every slot (no heralding) and detector 4 is disconnected.
    """
    base = validate_config(base)
    single = single_detector_variant(base)
    beta = single.heralding.collection_efficiencies[0]
    her_det = single.heralding.detectors[0]
    rx = base.receiver
    sig_det = replace(rx.detector3, efficiency=her_det.efficiency, deadtime_slots=None)
    off_det = replace(rx.detector4, efficiency=0.0, dark_prob=0.0, deadtime_slots=None)
    receiver = replace(rx, channel_transmittance=beta / her_det.efficiency if her_det.efficiency > 0 else 0.0,
                       hbt_split=1.0, detector3=sig_det, detector4=off_det, triggered=False,
                       noise_prob_per_gate=0.0)
    return validate_config(replace(single, receiver=receiver))


# ---------------------------------------------------------------- validation matrix

@dataclass(frozen=True)
class Deviation:
    mc: float
    analytic: float
    rel_dev: float
    rel_sigma: float
    tolerance: float
    within: bool


@dataclass(frozen=True)
class ValidationCell:
    mu: float
    deadtime_s: float
    m: int
    slots: int
    seed: int
    digest: str
    deviations: dict[str, Deviation]

    @property
    def within(self) -> bool:
        return all(d.within for d in self.deviations.values())


@dataclass(frozen=True)
class ValidationReport:
    cells: list[ValidationCell]

    def max_deviation(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for c in self.cells:
            for k, d in c.deviations.items():
                key = "arm" if k.startswith("arm") else k
                out[key] = max(out.get(key, 0.0), abs(d.rel_dev))
        return out

    @property
    def flagged(self) -> list[ValidationCell]:
        return [c for c in self.cells if not c.within]

    @property
    def all_within(self) -> bool:
        return not self.flagged


RATE_TOLERANCE = 0.01
RECEIVER_TOLERANCE = 0.05


def validation_base(base: SystemConfig) -> SystemConfig:
    """The regime the closed forms describe.

    Lossless even split, no afterpulsing, no XOR deadtime, and a single
    receiver detector (all heralded light on detector 3, detector 4 dark-free).
    """
    cfg = without_afterpulsing(ideal_split(validate_config(base)))
    rx = cfg.receiver
    cfg = replace(cfg, heralding=replace(cfg.heralding, xor_deadtime_s=0.0, xor_deadtime_slots=None),
                  receiver=replace(rx, hbt_split=1.0, noise_prob_per_gate=0.0, triggered=True,
                                   detector4=replace(rx.detector4, dark_prob=0.0, deadtime_slots=None)))
    return validate_config(cfg)


def _cell_slots(cfg: SystemConfig, min_slots: int, max_slots: int) -> int:
    """Enough slots that every checked rate has a relative error <= tolerance / 4."""
    F = cfg.source.clock_rate_hz
    p_arm = min(analytic.arm_rates(cfg.source.mu, cfg.heralding.collection_efficiencies,
                                   [d.dark_prob for d in cfg.heralding.detectors], F,
                                   [d.deadtime_s for d in cfg.heralding.detectors])) / F
    p_rx = analytic_receiver_rate(cfg) / F
    need = max(min_slots,
               16.0 / (RATE_TOLERANCE ** 2 * p_arm) if p_arm > 0 else 0,
               16.0 / (RECEIVER_TOLERANCE ** 2 * p_rx) if p_rx > 0 else 0)
    n = int(min(need, max_slots))
    return -(-n // engine.CHUNK_SLOTS) * engine.CHUNK_SLOTS


def _dev(mc: float, mc_count: int, ana: float, tol: float, stat_floor: bool = False) -> Deviation:
    rel = mc / ana - 1.0 if ana > 0 else (0.0 if mc == 0 else math.inf)
    sigma = 1.0 / math.sqrt(mc_count) if mc_count > 0 else (1.0 / math.sqrt(ana) if ana > 0 else 0.0)
    bound = max(tol, 3.0 * sigma) if stat_floor else tol
    return Deviation(mc, ana, rel, sigma, bound, abs(rel) <= bound)


def run_validation_matrix(base: SystemConfig, *, mus=(0.01, 0.05, 0.12, 0.3), deadtimes=(0.0, 1e-6, 5e-6, 10e-6),
                          ms=(1, 2), min_slots: int = 100_000_000, max_slots: int = 2_000_000_000) -> ValidationReport:
    """Monte Carlo against the closed forms on a mu x deadtime x m lattice.

    The deadtime is applied to every detector.  Checked per cell: herald
    rate against the m-arm formula (1 %), each arm against its
    deadtime-limited trigger rate (1 %), the two-arm coincidence rate
    against the product formula (1 % or 3 sigma, whichever is larger,
    because coincidences are rare) and the receiver rate against the
    two-detector pipeline (5 %).
    """
    for mu in mus:
        if not 0.001 <= mu <= 0.5:
            raise ConfigError(f"validation mu must lie in [0.001, 0.5], got {mu}")
    vbase = validation_base(base)
    cells = []
    for m in ms:
        mbase = single_detector_variant(vbase) if m == 1 else set_param(vbase, "heralding.m", m)
        for mu in mus:
            for tau in deadtimes:
                cfg = with_receiver_deadtime(with_heralding_deadtime(set_param(mbase, "source.mu", mu), tau), tau)
                cfg = validate_config(cfg)
                cfg = replace(cfg, n_slots=_cell_slots(cfg, min_slots, max_slots))
                c = engine.simulate(cfg)
                F = cfg.source.clock_rate_hz
                T = c.slots / F
                betas = cfg.heralding.collection_efficiencies
                darks = [d.dark_prob for d in cfg.heralding.detectors]
                devs = {"herald": _dev(c.heralds / T, c.heralds,
                                       analytic.psm_heralding_rate(mu, sum(betas), darks[0], F, m, tau),
                                       RATE_TOLERANCE)}
                arm_ref = analytic.arm_rates(mu, betas, darks, F, [tau] * m)
                for i in range(m):
                    devs[f"arm{i + 1}"] = _dev(c.det_arm[i] / T, c.det_arm[i], arm_ref[i], RATE_TOLERANCE)
                if m == 2:
                    xor_ref = arm_ref[0] * arm_ref[1] / F
                    devs["coincidences"] = _dev(c.coincidences_12 / T, c.coincidences_12, xor_ref, RATE_TOLERANCE,
                                                stat_floor=True)
                rx = c.det3 + c.det4
                devs["receiver"] = _dev(rx / T, rx, analytic_receiver_rate(cfg), RECEIVER_TOLERANCE)
                cells.append(ValidationCell(mu, tau, m, c.slots, cfg.seed, config_digest(cfg), devs))
    return ValidationReport(cells)


def validation_rows(report: ValidationReport, base: SystemConfig) -> list[SweepRow]:
    rows = []
    for cell in report.cells:
        metrics = {}
        ana = {}
        errors = {}
        T = cell.slots
        for k, d in cell.deviations.items():
            metrics[f"{k}_rate"] = est.MetricEstimate(d.mc, d.mc * d.rel_sigma, T)
            ana[f"{k}_rate"] = d.analytic
            metrics[f"{k}_rel_dev"] = est.MetricEstimate(d.rel_dev, d.rel_sigma, T)
            ana[f"{k}_tolerance"] = d.tolerance
            if not d.within:
                errors[k] = f"deviation {d.rel_dev:+.4f} exceeds tolerance {d.tolerance:.4f}"
        rows.append(SweepRow(Scenario.VALIDATION_MATRIX.value, "source.mu", cell.mu, 0, cell.seed, cell.digest,
                             {"heralding.deadtime_s": cell.deadtime_s, "heralding.m": float(cell.m)},
                             metrics, ana, errors))
    return rows


# ---------------------------------------------------------------- paired comparisons

def attenuate(cfg: SystemConfig, attenuation_db: float) -> SystemConfig:
    if attenuation_db < 0:
        raise ConfigError(f"attenuation must be >= 0 dB, got {attenuation_db}")
    rx = cfg.receiver
    return replace(cfg, receiver=replace(rx, channel_transmittance=rx.channel_transmittance
                                         * db_to_transmittance(attenuation_db)))


def run_attenuation_comparison(base: SystemConfig, attenuation_db: float = 3.36, *,
                               scenarios=(Scenario.QBER_VS_G2, Scenario.HERALD_RATE_VS_DEADTIME,
                                          Scenario.RECEIVER_RATE_VS_DEADTIME),
                               replicates: int = 1) -> dict[str, list[tuple[SweepRow, SweepRow]]]:
    """Rerun scenarios with the heralded photons attenuated; rows are paired by position."""
    att = attenuate(base, attenuation_db)
    out = {}
    for sc in scenarios:
        a = run_sweep(default_spec(sc, base, replicates=replicates))
        b = run_sweep(default_spec(sc, att, replicates=replicates))
        out[Scenario(sc).value] = list(zip(a, b))
    return out


@dataclass(frozen=True)
class GainResult:
    mu_m1: float
    mu_m2: float
    m1: Counters
    m2: Counters
    herald_gain: est.MetricEstimate
    receiver_gain: est.MetricEstimate


def _ratio_gain(a: int, b: int) -> est.MetricEstimate:
    g = b / a - 1.0
    return est.MetricEstimate(g, (1.0 + g) * math.sqrt(1.0 / a + 1.0 / b), a)


def psm_gain_at_g2(cfg: SystemConfig, g2_target: float = 0.2) -> GainResult:
    """Two-detector gains over the single-detector reference at equal heralded g2.

    Each setup runs at the pair number that puts its own zero-deadtime
    g2 at ``g2_target``.  Both runs use the same seed and slot count.
    """
    cfg = validate_config(cfg)
    one = single_detector_variant(cfg)
    mu2 = operating_mu(cfg, g2_target)
    mu1 = operating_mu(one, g2_target)
    c2 = engine.simulate(set_param(cfg, "source.mu", mu2))
    c1 = engine.simulate(set_param(one, "source.mu", mu1))
    return GainResult(mu1, mu2, c1, c2, _ratio_gain(c1.heralds, c2.heralds),
                      _ratio_gain(c1.det3 + c1.det4, c2.det3 + c2.det4))


# ---------------------------------------------------------------- single run

def _analytic_or_error(errors: dict[str, str], ana: dict[str, float], name: str, fn: Callable[[], float]) -> None:
    try:
        ana[name] = float(fn())
    except (ValueError, ZeroDivisionError) as exc:
        errors[f"{name}_analytic"] = str(exc)


def simulate_row(cfg: SystemConfig, *, workers: int = 1) -> tuple[SweepRow, Counters]:
    """Simulate ``cfg`` once; metrics with errors next to their closed forms."""
    cfg = validate_config(cfg)
    c = engine.simulate(cfg, workers=workers)
    F = cfg.source.clock_rate_hz
    her = cfg.heralding
    errors: dict[str, str] = {}
    metrics: dict[str, est.MetricEstimate | None] = {"herald_rate": est.herald_rate(c, F)}
    for i, n in enumerate(c.det_arm):
        metrics[f"arm{i + 1}_rate"] = est.slot_rate(n, c.slots, F)
    if her.m > 1:
        metrics["coincidence_rate"] = est.slot_rate(c.coincidences_12, c.slots, F)
    metrics["receiver_rate"] = est.receiver_rate(c, F)
    metrics["noise_rate"] = est.slot_rate(c.noise_total, c.slots, F)
    metrics["g2"] = _safe(errors, "g2", lambda: est.g2_estimate(c))
    if not cfg.receiver.triggered:
        metrics["car"] = _safe(errors, "car", lambda: est.car_estimate(c))
    metrics["ap_herald_fraction"] = (est.MetricEstimate(c.heralds_afterpulse / c.heralds,
                                                        math.sqrt(c.heralds_afterpulse) / c.heralds, c.heralds)
                                     if c.heralds > 0 else est.MetricEstimate(0.0, 0.0, 0))

    ana: dict[str, float] = {}
    betas = her.collection_efficiencies
    darks = [d.dark_prob for d in her.detectors]
    arms = analytic.arm_rates(cfg.source.mu, betas, darks, F, [d.deadtime_s for d in her.detectors])
    ana["herald_rate"] = sum(arms)
    for i, r in enumerate(arms):
        ana[f"arm{i + 1}_rate"] = r
    if her.m == 2:
        ana["coincidence_rate"] = arms[0] * arms[1] / F
    _analytic_or_error(errors, ana, "receiver_rate", lambda: analytic_receiver_rate(cfg))
    _analytic_or_error(errors, ana, "g2", lambda: heralded_clicks(cfg).g2)
    if cfg.receiver.noise_prob_per_gate > 0:
        _analytic_or_error(errors, ana, "qber", lambda: analytic_qber(cfg))
    row = SweepRow("simulate", "source.mu", cfg.source.mu, 0, cfg.seed, config_digest(cfg),
                   {}, metrics, ana, errors)
    return row, c
