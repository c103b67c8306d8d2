import math

import pytest

from heraldsim import engine, model
from heraldsim import experiments as ex
from heraldsim.config import set_param
from heraldsim.model import ConfigError

CHUNK = engine.CHUNK_SLOTS


@pytest.fixture
def small():
    return model.paper_default(n_slots=CHUNK)


def test_spec_validation(small):
    with pytest.raises(ConfigError, match="unknown sweep axis"):
        ex.SweepSpec(ex.Scenario.QBER_VS_G2, small, "receiver.nothing", (0.1,))
    with pytest.raises(ConfigError, match="sorted"):
        ex.SweepSpec(ex.Scenario.QBER_VS_G2, small, "receiver.noise_prob_per_gate", (0.2, 0.1))
    with pytest.raises(ConfigError, match="non-empty"):
        ex.SweepSpec(ex.Scenario.QBER_VS_G2, small, "receiver.noise_prob_per_gate", ())
    with pytest.raises(ConfigError, match="replicates"):
        ex.SweepSpec(ex.Scenario.QBER_VS_G2, small, "receiver.noise_prob_per_gate", (0.1,), replicates=0)
    with pytest.raises(ValueError):
        ex.default_spec("no-such-scenario", small)


def test_rows_per_value_and_replicate_are_reproducible(small):
    spec = ex.SweepSpec(ex.Scenario.QBER_VS_G2, small, "receiver.noise_prob_per_gate", (0.0, 0.2), replicates=2)
    rows = ex.run_sweep(spec)
    assert [(r.axis_value, r.replicate) for r in rows] == [(0.0, 0), (0.2, 0), (0.0, 1), (0.2, 1)]
    assert rows[0].seed != rows[2].seed
    assert ex.run_sweep(spec) == rows
    # zero noise has no PSNR: recorded as a row error, the sweep goes on
    assert "psnr" in rows[0].errors and rows[0].metrics["psnr"] is None
    assert rows[1].metrics["qber"] is not None and "qber" in rows[1].analytic


def test_car_sweep_marks_missing_accidentals(small):
    spec = ex.SweepSpec(ex.Scenario.CAR_VS_FLUX, small, "source.mu", (1e-4, 0.3), replicates=1)
    low, high = ex.run_sweep(spec)
    assert "car" in low.errors
    assert high.metrics["car"].value > 1


def test_psm_rows_are_paired(small):
    row = ex.run_sweep(ex.SweepSpec(ex.Scenario.G2_VS_HERALD_RATE, small, "source.mu", (0.12,), replicates=1))[0]
    for name in ("herald_rate_m1", "herald_rate_m2", "g2_m1", "g2_m2", "receiver_rate_m1", "receiver_rate_m2",
                 "herald_rate_gain", "receiver_rate_gain"):
        assert name in row.metrics and name in row.analytic


def test_deadtime_sweep_shape():
    # the theory curves have no afterpulsing; at zero deadtime it would dominate
    base = model.without_afterpulsing(model.paper_ideal_split(n_slots=2 * CHUNK))
    rows = ex.run_sweep(ex.SweepSpec(ex.Scenario.HERALD_RATE_VS_DEADTIME, base, "heralding.deadtime_s",
                                     ex.DEFAULT_DEADTIMES, replicates=1))
    for tag in ("m1", "m2"):
        vals = [r.metrics[f"herald_rate_{tag}"] for r in rows]
        for a, b in zip(vals, vals[1:]):
            assert b.value <= a.value + 3 * math.hypot(a.std_error, b.std_error)
    for r in rows:
        m1, m2 = r.metrics["herald_rate_m1"], r.metrics["herald_rate_m2"]
        assert r.analytic["herald_rate_m2"] >= r.analytic["herald_rate_m1"]
        if r.axis_value > 0:
            assert m2.value >= m1.value - 3 * math.hypot(m1.std_error, m2.std_error)
        else:
            # without deadtime either arm can refire inside the 6-slot XOR window, costing ~4 %
            assert m2.value == pytest.approx(m1.value, rel=0.06)


def test_qber_rises_with_g2():
    base = model.paper_default(n_slots=4 * CHUNK)
    rows = ex.run_sweep(ex.SweepSpec(ex.Scenario.QBER_VS_G2, base, "receiver.noise_prob_per_gate",
                                     (0.03, 0.15, 0.4, 0.9), replicates=1))
    for a, b in zip(rows, rows[1:]):
        assert b.value("g2") > a.value("g2") - 3 * a.metrics["g2"].std_error
        qa, qb = a.metrics["qber"], b.metrics["qber"]
        assert qb.value >= qa.value - 3 * math.hypot(qa.std_error, qb.std_error)


def test_attenuation_zero_db_is_identity(small):
    out = ex.run_attenuation_comparison(small, 0.0, scenarios=(ex.Scenario.HERALD_RATE_VS_DEADTIME,))
    for a, b in out["herald-rate-vs-deadtime"]:
        assert a == b
    with pytest.raises(ConfigError):
        ex.attenuate(small, -1.0)


def test_attenuation_scales_signal_and_degrades_qber():
    base = model.paper_default(n_slots=4 * CHUNK)
    att = ex.attenuate(base, 3.36)
    assert att.receiver.channel_transmittance / base.receiver.channel_transmittance == pytest.approx(0.4613, abs=1e-4)
    a = engine.simulate(base)
    b = engine.simulate(att)
    ratio = b.receiver_total / a.receiver_total
    assert abs(ratio - 10 ** -0.336) <= 3 * ratio * math.sqrt(1 / a.receiver_total + 1 / b.receiver_total)
    spec = lambda cfg: ex.SweepSpec(ex.Scenario.QBER_VS_G2, cfg, "receiver.noise_prob_per_gate", (0.1, 0.4, 0.9),
                                    replicates=1)
    for r0, r1 in zip(ex.run_sweep(spec(base)), ex.run_sweep(spec(att))):
        assert r1.value("qber") > r0.value("qber")
        assert r1.value("g2") > r0.value("g2")


def test_validation_cell_within_tolerance():
    rep = ex.run_validation_matrix(model.paper_default(), mus=(0.12,), deadtimes=(0.0, 10e-6), ms=(2,))
    assert rep.all_within, [(c.mu, c.deadtime_s, c.deviations) for c in rep.flagged]
    assert rep.max_deviation()["herald"] <= 0.01
    rows = ex.validation_rows(rep, model.paper_default())
    assert len(rows) == 2 and "receiver_rate" in rows[0].analytic


def test_validation_rejects_out_of_range_mu():
    with pytest.raises(ConfigError):
        ex.run_validation_matrix(model.paper_default(), mus=(0.9,))


def test_receiver_pipeline_against_monte_carlo():
    cfg = ex.validation_base(model.paper_default(n_slots=100_000_000))
    c = engine.simulate(cfg)
    mc = (c.det3 + c.det4) / (c.slots / cfg.source.clock_rate_hz)
    assert mc == pytest.approx(ex.analytic_receiver_rate(cfg), rel=0.05)


def test_operating_mu_hits_target(small):
    mu = ex.operating_mu(small, 0.2)
    assert ex.heralded_clicks(set_param(small, "source.mu", mu)).g2 == pytest.approx(0.2, abs=1e-8)


def test_simulate_row_zero_flux():
    cfg = model.paper_default(n_slots=CHUNK)
    for key in ("source.mu", "heralding.dark_prob", "heralding.afterpulse_amplitude", "receiver.dark_prob"):
        cfg = set_param(cfg, key, 0.0)
    row, c = ex.simulate_row(cfg)
    for name, m in row.metrics.items():
        if m is not None:
            assert (m.value, m.std_error) == (0.0, 0.0), name
    assert "g2" in row.errors
