from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from heraldsim import model
from heraldsim.model import ConfigError, DetectorParams, SystemConfig, validate_config


def test_default_profile_is_accepted(paper):
    assert paper.source.mu == 0.12
    assert paper.source.clock_rate_hz == 48.7e6
    assert paper.heralding.m == 2
    assert paper.heralding.xor_deadtime_s == 120e-9
    assert all(d.deadtime_s == 10e-6 for d in paper.detectors)


def test_negative_mu_rejected():
    cfg = replace(model.paper_default(), source=model.SourceParams(mu=-0.1))
    with pytest.raises(ConfigError, match="mu must be >= 0"):
        validate_config(cfg)


def test_splitter_cannot_create_photons():
    cfg = model.paper_default()
    cfg = replace(cfg, heralding=replace(cfg.heralding, arm_transmittance=(0.6, 0.6)))
    with pytest.raises(ConfigError, match="splitter transmittance sums to 1.2 > 1"):
        validate_config(cfg)


@pytest.mark.parametrize("field,value,name", [
    ("efficiency", 1.2, "efficiency"),
    ("dark_prob", 1.0, "dark_prob"),
    ("afterpulse_amplitude", -0.1, "afterpulse_amplitude"),
    ("deadtime_s", -1e-6, "deadtime_s"),
    ("afterpulse_tau_s", 0.0, "afterpulse_tau_s"),
])
def test_detector_errors_name_the_field(field, value, name):
    cfg = model.paper_default()
    dets = (replace(cfg.heralding.detectors[0], **{field: value}), cfg.heralding.detectors[1])
    with pytest.raises(ConfigError, match=name):
        validate_config(replace(cfg, heralding=replace(cfg.heralding, detectors=dets)))


def test_length_mismatch():
    cfg = model.paper_default()
    with pytest.raises(ConfigError, match="arm_transmittance"):
        validate_config(replace(cfg, heralding=replace(cfg.heralding, arm_transmittance=(0.1,))))


def test_receiver_afterpulsing_rejected():
    cfg = model.paper_default()
    rx = replace(cfg.receiver, detector3=DetectorParams(afterpulse_amplitude=0.01))
    with pytest.raises(ConfigError, match="receiver.detector3.afterpulse_amplitude"):
        validate_config(replace(cfg, receiver=rx))


def test_n_slots_and_seed():
    with pytest.raises(ConfigError, match="n_slots"):
        validate_config(replace(model.paper_default(), n_slots=0))
    with pytest.raises(ConfigError, match="seed"):
        validate_config(replace(model.paper_default(), seed=-1))


@pytest.mark.parametrize("tau,slots", [(10e-6, 487), (0.0, 0), (120e-9, 6)])
def test_deadtime_to_slots(tau, slots):
    assert model.deadtime_to_slots(tau, 48.7e6) == slots


def test_deadtime_slots_attached(paper):
    assert paper.heralding.detectors[0].deadtime_slots == 487
    assert paper.heralding.xor_deadtime_slots == 6


@given(mu=st.floats(0, 2), t=st.floats(0, 0.5), tau=st.floats(0, 1e-4), m=st.integers(1, 8))
def test_validation_is_idempotent(mu, t, tau, m):
    det = DetectorParams(deadtime_s=tau, dark_prob=1e-6)
    cfg = SystemConfig(source=model.SourceParams(mu=mu),
                       heralding=model.psm_heralding(t, m, det))
    once = validate_config(cfg)
    assert validate_config(once) == once


def test_single_detector_variant_removes_coupler(paper):
    one = model.single_detector_variant(paper)
    assert one.heralding.m == 1
    assert one.heralding.arm_transmittance[0] == pytest.approx(model.PAPER_HERALD_BETA / model.PAPER_HERALD_QE)
    assert one.heralding.xor_deadtime_s == 0.0


def test_ideal_split_keeps_total_efficiency(paper):
    ideal = model.ideal_split(paper)
    assert sum(ideal.heralding.collection_efficiencies) == pytest.approx(model.PAPER_HERALD_BETA)
    assert ideal.heralding.detectors[0] == ideal.heralding.detectors[1]


def test_counters_merge_and_scale():
    a = model.Counters(slots=10, det_arm=(1, 2), heralds=3)
    b = model.Counters(slots=5, det_arm=(0, 1), heralds=1)
    assert (a + b).det_arm == (1, 3)
    assert a.scaled(3).slots == 30
    assert model.Counters.from_dict(a.to_dict()) == a
    with pytest.raises(ValueError):
        a + model.Counters(det_arm=(1,))
