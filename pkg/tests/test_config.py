import pytest
from hypothesis import given, strategies as st

from heraldsim import config, model
from heraldsim.model import ConfigError


def test_dump_parse_round_trip(paper):
    text = config.dump_config(paper)
    assert config.parse_config_text(text) == paper
    assert config.config_digest(config.parse_config_text(text)) == config.config_digest(paper)


@given(mu=st.floats(0, 1), tau=st.floats(0, 2e-5), m=st.integers(1, 4), loss=st.floats(0, 3),
       seed=st.integers(0, 2**63))
def test_round_trip_property(mu, tau, m, loss, seed):
    cfg = config.config_from_mapping({"heralding.m": m, "heralding.split_excess_loss_db": loss,
                                      "source.mu": mu, "heralding.deadtime_s": tau, "seed": seed})
    assert config.parse_config_text(config.dump_config(cfg)) == cfg


def test_profile_and_overrides():
    cfg = config.parse_config_text("profile = paper-ideal-split\nsource.mu = 0.2  # comment\n")
    assert cfg.source.mu == 0.2
    assert cfg.heralding.split_excess_loss_db == 0.0


def test_unknown_key_is_named():
    with pytest.raises(ConfigError, match="source.muu"):
        config.parse_config_text("source.muu = 0.1\n")
    with pytest.raises(ConfigError, match="heralding.detector3"):
        config.config_from_mapping({"heralding.detector3.efficiency": 0.1})


def test_bad_value_is_named():
    with pytest.raises(ConfigError, match="source.mu"):
        config.parse_config_text("source.mu = abc\n")
    with pytest.raises(ConfigError, match="mu must be >= 0"):
        config.parse_config_text("source.mu = -1\n")


def test_missing_file():
    with pytest.raises(ConfigError, match="config file not found"):
        config.load_config("/nonexistent/heraldsim.cfg")


def test_group_keys(paper):
    cfg = config.set_param(paper, "heralding.deadtime_s", 1e-6)
    assert all(d.deadtime_s == 1e-6 for d in cfg.heralding.detectors)
    assert config.get_param(cfg, "heralding.deadtime_s") == 1e-6
    with pytest.raises(ConfigError, match="differ"):
        config.get_param(paper, "heralding.efficiency")


def test_m_rebuilds_split(paper):
    cfg = model.validate_config(config.set_param(paper, "heralding.m", 4))
    assert cfg.heralding.m == 4
    assert len(cfg.heralding.detectors) == 4


def test_digest_changes_with_any_field(paper):
    d = config.config_digest(paper)
    assert config.config_digest(config.set_param(paper, "seed", 1)) != d
    assert config.config_digest(config.set_param(paper, "receiver.detector4.dark_prob", 2e-5)) != d
