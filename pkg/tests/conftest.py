import pytest
from hypothesis import settings

from heraldsim import model

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def paper():
    return model.validate_config(model.paper_default())


def quiet(cfg):
    """No darks, no afterpulsing anywhere."""
    from heraldsim.config import set_param
    for key in ("heralding.dark_prob", "heralding.afterpulse_amplitude", "receiver.dark_prob"):
        cfg = set_param(cfg, key, 0.0)
    return cfg


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
