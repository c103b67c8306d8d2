import math

from hypothesis import given, strategies as st

from heraldsim import estimators as est
from heraldsim import model
from heraldsim.experiments import SweepRow
from heraldsim.records import RunRecord, assumptions, read_table, table_text, unit_of

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@st.composite
def rows(draw):
    out = []
    for r in range(draw(st.integers(1, 3))):
        metrics = {name: est.MetricEstimate(draw(finite), abs(draw(finite)), draw(st.integers(0, 10**9)))
                   for name in draw(st.sets(st.sampled_from(["herald_rate", "g2", "qber"])))}
        out.append(SweepRow("qber-vs-g2", "receiver.noise_prob_per_gate", draw(finite), r, draw(st.integers(0, 2**64 - 1)),
                            "ab" * 32, {}, metrics, {"g2": draw(finite)}, {}).to_dict())
    return out


@given(rows=rows(), wall=st.floats(0, 1e4))
def test_run_record_round_trip(rows, wall):
    rec = RunRecord("d" * 64, 1, "0.1.0", "qber-vs-g2", rows, wall, {"source.mu": 0.12}, ["x"], {"slots": 3})
    again = RunRecord.from_json(rec.to_json())
    assert again == rec
    assert again.to_json() == rec.to_json()


def test_non_finite_values_become_null():
    row = SweepRow("s", "source.mu", 0.1, 0, 1, "d", {}, {"g2": None}, {"qber": math.nan}, {"g2": "zero"}).to_dict()
    rec = RunRecord("d", 1, "v", "s", [row], 0.0)
    assert RunRecord.from_json(rec.to_json()).rows[0]["analytic"]["qber"] is None


def test_table_header_units_and_preamble(tmp_path):
    row = SweepRow("s", "heralding.deadtime_s", 1e-6, 0, 7, "abc", {},
                   {"herald_rate_m1": est.MetricEstimate(1.0, 0.1, 5), "g2": None},
                   {"herald_rate_m1": 1.5}, {"g2": "insufficient statistics, zero singles"}).to_dict()
    text = table_text([row], scenario="s", digest="abc", seed=7)
    p = tmp_path / "t.csv"
    p.write_text(text)
    meta, body = read_table(p)
    assert meta["config_digest"] == "abc" and meta["seed"] == "7"
    assert body[0]["heralding.deadtime_s [s]"] == "1e-06"
    assert body[0]["herald_rate_m1 [counts/s]"] == "1.0"
    assert body[0]["g2 [1]"] == ""
    assert body[0]["errors"] == "g2: insufficient statistics, zero singles"


def test_units():
    assert unit_of("receiver_rate_m2") == "counts/s"
    assert unit_of("N_detected") == "counts/s"
    assert unit_of("herald_rate_gain") == "1"
    assert unit_of("herald_fraction_m1") == "1"
    assert unit_of("qber") == "1"


def test_assumptions_label_afterpulse_defaults():
    lines = assumptions(model.paper_default())
    assert any("afterpulsing" in a and "assumed" in a for a in lines)
