import numpy as np

from heraldsim import rng


def test_streams_are_reproducible():
    a = rng.stream(7, rng.SOURCE, 0, 3).random(5)
    b = rng.stream(7, rng.SOURCE, 0, 3).random(5)
    assert np.array_equal(a, b)


def test_streams_are_distinct_per_component_and_chunk():
    draws = {(c, k): rng.stream(7, c, 0, k).random() for c in (rng.SOURCE, rng.CHANNEL, rng.NOISE) for k in (0, 1)}
    assert len(set(draws.values())) == len(draws)


def test_derived_seed():
    assert rng.derived_seed(11, 0) == 11
    assert rng.derived_seed(11, 1) != rng.derived_seed(11, 2)
    assert rng.derived_seed(11, 1) == rng.derived_seed(11, 1)
