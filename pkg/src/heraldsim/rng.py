"""Per-component random streams derived from one 64-bit seed.

Stream-splitting rule: the generator for component ``c``, sub-stream
``s`` and simulation chunk ``k`` is

    PCG64(SeedSequence(seed, spawn_key=(c, s, k)))

Component ids are fixed constants below, so a component always sees the
same draws no matter which other components are enabled, and chunks can be
generated in any order.
"""

from __future__ import annotations

import numpy as np

SOURCE = 1           # pair-number draws
HERALD_OPTICS = 2    # routing of heralding photons to arms (incl. detector efficiency)
CHANNEL = 3          # heralded photon transmission, HBT split, receiver efficiency
NOISE = 4            # injected noise photons
HERALD_DETECTOR = 100    # + arm index; sub-stream 0 = dark counts, 1 = afterpulses
RECEIVER_DETECTOR = 200  # + 3 or 4; sub-stream 0 = dark counts
REPLICATE = 900      # seed derivation for sweep replicates

DARK = 0
AFTERPULSE = 1


def stream(seed: int, component: int, sub: int = 0, chunk: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(component, sub, chunk))))


def derived_seed(seed: int, index: int) -> int:
    """Seed of replicate ``index``; replicate 0 keeps the base seed."""
    if index == 0:
        return seed
    ss = np.random.SeedSequence(seed, spawn_key=(REPLICATE, index))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
