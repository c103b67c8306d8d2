"""Slot-resolved Monte Carlo of the source, heralding arms and HBT receiver.

The clock slots are processed in fixed-size chunks.  For each chunk every
stochastic component draws its events from its own stream (see ``rng``):
slots with at least one pair, per-pair routing of the heralding and
heralded photons, dark-count and afterpulse-candidate slots per detector,
and noise photons.  Slots where nothing can happen are never visited.  The
events are merged into one sorted list of (slot, cause bits) and a compiled
sequential kernel applies deadtime, afterpulse decay, the XOR veto and the
receiver gating, carrying detector state from chunk to chunk.

Because chunk ``c`` always uses the streams keyed by ``c``, results do not
depend on how chunks are grouped, which is what makes the parallel mode
exact when no state crosses slots.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from . import rng as rngmod
from .model import ConfigError, Counters, PairDistribution, SystemConfig, validate_config

CHUNK_SLOTS = 1 << 22  # part of the RNG contract: changing it changes every draw

# cause bits of a merged event
_SIG3, _SIG4 = 16, 17
_NOISE3, _NOISE4 = 18, 19
_DARK3, _DARK4 = 20, 21
_HERALD_MASK = (1 << 16) - 1  # idler photon (bits 0-7) or heralding dark (bits 8-15)

# flat counter layout used by the kernel
_C_DET, _C_PHOTON, _C_DARK, _C_AP = 0, 8, 16, 24
(_C_COINC, _C_HERALDS, _C_H_DARK, _C_H_AP, _C_XOR_BLOCKED, _C_DET3, _C_DET4, _C_TRIPLES,
 _C_SIG3, _C_SIG4, _C_NOISE3, _C_NOISE4, _C_RXDARK3, _C_RXDARK4, _C_AP_SIG, _C_AP_NOISE,
 _C_ALL3, _C_ALL4, _C_CAR_TRUE, _C_CAR_ACC) = range(32, 52)
_N_COUNTERS = 52

# kernel state layout
_S_BLIND = 0        # 0..7 heralding detectors, 8, 9 receiver detectors
_S_LAST = 10        # 10..17 last avalanche slot of heralding detectors
_S_XOR = 18
_S_LAST_IDLER = 19
_S_FIRST_SIGNAL = 20
_N_STATE = 21

# trace codes: 2 bits of cause per heralding detector at bits 2i,
# receiver causes at bits 16-17 (det3) and 18-19 (det4), herald at bit 20
CAUSE_NONE, CAUSE_PHOTON, CAUSE_DARK, CAUSE_AFTERPULSE = 0, 1, 2, 3
CAUSE_SIGNAL, CAUSE_NOISE, CAUSE_RX_DARK = 1, 2, 3
HERALD_BIT = 1 << 20


@njit(cache=True)
def _kernel(slots, bits, ap_u, m, herald_dead, ap_rate, xor_dead, rx_dead, triggered,
            state, cnt, trace_slot, trace_code):
    n_trace = 0
    record = trace_slot.shape[0] > 0
    for e in range(slots.shape[0]):
        k = slots[e]
        b = bits[e]
        nf = 0
        herald_cause = 0
        code = 0
        for i in range(m):
            if k <= state[_S_BLIND + i]:
                continue
            cause = 0
            if b & (1 << i):
                cause = 1
            elif b & (1 << (8 + i)):
                cause = 2
            else:
                last = state[_S_LAST + i]
                if last >= 0 and ap_u[e, i] < math.exp(-(k - last) * ap_rate[i]):
                    cause = 3
            if cause:
                nf += 1
                herald_cause = cause
                state[_S_BLIND + i] = k + herald_dead[i]
                state[_S_LAST + i] = k
                cnt[_C_DET + i] += 1
                cnt[8 * cause + i] += 1
                code |= cause << (2 * i)
        herald = False
        if nf == 1:
            if k > state[_S_XOR]:
                herald = True
                state[_S_XOR] = k + xor_dead
                cnt[_C_HERALDS] += 1
                if herald_cause == 2:
                    cnt[_C_H_DARK] += 1
                elif herald_cause == 3:
                    cnt[_C_H_AP] += 1
            else:
                cnt[_C_XOR_BLOCKED] += 1
        elif nf >= 2:
            cnt[_C_COINC] += 1
        fired3 = False
        fired4 = False
        if herald or not triggered:
            for j in range(2):
                if k <= state[_S_BLIND + 8 + j]:
                    continue
                c = 0
                if b & (1 << (_SIG3 + j)):
                    c = 1
                elif b & (1 << (_NOISE3 + j)):
                    c = 2
                elif b & (1 << (_DARK3 + j)):
                    c = 3
                if c:
                    state[_S_BLIND + 8 + j] = k + rx_dead[j]
                    cnt[_C_ALL3 + j] += 1
                    cnt[_C_SIG3 + 2 * (c - 1) + j] += 1
                    code |= c << (16 + 2 * j)
                    if j == 0:
                        fired3 = True
                    else:
                        fired4 = True
                    if herald:
                        cnt[_C_DET3 + j] += 1
                        if herald_cause == 3:
                            if c == 1:
                                cnt[_C_AP_SIG] += 1
                            elif c == 2:
                                cnt[_C_AP_NOISE] += 1
        if herald:
            code |= 1 << 20
            if fired3 and fired4:
                cnt[_C_TRIPLES] += 1
        if fired3 or fired4:
            if nf > 0:
                cnt[_C_CAR_TRUE] += 1
            if state[_S_LAST_IDLER] == k - 1:
                cnt[_C_CAR_ACC] += 1
            if state[_S_FIRST_SIGNAL] < 0:
                state[_S_FIRST_SIGNAL] = k
        if nf > 0:
            state[_S_LAST_IDLER] = k
        if record and code != 0:
            trace_slot[n_trace] = k
            trace_code[n_trace] = code
            n_trace += 1
    return n_trace


@dataclass(frozen=True)
class Trace:
    """Per-slot record of every slot where any detector fired.

    ``code`` packs the cause of each detector; see ``arm_cause`` and
    ``receiver_cause``.
    """

    slot: np.ndarray
    code: np.ndarray

    def arm_cause(self, i: int) -> np.ndarray:
        return (self.code >> (2 * i)) & 3

    def receiver_cause(self, j: int) -> np.ndarray:
        """Cause at receiver detector ``j`` (3 or 4)."""
        return (self.code >> (16 + 2 * (j - 3))) & 3

    @property
    def herald(self) -> np.ndarray:
        return (self.code & HERALD_BIT) != 0


@dataclass(frozen=True)
class _Plan:
    """Numbers the event generator and kernel need, derived once per run."""

    seed: int
    n_slots: int
    m: int
    mu: float
    thermal: bool
    arm_cum: np.ndarray          # cumulative per-arm click probability of one heralding photon
    photon_click: tuple[float, float]
    noise_prob: float
    noise_click: tuple[float, float]
    herald_dark: tuple[float, ...]
    herald_ap: tuple[float, ...]
    rx_dark: tuple[float, float]
    herald_dead: np.ndarray
    ap_rate: np.ndarray
    xor_dead: int
    rx_dead: np.ndarray
    triggered: bool

    @classmethod
    def from_config(cls, cfg: SystemConfig) -> "_Plan":
        her, rx, F = cfg.heralding, cfg.receiver, cfg.source.clock_rate_hz
        return cls(
            seed=cfg.seed, n_slots=cfg.n_slots, m=her.m, mu=cfg.source.mu,
            thermal=cfg.source.pair_distribution == PairDistribution.THERMAL,
            arm_cum=np.cumsum(her.collection_efficiencies),
            photon_click=rx.photon_click_probs, noise_prob=rx.noise_prob_per_gate,
            noise_click=rx.noise_click_probs,
            herald_dark=tuple(d.dark_prob for d in her.detectors),
            herald_ap=tuple(d.afterpulse_amplitude for d in her.detectors),
            rx_dark=(rx.detector3.dark_prob, rx.detector4.dark_prob),
            herald_dead=np.array([d.deadtime_slots for d in her.detectors], dtype=np.int64),
            ap_rate=np.array([1.0 / (d.afterpulse_tau_s * F) for d in her.detectors]),
            xor_dead=her.xor_deadtime_slots,
            rx_dead=np.array([rx.detector3.deadtime_slots, rx.detector4.deadtime_slots], dtype=np.int64),
            triggered=rx.triggered,
        )

    @property
    def n_chunks(self) -> int:
        return -(-self.n_slots // CHUNK_SLOTS)


def _bernoulli_slots(gen: np.random.Generator, p: float, length: int) -> np.ndarray:
    """Sorted slot offsets in [0, length) where a Bernoulli(p) event occurs."""
    if p <= 0.0 or length <= 0:
        return np.empty(0, dtype=np.int64)
    expected = length * p
    batch = int(expected + 6.0 * math.sqrt(expected) + 16)
    parts = []
    pos = -1
    while pos < length:
        cs = pos + np.cumsum(gen.geometric(p, size=batch), dtype=np.int64)
        parts.append(cs)
        pos = int(cs[-1])
    out = np.concatenate(parts) if len(parts) > 1 else parts[0]
    return out[: np.searchsorted(out, length)]


def _truncated_poisson(gen: np.random.Generator, lam: float, size: int) -> np.ndarray:
    """Poisson(lam) conditioned on >= 1, by inverse CDF."""
    if size == 0:
        return np.empty(0, dtype=np.int64)
    kmax = int(lam + 12.0 * math.sqrt(lam) + 25)
    k = np.arange(1, kmax + 1)
    logp = k * math.log(lam) - np.array([math.lgamma(x + 1.0) for x in k]) - lam - math.log(-math.expm1(-lam))
    cdf = np.cumsum(np.exp(logp))
    cdf[-1] = np.inf
    return np.searchsorted(cdf, gen.random(size), side="right") + 1


def _pair_counts(gen: np.random.Generator, plan: _Plan, size: int) -> np.ndarray:
    if plan.thermal:
        return gen.geometric(1.0 / (1.0 + plan.mu), size=size).astype(np.int64)
    return _truncated_poisson(gen, plan.mu, size)


def _pair_prob(plan: _Plan) -> float:
    if plan.mu <= 0:
        return 0.0
    return plan.mu / (1.0 + plan.mu) if plan.thermal else -math.expm1(-plan.mu)


def _route_two(u: np.ndarray, p3: float, p4: float, bit3: int, bit4: int) -> np.ndarray:
    out = np.where(u < p3, np.int32(1 << bit3), np.int32(0))
    out[(u >= p3) & (u < p3 + p4)] = 1 << bit4
    return out


def _noise_bits(gen: np.random.Generator, plan: _Plan, n_gates: int) -> np.ndarray:
    """Receiver cause bits from noise photons for ``n_gates`` noisy gates.

    The number of noise photons in a noisy gate is Poisson conditioned on
    at least one, with the mean set so P(>= 1) = noise_prob_per_gate.
    """
    lam = -math.log1p(-plan.noise_prob)
    counts = _truncated_poisson(gen, lam, n_gates)
    photon_bits = _route_two(gen.random(int(counts.sum())), *plan.noise_click, _NOISE3, _NOISE4)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    return np.bitwise_or.reduceat(photon_bits, starts) if n_gates else photon_bits


def _chunk_events(plan: _Plan, chunk: int):
    """Merged (slots, bits, ap_u) for one chunk, slots absolute and sorted."""
    start = chunk * CHUNK_SLOTS
    length = min(CHUNK_SLOTS, plan.n_slots - start)
    m = plan.m
    seed = plan.seed
    slot_parts, bit_parts = [], []

    src = rngmod.stream(seed, rngmod.SOURCE, 0, chunk)
    pair_slots = _bernoulli_slots(src, _pair_prob(plan), length)
    if pair_slots.size:
        counts = _pair_counts(src, plan, pair_slots.size)
        n_pairs = int(counts.sum())
        arm = np.searchsorted(plan.arm_cum, rngmod.stream(seed, rngmod.HERALD_OPTICS, 0, chunk).random(n_pairs),
                              side="right")
        idler_bits = np.where(arm < m, np.left_shift(1, np.minimum(arm, 7)), 0).astype(np.int32)
        signal_bits = _route_two(rngmod.stream(seed, rngmod.CHANNEL, 0, chunk).random(n_pairs),
                                 *plan.photon_click, _SIG3, _SIG4)
        starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        slot_bits = np.bitwise_or.reduceat(idler_bits | signal_bits, starts)
        keep = slot_bits != 0
        slot_parts.append(pair_slots[keep])
        bit_parts.append(slot_bits[keep])

    for i in range(m):
        s = _bernoulli_slots(rngmod.stream(seed, rngmod.HERALD_DETECTOR + i, rngmod.DARK, chunk),
                             plan.herald_dark[i], length)
        slot_parts.append(s)
        bit_parts.append(np.full(s.size, 1 << (8 + i), dtype=np.int32))
    for j, bit in ((3, _DARK3), (4, _DARK4)):
        s = _bernoulli_slots(rngmod.stream(seed, rngmod.RECEIVER_DETECTOR + j, rngmod.DARK, chunk),
                             plan.rx_dark[j - 3], length)
        slot_parts.append(s)
        bit_parts.append(np.full(s.size, 1 << bit, dtype=np.int32))

    ap_slots, ap_vals = [], []
    for i in range(m):
        g = rngmod.stream(seed, rngmod.HERALD_DETECTOR + i, rngmod.AFTERPULSE, chunk)
        s = _bernoulli_slots(g, plan.herald_ap[i], length)
        ap_slots.append(s)
        ap_vals.append(g.random(s.size))
        slot_parts.append(s)
        bit_parts.append(np.zeros(s.size, dtype=np.int32))

    noise_gen = rngmod.stream(seed, rngmod.NOISE, 0, chunk) if plan.noise_prob > 0 else None
    if noise_gen is not None and not plan.triggered:
        s = _bernoulli_slots(noise_gen, plan.noise_prob, length)
        slot_parts.append(s)
        bit_parts.append(_noise_bits(noise_gen, plan, s.size))

    all_slots = np.concatenate(slot_parts)
    all_bits = np.concatenate(bit_parts)
    if all_slots.size == 0:
        return np.empty(0, np.int64), np.empty(0, np.int32), np.full((0, m), 2.0), length
    order = np.argsort(all_slots, kind="stable")
    s_sorted = all_slots[order]
    new = np.empty(s_sorted.size, dtype=bool)
    new[0] = True
    np.not_equal(s_sorted[1:], s_sorted[:-1], out=new[1:])
    first = np.flatnonzero(new)
    slots = s_sorted[first]
    bits = np.bitwise_or.reduceat(all_bits[order], first)
    ap_u = np.full((slots.size, m), 2.0)
    if any(a.size for a in ap_slots):
        event_of_sorted = np.cumsum(new) - 1
        event_of_input = np.empty_like(event_of_sorted)
        event_of_input[order] = event_of_sorted
        offset = all_slots.size - sum(a.size for a in ap_slots) - (
            slot_parts[-1].size if noise_gen is not None and not plan.triggered else 0)
        for i in range(m):
            idx = event_of_input[offset: offset + ap_slots[i].size]
            ap_u[idx, i] = ap_vals[i]
            offset += ap_slots[i].size

    if plan.triggered:
        # only slots with a heralding-side candidate can open a receiver gate
        cand = ((bits & _HERALD_MASK) != 0) | (ap_u < 2.0).any(axis=1)
        slots, bits, ap_u = slots[cand], bits[cand], ap_u[cand]
        if noise_gen is not None and slots.size:
            noisy = np.flatnonzero(noise_gen.random(slots.size) < plan.noise_prob)
            bits[noisy] |= _noise_bits(noise_gen, plan, noisy.size)
    return slots + start, bits, ap_u, length


def _fresh_state() -> np.ndarray:
    state = np.full(_N_STATE, -1, dtype=np.int64)
    state[_S_LAST_IDLER] = -10  # never equal to k - 1 for k >= 0
    return state


def _run_chunks(plan: _Plan, chunks: range, want_trace: bool = False):
    state = _fresh_state()
    cnt = np.zeros(_N_COUNTERS, dtype=np.int64)
    slots_done = 0
    trace_s, trace_c = [], []
    for c in chunks:
        slots, bits, ap_u, length = _chunk_events(plan, c)
        n_tr = slots.size if want_trace else 0
        ts = np.empty(n_tr, dtype=np.int64)
        tc = np.empty(n_tr, dtype=np.int64)
        used = _kernel(slots, bits, ap_u, plan.m, plan.herald_dead, plan.ap_rate, plan.xor_dead,
                       plan.rx_dead, plan.triggered, state, cnt, ts, tc)
        if want_trace:
            trace_s.append(ts[:used])
            trace_c.append(tc[:used])
        slots_done += length
    trace = None
    if want_trace:
        trace = Trace(np.concatenate(trace_s) if trace_s else np.empty(0, np.int64),
                      np.concatenate(trace_c) if trace_c else np.empty(0, np.int64))
    return cnt, slots_done, state, trace


def _to_counters(cnt: np.ndarray, slots: int, m: int) -> Counters:
    arm = lambda base: tuple(int(x) for x in cnt[base: base + m])  # noqa: E731
    return Counters(
        slots=slots, det_arm=arm(_C_DET), photon_det=arm(_C_PHOTON), dark_det=arm(_C_DARK),
        afterpulse_det=arm(_C_AP), coincidences_12=int(cnt[_C_COINC]), heralds=int(cnt[_C_HERALDS]),
        heralds_dark=int(cnt[_C_H_DARK]), heralds_afterpulse=int(cnt[_C_H_AP]),
        xor_blocked=int(cnt[_C_XOR_BLOCKED]), det3=int(cnt[_C_DET3]), det4=int(cnt[_C_DET4]),
        triples=int(cnt[_C_TRIPLES]), signal_det3=int(cnt[_C_SIG3]), signal_det4=int(cnt[_C_SIG4]),
        noise_det3=int(cnt[_C_NOISE3]), noise_det4=int(cnt[_C_NOISE4]), dark_det3=int(cnt[_C_RXDARK3]),
        dark_det4=int(cnt[_C_RXDARK4]), ap_signal_det=int(cnt[_C_AP_SIG]), ap_noise_det=int(cnt[_C_AP_NOISE]),
        det3_all=int(cnt[_C_ALL3]), det4_all=int(cnt[_C_ALL4]), car_true_coinc=int(cnt[_C_CAR_TRUE]),
        car_accidental=int(cnt[_C_CAR_ACC]),
    )


def parallel_safe(cfg: SystemConfig) -> bool:
    """True when no detector state crosses slot boundaries."""
    cfg = validate_config(cfg)
    dets = cfg.detectors
    return (all(d.deadtime_slots == 0 for d in dets) and cfg.heralding.xor_deadtime_slots == 0
            and all(d.afterpulse_amplitude == 0 for d in dets))


def _worker(args):
    plan, lo, hi = args
    cnt, slots, state, _ = _run_chunks(plan, range(lo, hi))
    return cnt, slots, int(state[_S_LAST_IDLER]), int(state[_S_FIRST_SIGNAL])


def simulate(cfg: SystemConfig, *, workers: int = 1) -> Counters:
    """Run ``cfg.n_slots`` slots and return the accumulated tallies.

    ``workers > 1`` splits the slot range over processes.  That is only
    allowed when every deadtime (detectors and XOR) is zero and afterpulsing
    is off; otherwise ConfigError is raised.  The parallel result is
    identical to the sequential one.
    """
    cfg = validate_config(cfg)
    plan = _Plan.from_config(cfg)
    if workers <= 1 or plan.n_chunks == 1:
        cnt, slots, _, _ = _run_chunks(plan, range(plan.n_chunks))
        return _to_counters(cnt, slots, plan.m)
    if not parallel_safe(cfg):
        raise ConfigError("parallel simulation requires zero detector and XOR deadtimes and no afterpulsing")
    edges = np.linspace(0, plan.n_chunks, min(workers, plan.n_chunks) + 1).astype(int)
    jobs = [(plan, int(lo), int(hi)) for lo, hi in zip(edges[:-1], edges[1:])]
    with ProcessPoolExecutor(max_workers=len(jobs)) as pool:
        results = list(pool.map(_worker, jobs))
    total = np.zeros(_N_COUNTERS, dtype=np.int64)
    slots = 0
    for n, (cnt, s, _, first_signal) in enumerate(results):
        total += cnt
        slots += s
        if n > 0:
            block_start = jobs[n][1] * CHUNK_SLOTS
            if results[n - 1][2] == block_start - 1 and first_signal == block_start:
                total[_C_CAR_ACC] += 1
    return _to_counters(total, slots, plan.m)


def simulate_trace(cfg: SystemConfig) -> tuple[Counters, Trace]:
    """Sequential run that also returns the per-slot firing record."""
    cfg = validate_config(cfg)
    plan = _Plan.from_config(cfg)
    cnt, slots, _, trace = _run_chunks(plan, range(plan.n_chunks), want_trace=True)
    return _to_counters(cnt, slots, plan.m), trace


def simulate_noise_pair(cfg: SystemConfig, noise_levels: list[float]) -> list[tuple[Counters, Counters]]:
    """(noise on, noise off) counters for each level, sharing every other stream.

    The noise-off run does not depend on the level, so it is computed once.
    """
    cfg = validate_config(cfg)
    off = simulate(replace(cfg, receiver=replace(cfg.receiver, noise_prob_per_gate=0.0)))
    out = []
    for level in noise_levels:
        on = off if level == 0 else simulate(replace(cfg, receiver=replace(cfg.receiver, noise_prob_per_gate=level)))
        out.append((on, off))
    return out
