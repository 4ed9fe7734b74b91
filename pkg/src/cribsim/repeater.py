"""Link budget and Monte Carlo model of a simplified multimode quantum repeater.

Lengths in km, speeds in km/s, times in seconds. Each round lasts L0 / c: the
photon reaches the segment midpoint and the heralding signal returns.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .errors import InvalidParameter

BELL_LABELS = ("phi+", "phi-", "psi+", "psi-")
C_FIBER = 2.0e5
CHUNK = 10_000
_TIE = 1e-12


def _nonneg(x, name):
    if not x >= 0:
        raise InvalidParameter(f"{name} must be >= 0, got {x}", name)


def _prob(x, name):
    if not 0.0 <= x <= 1.0:
        raise InvalidParameter(f"{name} must lie in [0, 1], got {x}", name)


def channel_transmission(a: float, length: float) -> float:
    """Fiber transmission 10^(-a L / 10) for attenuation a in dB/km."""
    _nonneg(a, "a")
    _nonneg(length, "L")
    return 10.0 ** (-a * length / 10.0)


def min_storage_time(l0: float, c_medium: float = C_FIBER) -> float:
    """Shortest useful storage time L0 / c, in seconds."""
    _nonneg(l0, "L0")
    if not c_medium > 0:
        raise InvalidParameter("c_medium must be positive", "c_medium")
    return l0 / c_medium


def min_efficiency(a: float, l0: float) -> float:
    """Memory efficiency that matches transmission to the segment midpoint."""
    _nonneg(a, "a")
    _nonneg(l0, "L0")
    return 10.0 ** (-a * l0 / 20.0)


def memory_usefulness(eps: float, a: float, l0: float):
    """(useful, margin): useful iff eps^2 beats the one-segment transmission."""
    _prob(eps, "eps")
    p_direct = channel_transmission(a, l0)
    margin = eps * eps / p_direct
    return bool(margin > 1.0 + _TIE), margin


def segment_success_prob(p_link: float, n_modes: int) -> float:
    """Probability that at least one of N multiplexed modes heralds."""
    _prob(p_link, "p_link")
    if n_modes < 1:
        raise InvalidParameter("N must be >= 1", "N")
    if p_link == 1.0:
        return 1.0
    return float(-math.expm1(n_modes * math.log1p(-p_link)))


@dataclass(frozen=True)
class ChannelSpec:
    attenuation: float = 0.2
    segment_length: float = 50.0
    total_length: float = 50.0
    c_medium: float = C_FIBER

    def __post_init__(self):
        _nonneg(self.attenuation, "attenuation")
        if not 0 < self.segment_length <= self.total_length:
            raise InvalidParameter("need 0 < segment_length <= total_length", "segment_length")
        if not self.c_medium > 0:
            raise InvalidParameter("c_medium must be positive", "c_medium")

    @property
    def round_time(self) -> float:
        return self.segment_length / self.c_medium


@dataclass(frozen=True)
class RepeaterConfig:
    channel: ChannelSpec
    modes: int = 1
    memory_efficiency: float = 1.0
    memory_lifetime: float = math.inf
    p_swap: float = 1.0
    segments: Optional[int] = None
    p_pair: float = 1.0
    p_bsm_mid: float = 0.5

    def __post_init__(self):
        if self.modes < 1:
            raise InvalidParameter("modes must be >= 1", "modes")
        for name in ("memory_efficiency", "p_swap", "p_pair", "p_bsm_mid"):
            _prob(getattr(self, name), name)
        if not self.memory_lifetime > 0:
            raise InvalidParameter("memory_lifetime must be positive", "memory_lifetime")
        if self.segments is not None and self.segments < 1:
            raise InvalidParameter("segments must be >= 1", "segments")

    @property
    def n_segments(self) -> int:
        if self.segments is not None:
            return self.segments
        ch = self.channel
        return max(1, int(round(ch.total_length / ch.segment_length)))

    @property
    def link_prob(self) -> float:
        """Heralding probability of one mode: pair source, both arms to midpoint, midpoint BSM."""
        half = channel_transmission(self.channel.attenuation, 0.5 * self.channel.segment_length)
        return self.p_pair * half * half * self.p_bsm_mid

    @property
    def segment_prob(self) -> float:
        return segment_success_prob(self.link_prob, self.modes)

    @property
    def final_prob(self) -> float:
        """Swap chain success once every segment holds a pair."""
        k = self.n_segments - 1
        return self.memory_efficiency ** (2 * k) * self.p_swap ** k

    @property
    def lifetime_rounds(self) -> float:
        if math.isinf(self.memory_lifetime):
            return math.inf
        return math.floor(self.memory_lifetime / self.channel.round_time + 1e-9)

    @property
    def feasible(self) -> bool:
        return self.segment_prob > 0 and self.final_prob > 0 and self.lifetime_rounds >= 1


@dataclass(frozen=True, eq=False)
class RepeaterOutcome:
    """Per-trial results; failed trials carry NaN times and label -1."""

    rounds: np.ndarray
    success: np.ndarray
    bell: np.ndarray
    round_time: float
    zero_probability: bool = False

    @property
    def times(self):
        return np.where(self.success, self.rounds * self.round_time, np.nan)

    def summary(self) -> dict:
        ok = self.success
        n = int(ok.size)
        frac = float(ok.mean()) if n else 0.0
        t = self.times[ok]
        if t.size:
            mean = float(t.mean())
            sem = float(t.std(ddof=1) / math.sqrt(t.size)) if t.size > 1 else float("nan")
            median = float(np.median(t))
            rate = float(frac / mean)
        else:
            mean = sem = median = float("nan")
            rate = 0.0
        counts = np.bincount(self.bell[ok], minlength=4) if t.size else np.zeros(4, int)
        return {"trials": n, "success_fraction": frac, "mean_time": mean,
                "mean_time_sem": sem, "median_time": median, "rate": rate,
                "round_time": self.round_time, "zero_probability": self.zero_probability,
                "bell_counts": {k: int(c) for k, c in zip(BELL_LABELS, counts)}}

    def histogram(self, bins: int = 50):
        t = self.times[self.success]
        if not t.size:
            return np.zeros(0), np.zeros(0, int)
        hi = int(self.rounds[self.success].max())
        edges = self.round_time * (np.unique(np.linspace(0, hi, bins + 1).round()) + 0.5)
        counts, edges = np.histogram(t, bins=np.concatenate([[0.0], edges]))
        return edges, counts


def _run_chunk(cfg: RepeaterConfig, n: int, rng: np.random.Generator, max_rounds: int):
    m = cfg.n_segments
    p, pf, k = cfg.segment_prob, cfg.final_prob, cfg.lifetime_rounds
    age = np.zeros((n, m), np.int64)
    rounds = np.zeros(n, np.int64)
    done = np.zeros(n, bool)
    idx = np.arange(n)
    r = 0
    while idx.size and r < max_rounds:
        r += 1
        a = age[idx]
        stored = a > 0
        a[stored] += 1
        if not math.isinf(k):
            a[a > k] = 0
        pending = a == 0
        hit = pending & (rng.random(a.shape) < p)
        a[hit] = 1
        ready = np.all(a > 0, axis=1)
        if ready.any():
            win = ready & (rng.random(idx.size) < pf)
            a[ready & ~win] = 0
            fin = idx[win]
            rounds[fin] = r
            done[fin] = True
        age[idx] = a
        idx = idx[~done[idx]]
    bell = np.where(done, rng.integers(0, 4, n), -1)
    return rounds, done, bell


def simulate_repeater(cfg: RepeaterConfig, trials: int = 100_000, seed: int = 0,
                      max_rounds: int = 1_000_000) -> RepeaterOutcome:
    """Monte Carlo time to end-to-end entanglement.

    Trials run in chunks, each with its own child seed, so results do not
    depend on evaluation order.
    """
    if trials < 1:
        raise InvalidParameter("trials must be >= 1", "trials")
    t0 = cfg.channel.round_time
    if not cfg.feasible:
        return RepeaterOutcome(rounds=np.zeros(trials, np.int64), success=np.zeros(trials, bool),
                               bell=-np.ones(trials, np.int64), round_time=t0,
                               zero_probability=True)
    sizes = [min(CHUNK, trials - i) for i in range(0, trials, CHUNK)]
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    parts = [_run_chunk(cfg, n, np.random.default_rng(s), max_rounds) for n, s in zip(sizes, seeds)]
    return RepeaterOutcome(rounds=np.concatenate([x[0] for x in parts]),
                           success=np.concatenate([x[1] for x in parts]),
                           bell=np.concatenate([x[2] for x in parts]), round_time=t0)


def expected_rounds(cfg: RepeaterConfig, max_states: int = 200_000) -> float:
    """Exact mean number of rounds to success (inf when impossible)."""
    if not cfg.feasible:
        return math.inf
    m, p, pf, k = cfg.n_segments, cfg.segment_prob, cfg.final_prob, cfg.lifetime_rounds
    if math.isinf(k):
        # Wald: each attempt waits for the slowest of m geometric segments
        q = 1.0 - p
        total, j = 0.0, 0
        while True:
            js = np.arange(j, j + 4096)
            with np.errstate(divide="ignore"):
                terms = -np.expm1(m * np.log1p(-(q ** js))) if q > 0 else (js == 0) * 1.0
            total += float(terms.sum())
            if terms[-1] < 1e-17:
                break
            j += 4096
        return total / pf
    k = int(k)
    if (k + 1) ** m > max_states:
        raise InvalidParameter("state space too large for the exact chain", "memory_lifetime")
    states = list(itertools.product(range(k + 1), repeat=m))
    index = {s: i for i, s in enumerate(states)}
    rows, cols, vals = [], [], []
    for s in states:
        i = index[s]
        aged = tuple(0 if (a == 0 or a + 1 > k) else a + 1 for a in s)
        pend = [j for j, a in enumerate(aged) if a == 0]
        for hits in itertools.product((0, 1), repeat=len(pend)):
            nh = sum(hits)
            pr = p ** nh * (1 - p) ** (len(pend) - nh)
            if pr == 0:
                continue
            nxt = list(aged)
            for j, h in zip(pend, hits):
                if h:
                    nxt[j] = 1
            if all(a > 0 for a in nxt):
                if pf < 1:
                    rows.append(i); cols.append(index[(0,) * m]); vals.append(pr * (1 - pf))
            else:
                rows.append(i); cols.append(index[tuple(nxt)]); vals.append(pr)
    q = sparse.csr_matrix((vals, (rows, cols)), shape=(len(states), len(states)))
    t = spsolve(sparse.identity(len(states), format="csr") - q, np.ones(len(states)))
    return float(t[index[(0,) * m]])


def expected_rate(cfg: RepeaterConfig) -> float:
    """End-to-end pairs per second from the exact mean round count."""
    r = expected_rounds(cfg)
    return 0.0 if math.isinf(r) else 1.0 / (r * cfg.channel.round_time)
