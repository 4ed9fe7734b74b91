import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from cribsim.errors import InvalidParameter
from cribsim.repeater import (ChannelSpec, RepeaterConfig, channel_transmission, expected_rate,
                              expected_rounds, memory_usefulness, min_efficiency,
                              min_storage_time, segment_success_prob, simulate_repeater)


def _cfg(**kw):
    ch = kw.pop("channel", None) or ChannelSpec(0.2, 50.0, 50.0)
    return RepeaterConfig(ch, **kw)


def _within(sample, exact, sigmas=3.0):
    sem = sample.std(ddof=1) / math.sqrt(sample.size)
    return abs(sample.mean() - exact) <= sigmas * sem


# closed forms

@pytest.mark.parametrize("length,value", [(50, 0.1), (100, 0.01), (1000, 1e-20)])
def test_channel_transmission_reference_values(length, value):
    assert channel_transmission(0.2, length) == value


def test_channel_transmission_zero_length():
    assert channel_transmission(0.7, 0.0) == 1.0


@pytest.mark.parametrize("args", [(-0.1, 10.0), (0.2, -1.0)])
def test_channel_transmission_rejects_negative(args):
    with pytest.raises(InvalidParameter):
        channel_transmission(*args)


@settings(max_examples=200)
@given(a=st.floats(0, 1), l1=st.floats(0, 500), l2=st.floats(0, 500))
def test_channel_transmission_multiplicative(a, l1, l2):
    whole = channel_transmission(a, l1 + l2)
    assert whole == pytest.approx(channel_transmission(a, l1) * channel_transmission(a, l2),
                                  rel=1e-12, abs=1e-300)


def test_min_storage_time():
    assert min_storage_time(150.0, 2e5) == pytest.approx(7.5e-4, rel=1e-15)
    assert min_storage_time(100.0, 2e5) == pytest.approx(5e-4, rel=1e-15)
    assert min_storage_time(0.0, 2e5) == 0.0


@pytest.mark.parametrize("l0,rounded", [(40, 0.398), (150, 0.0316)])
def test_min_efficiency_reference_values(l0, rounded):
    assert float(f"{min_efficiency(0.2, l0):.3g}") == rounded


def test_min_efficiency_lossless():
    assert min_efficiency(0.0, 123.0) == 1.0


def test_memory_usefulness():
    ok, margin = memory_usefulness(0.5, 0.2, 40.0)
    assert ok and margin == pytest.approx(1.577393, rel=1e-6)
    ok, margin = memory_usefulness(min_efficiency(0.2, 40.0), 0.2, 40.0)
    assert not ok and margin == pytest.approx(1.0)
    ok, margin = memory_usefulness(1.0, 0.0, 80.0)
    assert not ok and margin == 1.0


@settings(max_examples=100)
@given(eps=st.floats(0.001, 1.0), a=st.floats(0.01, 0.5), l0=st.floats(1, 200))
def test_usefulness_matches_threshold(eps, a, l0):
    ok, margin = memory_usefulness(eps, a, l0)
    assert margin == pytest.approx(eps ** 2 / channel_transmission(a, l0), rel=1e-9)
    if abs(eps - min_efficiency(a, l0)) > 1e-9:
        assert ok == (eps > min_efficiency(a, l0))


@pytest.mark.parametrize("p,n,value", [(0.1, 1, 0.1), (0.1, 44, 0.990302262), (0.0, 7, 0.0),
                                       (1.0, 3, 1.0)])
def test_segment_success_prob(p, n, value):
    assert segment_success_prob(p, n) == pytest.approx(value, abs=1e-9)


def test_segment_success_prob_exceeds_099_at_44_modes():
    assert segment_success_prob(0.1, 44) > 0.99


@settings(max_examples=100)
@given(p=st.floats(0, 1), n=st.integers(1, 10_000))
def test_segment_success_prob_bounds(p, n):
    s = segment_success_prob(p, n)
    assert p - 1e-15 <= s <= 1.0
    assert segment_success_prob(p, n + 1) >= s


def test_config_validation():
    with pytest.raises(InvalidParameter):
        ChannelSpec(0.2, 60.0, 50.0)
    with pytest.raises(InvalidParameter):
        _cfg(modes=0)
    with pytest.raises(InvalidParameter):
        _cfg(memory_efficiency=1.5)


# Monte Carlo

def test_single_segment_geometric_mean():
    cfg = _cfg()
    out = simulate_repeater(cfg, 100_000, seed=7)
    assert out.success.all()
    assert _within(out.rounds.astype(float), 1.0 / cfg.link_prob)


def test_times_are_round_multiples():
    cfg = _cfg(modes=3)
    out = simulate_repeater(cfg, 2000, seed=1)
    t = out.times[out.success]
    k = t / cfg.channel.round_time
    np.testing.assert_allclose(k, np.round(k), atol=1e-9)
    assert np.all(k >= 1)


def test_two_segments_first_round():
    ch = ChannelSpec(0.2, 50.0, 100.0)
    cfg = RepeaterConfig(ch, modes=90)
    assert cfg.n_segments == 2 and cfg.segment_prob >= 0.99
    out = simulate_repeater(cfg, 100_000, seed=11)
    first = out.success & (out.rounds == 1)
    assert first.mean() >= 0.98
    assert _within(first.astype(float), cfg.segment_prob ** 2)


@pytest.mark.parametrize("segments", [2, 3, 4])
def test_readout_scaling(segments):
    ch = ChannelSpec(0.2, 50.0, 50.0 * segments)
    cfg = RepeaterConfig(ch, modes=2000, memory_efficiency=0.9)
    assert cfg.final_prob == pytest.approx(0.9 ** (2 * (segments - 1)), rel=1e-12)
    out = simulate_repeater(cfg, 100_000, seed=segments)
    first = (out.success & (out.rounds == 1)).astype(float)
    assert _within(first, cfg.segment_prob ** segments * cfg.final_prob)


@pytest.mark.parametrize("kw", [
    dict(segments=2, modes=5),
    dict(segments=2, modes=5, memory_lifetime=3e-3),
    dict(segments=3, modes=20, memory_efficiency=0.8, memory_lifetime=1e-3, p_swap=0.9),
])
def test_monte_carlo_matches_exact_mean(kw):
    ch = ChannelSpec(0.2, 50.0, 50.0 * kw["segments"])
    cfg = RepeaterConfig(ch, **kw)
    out = simulate_repeater(cfg, 100_000, seed=5)
    assert out.success.all()
    assert _within(out.rounds.astype(float), expected_rounds(cfg))


def test_bell_labels_uniform():
    out = simulate_repeater(_cfg(modes=4), 100_000, seed=2)
    counts = np.bincount(out.bell[out.success], minlength=4)
    assert counts.size == 4
    assert stats.chisquare(counts).pvalue > 0.01


def test_seed_reproducibility_and_chunk_order():
    cfg = _cfg(modes=2)
    a = simulate_repeater(cfg, 25_000, seed=99)
    b = simulate_repeater(cfg, 25_000, seed=99)
    np.testing.assert_array_equal(a.rounds, b.rounds)
    np.testing.assert_array_equal(a.bell, b.bell)
    # each chunk draws from its own child seed, so a shorter run is a prefix
    c = simulate_repeater(cfg, 10_000, seed=99)
    np.testing.assert_array_equal(c.rounds, a.rounds[:10_000])
    d = simulate_repeater(cfg, 25_000, seed=100)
    assert not np.array_equal(a.rounds, d.rounds)


def test_zero_probability_outcome():
    cfg = _cfg(p_pair=0.0, memory_lifetime=1e-3)
    out = simulate_repeater(cfg, 100, seed=0)
    assert out.zero_probability
    assert not out.success.any()
    s = out.summary()
    assert s["rate"] == 0.0 and math.isnan(s["mean_time"])
    assert expected_rounds(cfg) == math.inf and expected_rate(cfg) == 0.0


def test_summary_and_histogram():
    out = simulate_repeater(_cfg(modes=2), 5000, seed=4)
    s = out.summary()
    assert s["trials"] == 5000 and s["success_fraction"] == 1.0
    assert sum(s["bell_counts"].values()) == 5000
    assert s["rate"] == pytest.approx(1.0 / s["mean_time"])
    edges, counts = out.histogram(20)
    assert counts.sum() == 5000
    assert np.all(np.diff(edges) > 0)


# monotonicity of the exact rate over a lattice

def _rate(a=0.2, l0=50.0, modes=5, eps=0.9, lifetime=math.inf, segments=2):
    ch = ChannelSpec(a, l0, l0 * segments)
    return expected_rate(RepeaterConfig(ch, modes=modes, memory_efficiency=eps,
                                        memory_lifetime=lifetime, segments=segments))


LATTICE = dict(a=[0.1, 0.2, 0.3], l0=[25.0, 50.0, 100.0], modes=[1, 5, 50],
               eps=[0.5, 0.9, 1.0], lifetime=[5e-4, 2e-3, math.inf])


@pytest.mark.parametrize("axis,direction", [("modes", 1), ("eps", 1), ("lifetime", 1),
                                            ("a", -1), ("l0", -1)])
def test_rate_monotone(axis, direction):
    others = [k for k in LATTICE if k != axis]
    for combo in itertools.product(*(LATTICE[k][::2] for k in others)):
        base = dict(zip(others, combo))
        rates = [_rate(**base, **{axis: v}) for v in LATTICE[axis]]
        for lo, hi in zip(rates, rates[1:]):
            if direction > 0:
                assert hi >= lo * (1 - 1e-12)
            else:
                assert hi < lo
