import math

import numpy as np
import pytest

from tripletsim.detectors import (
    DetectorParams,
    GateParams,
    detect_free,
    detect_gated,
    merge_gate_intervals,
)
from tripletsim.errors import ConfigError
from tripletsim.timetags import TagStream

SECOND = 10**12


def uniform_stream(n, duration, seed, channel=0):
    rng = np.random.default_rng(seed)
    ts = np.sort(rng.integers(0, duration, n).astype(np.uint64))
    return TagStream.single_channel(channel, ts, duration, presorted=True)


def ideal(mode="free_running", **kw):
    base = dict(efficiency=1.0, dark_rate_hz=0.0, dead_time_ps=0.0, jitter_sigma_ps=0.0)
    base.update(kw)
    return DetectorParams(mode=mode, **base)


def test_ideal_detector_is_identity():
    s = uniform_stream(10_000, SECOND, seed=1)
    out = detect_free(s, ideal(), seed=2)
    assert out == s


def test_dark_only_rate_matches_poisson_bound():
    empty = TagStream.empty(100 * SECOND)
    params = DetectorParams(efficiency=1.0, dark_rate_hz=400.0, dead_time_ps=0.0, jitter_sigma_ps=0.0)
    out = detect_free(empty, params, seed=3, channel=2)
    assert abs(len(out) - 40_000) <= 4 * math.sqrt(40_000)
    assert out.channel_set == {2}


def test_dead_time_hand_trace_two_tags_one_click():
    # tags 0.5 us apart with a 1 us dead time: only the first survives
    s = TagStream.single_channel(0, np.array([1_000_000, 1_500_000], np.uint64), SECOND, presorted=True)
    params = ideal(dead_time_ps=1_000_000.0)
    out = detect_free(s, params, seed=4)
    assert len(out) == 1
    assert int(out.timestamps[0]) == 1_000_000


def test_dead_time_invariant_holds_over_large_stream():
    s = uniform_stream(3_000_000, 10 * SECOND, seed=5)
    params = DetectorParams(efficiency=0.9, dark_rate_hz=1e4, dead_time_ps=1_000_000.0, jitter_sigma_ps=200.0)
    out = detect_free(s, params, seed=6)
    assert len(out) > 1_000_000
    gaps = np.diff(out.timestamps.astype(np.int64))
    assert gaps.min() >= 1_000_000


def test_thinning_bound_over_20_seeds():
    n = 20_000
    s = uniform_stream(n, SECOND, seed=7)
    eff, dark = 0.3, 1000.0
    expected = n * eff + dark
    sigma = math.sqrt(expected)
    counts = [
        len(detect_free(s, DetectorParams(efficiency=eff, dark_rate_hz=dark, dead_time_ps=0.0, jitter_sigma_ps=0.0), seed=s_))
        for s_ in range(20)
    ]
    mean = float(np.mean(counts))
    assert mean <= expected + 4 * sigma / math.sqrt(20)
    assert abs(mean - expected) <= 4 * sigma / math.sqrt(20)


def test_raising_efficiency_never_drops_a_signal_click():
    s = uniform_stream(50_000, SECOND, seed=8)
    lo = detect_free(s, ideal(efficiency=0.2), seed=9)
    hi = detect_free(s, ideal(efficiency=0.6), seed=9)
    assert set(lo.timestamps.tolist()) <= set(hi.timestamps.tolist())


def test_jitter_keeps_stream_sorted_and_in_range():
    s = uniform_stream(100_000, SECOND, seed=10)
    out = detect_free(s, ideal(jitter_sigma_ps=300.0), seed=11)
    ts = out.timestamps
    assert np.all(ts[1:] >= ts[:-1])
    assert int(ts.max()) <= SECOND


def test_detect_free_rejects_gated_params():
    with pytest.raises(ConfigError):
        detect_free(TagStream.empty(SECOND), ideal(mode="gated"), seed=1)


# --- gated detection ------------------------------------------------------------------


def gate(delay=0.0, width=10_000.0, dark=0.0):
    return GateParams(gate_delay_ps=delay, gate_width_ps=width, dark_prob_per_gate=dark)


def test_no_triggers_means_no_clicks():
    s = uniform_stream(10_000, SECOND, seed=12)
    out = detect_gated(s, TagStream.empty(SECOND), ideal(mode="gated"), gate(), seed=13)
    assert len(out) == 0


def test_single_gate_detects_tag_inside():
    s = TagStream.single_channel(2, np.array([5_000], np.uint64), SECOND, presorted=True)
    triggers = TagStream.single_channel(3, np.array([0], np.uint64), SECOND, presorted=True)
    out = detect_gated(s, triggers, ideal(mode="gated"), gate(width=10_000.0), seed=14)
    assert out.tags[0].timestamp_ps == 5_000


def test_gated_emits_nothing_outside_gate_union():
    duration = SECOND
    s = uniform_stream(200_000, duration, seed=15, channel=2)
    triggers = uniform_stream(2_000, duration, seed=16, channel=3)
    g = gate(delay=2_000.0, width=50_000.0, dark=0.01)
    out = detect_gated(s, triggers, ideal(mode="gated"), g, seed=17)
    starts, ends = merge_gate_intervals(
        triggers.timestamps.astype(np.int64) + 2_000,
        triggers.timestamps.astype(np.int64) + 52_000,
    )
    t = out.timestamps.astype(np.int64)
    idx = np.searchsorted(starts, t, side="right") - 1
    inside = (idx >= 0) & (t <= ends[np.clip(idx, 0, len(ends) - 1)])
    assert inside.all()


def test_overlapping_gates_merge_single_detection():
    s = TagStream.single_channel(2, np.array([7_000], np.uint64), SECOND, presorted=True)
    triggers = TagStream.single_channel(
        3, np.array([0, 3_000], np.uint64), SECOND, presorted=True
    )
    out = detect_gated(s, triggers, ideal(mode="gated"), gate(width=10_000.0), seed=18)
    assert len(out) == 1


def test_gated_coincidence_rate_matches_efficiency_product():
    # simultaneous pairs at D3 (gated, eta3) and D4 (free running, eta4):
    # gated-click rate = pair rate * eta3 * eta4
    duration = 100 * SECOND
    n_pairs = 200_000
    rng = np.random.default_rng(19)
    t = np.sort(rng.integers(0, duration, n_pairs).astype(np.uint64))
    s3 = TagStream.single_channel(2, t, duration, presorted=True)
    s4 = TagStream.single_channel(3, t, duration, presorted=True)
    eta3, eta4 = 0.4, 0.25
    d4 = detect_free(s4, ideal(efficiency=eta4), seed=20)
    g = gate(delay=-5_000.0, width=10_000.0)
    clicks = detect_gated(s3, d4, ideal(mode="gated", efficiency=eta3), g, seed=21)
    expected = n_pairs * eta3 * eta4
    assert abs(len(clicks) - expected) <= 4 * math.sqrt(expected)


def test_gate_dark_probability_controls_gate_darks():
    duration = SECOND
    triggers = uniform_stream(50_000, duration, seed=22, channel=3)
    g = gate(width=1_000.0, dark=0.05)
    out = detect_gated(TagStream.empty(duration), triggers, ideal(mode="gated"), g, seed=23)
    expected = 50_000 * 0.05
    assert abs(len(out) - expected) <= 4 * math.sqrt(expected)


def test_gated_dead_time_applies_across_gates():
    duration = SECOND
    t = np.array([100_000, 400_000], np.uint64)
    s = TagStream.single_channel(2, t, duration, presorted=True)
    triggers = TagStream.single_channel(3, t, duration, presorted=True)
    params = ideal(mode="gated", dead_time_ps=1_000_000.0)
    out = detect_gated(s, triggers, params, gate(delay=-1_000.0, width=2_000.0), seed=24)
    assert len(out) == 1
