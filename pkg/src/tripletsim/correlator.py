"""Coincidence histograms, normalized correlations, and SNR.

The engine bins delays t_b - t_a between two sorted click streams with
a windowed two-pointer sweep (searchsorted ranges, never the full
quadratic pairing), then normalizes peak counts by the singles-based
accidental level R_a * R_b * bin_width * duration.  Auto-correlations
use a virtual 50/50 splitter: each click is assigned to a sub-channel
by a seeded fair coin, which is equivalent to a physical splitter for
click statistics but inherits the physical detector's dead time, so
zero-delay structure inside the dead time is not observable (pass an
exclusion window to read the correlation just outside it).

All binning is integer arithmetic in ps: bin k spans
[min + k*w, min + (k+1)*w).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AnalysisError, ConfigError
from .rng import substream
from .timetags import TagStream

_CHUNK = 65_536
_MAX_INT64 = np.iinfo(np.int64).max


@dataclass(frozen=True)
class HistogramSpec:
    """Delay-histogram geometry between two channels."""

    bin_width_ps: int
    range_min_ps: int
    range_max_ps: int
    channel_a: int = 0
    channel_b: int = 1

    def __post_init__(self):
        if self.bin_width_ps <= 0:
            raise ConfigError("bin_width_ps must be > 0")
        if self.range_max_ps <= self.range_min_ps:
            raise ConfigError("range_max_ps must exceed range_min_ps")
        if (self.range_max_ps - self.range_min_ps) % self.bin_width_ps:
            raise ConfigError("bin width must divide the delay range")

    @property
    def n_bins(self) -> int:
        return (self.range_max_ps - self.range_min_ps) // self.bin_width_ps

    def edges(self) -> np.ndarray:
        return self.range_min_ps + self.bin_width_ps * np.arange(self.n_bins + 1, dtype=np.int64)

    def centers(self) -> np.ndarray:
        e = self.edges()
        return (e[:-1] + e[1:]) // 2

    def bins_overlapping(self, lo_ps: int, hi_ps: int) -> np.ndarray:
        """Indices of bins intersecting [lo_ps, hi_ps)."""
        if hi_ps <= lo_ps:
            return np.empty(0, np.int64)
        first = max(0, (lo_ps - self.range_min_ps) // self.bin_width_ps)
        last = min(self.n_bins, -((self.range_min_ps - hi_ps) // self.bin_width_ps))
        if last <= first:
            return np.empty(0, np.int64)
        return np.arange(first, last, dtype=np.int64)


@dataclass
class CoincidenceHistogram:
    """Binned delay counts plus the singles totals that normalize them."""

    spec: HistogramSpec
    counts: np.ndarray
    singles_a: int
    singles_b: int
    duration_ps: int

    def accidental_per_bin(self) -> float:
        if self.duration_ps <= 0:
            raise AnalysisError("histogram has zero duration")
        return (
            self.singles_a
            * self.singles_b
            * self.spec.bin_width_ps
            / self.duration_ps
        )

    def to_csv(self, sink) -> None:
        """CSV export: bin_start_ps,bin_end_ps,count with LF endings."""
        edges = self.spec.edges()
        lines = ["bin_start_ps,bin_end_ps,count"]
        for i, c in enumerate(self.counts.tolist()):
            lines.append(f"{edges[i]},{edges[i + 1]},{c}")
        text = "\n".join(lines) + "\n"
        if hasattr(sink, "write"):
            sink.write(text)
        else:
            with open(sink, "w", newline="\n") as fh:
                fh.write(text)


@dataclass
class CorrelationResult:
    """A normalized g2/g3 value with Poisson-propagated uncertainty."""

    value: float
    stat_sigma: float
    delay_ps: int
    peak_counts: float
    accidental_estimate: float
    second_delay_ps: int | None = None
    baseline_estimate: float | None = None

    def as_value_sigma(self) -> tuple[float, float]:
        return self.value, self.stat_sigma


def _require_analysis_dtype(stream: TagStream):
    if len(stream) and int(stream.timestamps[-1]) > _MAX_INT64:
        raise ConfigError("timestamps beyond int64 range are not supported by analysis")


def cross_histogram(a: TagStream, b: TagStream, spec: HistogramSpec) -> CoincidenceHistogram:
    """Count pairs (t_a, t_b) with t_b - t_a inside each delay bin.

    Windowed sweep: for every a-tag the matching b-range is located with
    two binary searches, so cost scales with the tags plus the pairs
    actually inside the window.
    """
    if a.duration_ps != b.duration_ps:
        raise ConfigError("streams must share one duration")
    _require_analysis_dtype(a)
    _require_analysis_dtype(b)
    ta = a.timestamps.astype(np.int64)
    tb = b.timestamps.astype(np.int64)
    w = spec.bin_width_ps
    counts = np.zeros(spec.n_bins, dtype=np.int64)
    for start in range(0, ta.size, _CHUNK):
        chunk = ta[start : start + _CHUNK]
        lo = np.searchsorted(tb, chunk + spec.range_min_ps, side="left")
        hi = np.searchsorted(tb, chunk + spec.range_max_ps, side="left")
        n = hi - lo
        total = int(n.sum())
        if total == 0:
            continue
        seg = np.repeat(np.arange(chunk.size), n)
        offsets = np.arange(total) - np.repeat(np.cumsum(n) - n, n)
        delays = tb[lo[seg] + offsets] - chunk[seg]
        counts += np.bincount((delays - spec.range_min_ps) // w, minlength=spec.n_bins)
    return CoincidenceHistogram(
        spec=spec,
        counts=counts.astype(np.uint64),
        singles_a=len(a),
        singles_b=len(b),
        duration_ps=a.duration_ps,
    )


def brute_force_histogram(a: TagStream, b: TagStream, spec: HistogramSpec) -> np.ndarray:
    """Quadratic all-pairs reference counter (test oracle, kept independent
    of the swept implementation)."""
    ta = a.timestamps.astype(np.int64)
    tb = b.timestamps.astype(np.int64)
    counts = np.zeros(spec.n_bins, dtype=np.int64)
    for t in ta:
        d = tb - t
        d = d[(d >= spec.range_min_ps) & (d < spec.range_max_ps)]
        if d.size:
            counts += np.bincount(
                (d - spec.range_min_ps) // spec.bin_width_ps, minlength=spec.n_bins
            )
    return counts


def g2_from_histogram(
    h: CoincidenceHistogram,
    peak_bins,
    baseline_bins,
    *,
    use_baseline: bool = False,
) -> CorrelationResult:
    """Normalize a histogram into g2 = mean(peak counts) / accidental.

    The accidental level is the singles product R_a*R_b*width*T per bin;
    the far-wing baseline mean is reported alongside as a consistency
    estimate and substitutes the denominator only with ``use_baseline``.
    sigma = g * sqrt(1/N_peak + 1/N_accidental_estimate) where the
    accidental-estimate count basis is the singles product's effective
    count (1/N_a + 1/N_b), or the baseline total in baseline mode.
    """
    peak_bins = np.asarray(peak_bins, dtype=np.int64)
    baseline_bins = np.asarray(baseline_bins, dtype=np.int64)
    if peak_bins.size == 0 or baseline_bins.size == 0:
        raise AnalysisError("peak and baseline bin sets must be non-empty")
    if np.intersect1d(peak_bins, baseline_bins).size:
        raise AnalysisError("peak and baseline bin sets must be disjoint")
    if h.singles_a == 0 or h.singles_b == 0:
        raise AnalysisError("undefined correlation: empty stream")
    acc = h.accidental_per_bin()
    if acc <= 0:
        raise AnalysisError("undefined correlation: zero accidental level")

    counts = h.counts.astype(np.float64)
    n_peak = float(counts[peak_bins].sum())
    mean_peak = n_peak / peak_bins.size
    baseline_mean = float(counts[baseline_bins].mean())
    denominator = baseline_mean if use_baseline else acc
    if denominator <= 0:
        raise AnalysisError("undefined correlation: zero baseline")
    value = mean_peak / denominator

    if use_baseline:
        denom_rel_sq = 1.0 / float(counts[baseline_bins].sum())
    else:
        denom_rel_sq = 1.0 / h.singles_a + 1.0 / h.singles_b
    sigma = value * math.sqrt(1.0 / n_peak + denom_rel_sq) if n_peak > 0 else 0.0

    centers = h.spec.centers()
    best = peak_bins[int(np.argmax(counts[peak_bins]))]
    return CorrelationResult(
        value=value,
        stat_sigma=sigma,
        delay_ps=int(centers[best]),
        peak_counts=n_peak,
        accidental_estimate=acc,
        baseline_estimate=baseline_mean,
    )


def split_virtual(clicks: TagStream, seed: int) -> tuple[TagStream, TagStream]:
    """Assign each click to one of two sub-channels by a seeded fair coin."""
    coin = substream(seed, "correlator.virtual_splitter").integers(0, 2, len(clicks))
    heads = coin == 1
    dur = clicks.duration_ps
    a = TagStream(clicks.channels[~heads], clicks.timestamps[~heads], dur, presorted=True)
    b = TagStream(clicks.channels[heads], clicks.timestamps[heads], dur, presorted=True)
    return a, b


def g2_auto(
    clicks: TagStream,
    spec: HistogramSpec,
    seed: int,
    *,
    exclusion_ps: int = 0,
    peak_window_ps: int | None = None,
    guard_ps: int | None = None,
) -> tuple[CorrelationResult, CoincidenceHistogram]:
    """Auto-correlation through the virtual splitter.

    The peak window covers delays with exclusion <= |d| < exclusion + W
    on both sides (W defaults to one bin); for a detector with dead time
    pass ``exclusion_ps`` just past it, since the splitter cannot see
    inside.  Background bins sit beyond ``guard_ps`` (default twice the
    peak extent) and feed the baseline diagnostic only.
    """
    sub_a, sub_b = split_virtual(clicks, seed)
    h = cross_histogram(sub_a, sub_b, spec)
    w = spec.bin_width_ps
    window = peak_window_ps if peak_window_ps is not None else w
    peak = np.concatenate(
        [
            spec.bins_overlapping(-exclusion_ps - window, -exclusion_ps),
            spec.bins_overlapping(exclusion_ps, exclusion_ps + window),
        ]
    )
    peak = np.unique(peak)
    guard = guard_ps if guard_ps is not None else 2 * (exclusion_ps + window)
    baseline = np.concatenate(
        [
            spec.bins_overlapping(spec.range_min_ps, -guard),
            spec.bins_overlapping(guard, spec.range_max_ps),
        ]
    )
    baseline = np.setdiff1d(np.unique(baseline), peak)
    if baseline.size == 0:
        raise AnalysisError("auto-correlation range leaves no baseline bins")
    result = g2_from_histogram(h, peak, baseline)
    return result, h


def herald_coincidences(
    s3_clicks: TagStream, s4_clicks: TagStream, window_ps: int
) -> TagStream:
    """Signal-3 clicks with a signal-4 partner within +-window (closed on
    the low side, open on the high side); event time is the signal-3 click."""
    if s3_clicks.duration_ps != s4_clicks.duration_ps:
        raise ConfigError("streams must share one duration")
    t3 = s3_clicks.timestamps.astype(np.int64)
    t4 = s4_clicks.timestamps.astype(np.int64)
    lo = np.searchsorted(t4, t3 - window_ps, side="left")
    hi = np.searchsorted(t4, t3 + window_ps, side="left")
    has_partner = hi > lo
    return TagStream(
        s3_clicks.channels[has_partner],
        s3_clicks.timestamps[has_partner],
        s3_clicks.duration_ps,
        presorted=True,
    )


def triple_histogram(
    s1_clicks: TagStream,
    s3_gated_clicks: TagStream,
    s4_clicks: TagStream,
    window_ps: int,
    bin_width_ps: int,
    range_ps: tuple[int, int],
    *,
    peak_window_ps: int | None = None,
    background_guard_ps: int | None = None,
) -> tuple[CoincidenceHistogram, CorrelationResult]:
    """Triple-coincidence histogram and normalized g3.

    The signal-3 clicks are assumed already gated on signal 4; pairing
    them with a signal-4 click within ``window_ps`` defines the
    herald events whose delays against signal 1 are binned.  g3 is the
    peak-window mean over the accidental level R_s1 * R_herald * width * T.
    """
    heralds = herald_coincidences(s3_gated_clicks, s4_clicks, window_ps)
    if len(heralds) == 0:
        raise AnalysisError("undefined correlation: empty herald stream")
    spec = HistogramSpec(
        bin_width_ps=bin_width_ps,
        range_min_ps=range_ps[0],
        range_max_ps=range_ps[1],
        channel_a=int(s1_clicks.channels[0]) if len(s1_clicks) else 0,
        channel_b=int(s3_gated_clicks.channels[0]) if len(s3_gated_clicks) else 2,
    )
    h = cross_histogram(s1_clicks, heralds, spec)
    peak_idx = int(np.argmax(h.counts))
    if peak_window_ps is None:
        peak = np.array([peak_idx], dtype=np.int64)
    else:
        start = int(spec.edges()[peak_idx])
        peak = spec.bins_overlapping(start, start + peak_window_ps)
    guard = (
        background_guard_ps
        if background_guard_ps is not None
        else 2 * (peak_window_ps or bin_width_ps)
    )
    centers = spec.centers()
    peak_center = int(centers[peak_idx])
    background = np.setdiff1d(
        np.nonzero(np.abs(centers - peak_center) > guard)[0].astype(np.int64), peak
    )
    if background.size == 0:
        raise AnalysisError("triple histogram range leaves no background bins")
    result = g2_from_histogram(h, peak, background)
    result.second_delay_ps = 0
    return h, result


def snr(h: CoincidenceHistogram, peak_bins, background_bins) -> float:
    """max(peak bin counts) / mean(background bin counts).

    A zero background mean yields the +infinity sentinel (check with
    ``math.isinf``); measured backgrounds here are nonzero in practice.
    """
    peak_bins = np.asarray(peak_bins, dtype=np.int64)
    background_bins = np.asarray(background_bins, dtype=np.int64)
    if peak_bins.size == 0 or background_bins.size == 0:
        raise AnalysisError("peak and background bin sets must be non-empty")
    if np.intersect1d(peak_bins, background_bins).size:
        raise AnalysisError("peak and background bin sets must be disjoint")
    counts = h.counts.astype(np.float64)
    background_mean = float(counts[background_bins].mean())
    peak_max = float(counts[peak_bins].max())
    if background_mean == 0.0:
        return math.inf
    return peak_max / background_mean
