"""Emission-time generators for the cascaded pair source.

The first stage is a collinear Raman pair source in a hot vapour cell:
pair emissions form a homogeneous Poisson process, signal 1 (channel 0)
is emitted at the pair time and signal 2 (channel 1) follows after a
fixed optical offset plus an exponential tail whose constant is the
two-photon correlation time.  The second stage converts signal-2
photons in a nonlinear waveguide: each photon independently splits into
a signal-3/signal-4 pair (channels 2 and 3) with a small conversion
probability and a few-ps relative jitter.

All measured quantities here are intensity correlations, so the cascade
is realized as a classical branching point process; the microscopic
coupling amplitudes are absorbed into ``pair_rate_hz`` and
``conversion_efficiency``.

Empirical dependences are table-driven: the detuning dependence of the
pair rate, the temperature dependence of the correlation time, and the
pump-detuning shift of the pair delay each interpolate a user-extendable
anchor table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .rng import substream
from .timetags import TagStream

CH_S1, CH_S2, CH_S3, CH_S4 = 0, 1, 2, 3

# Detected signal-2 singles per mW of pump-1 power, keyed by two-photon
# detuning in MHz.  The two anchors correspond to the measured operating
# points (6e6/s at 850 MHz with 115 mW and 1e6/s at 1570 MHz with 50 mW);
# extend the table to trace the full detuning curve.
DEFAULT_DETUNING_TABLE: dict[float, float] = {
    850.0: 6e6 / 115.0,
    1570.0: 1e6 / 50.0,
}

# Correlation time in ps versus cell temperature in Celsius.  Higher
# temperature narrows the photon bandwidth, so the correlation time grows.
# Only the 86 C anchor (15 ns) is load-bearing; the rest is a smooth
# monotone default.
DEFAULT_TEMPERATURE_TABLE: dict[float, float] = {
    60.0: 9_000.0,
    70.0: 11_000.0,
    80.0: 13_500.0,
    86.0: 15_000.0,
    92.0: 16_800.0,
    100.0: 19_000.0,
}


def _finite(name, value):
    if not math.isfinite(value):
        raise ConfigError(f"{name} must be finite, got {value}")
    return float(value)


@dataclass
class SourceParams:
    """Raman pair-source parameters (rates in Hz, times in ps)."""

    pair_rate_hz: float = 0.0
    two_photon_detuning_mhz: float = 850.0
    pump1_detuning_ghz: float = 0.8
    pump1_power_mw: float = 115.0
    pump2_power_mw: float = 12.5
    cell_temperature_c: float = 86.0
    correlation_time_ps: float = 15_000.0
    pair_delay_offset_ps: float = 26_000.0
    noise_rate_s1_hz: float = 0.0
    noise_rate_s2_hz: float = 0.0
    s2_collection_efficiency: float = 0.70

    def validate(self):
        _finite("pair_rate_hz", self.pair_rate_hz)
        if self.pair_rate_hz < 0:
            raise ConfigError("pair_rate_hz must be >= 0")
        if _finite("correlation_time_ps", self.correlation_time_ps) <= 0:
            raise ConfigError("correlation_time_ps must be > 0")
        if _finite("pair_delay_offset_ps", self.pair_delay_offset_ps) < 0:
            raise ConfigError("pair_delay_offset_ps must be >= 0")
        for name in ("noise_rate_s1_hz", "noise_rate_s2_hz"):
            if _finite(name, getattr(self, name)) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if _finite("pump1_power_mw", self.pump1_power_mw) <= 0:
            raise ConfigError("pump1_power_mw must be > 0")
        if _finite("pump2_power_mw", self.pump2_power_mw) <= 0:
            raise ConfigError("pump2_power_mw must be > 0")
        if not 0 < self.s2_collection_efficiency <= 1:
            raise ConfigError("s2_collection_efficiency must be in (0, 1]")


@dataclass
class SpdcParams:
    """Waveguide down-conversion parameters.

    ``coherence_time_ps`` sets the temporal cell of the multimode thermal
    bunching used by the coherent-pump mode; it has no effect on the
    triggered conversion of Raman photons.
    """

    conversion_efficiency: float = 1e-6
    pair_jitter_ps: float = 10.0
    coherent_pump_rate_hz: float = 0.0
    mode_count: int = 50
    coherence_time_ps: float = 100_000.0

    def validate(self):
        if not 0 <= _finite("conversion_efficiency", self.conversion_efficiency) <= 1:
            raise ConfigError("conversion_efficiency must be in [0, 1]")
        if _finite("pair_jitter_ps", self.pair_jitter_ps) < 0:
            raise ConfigError("pair_jitter_ps must be >= 0")
        if _finite("coherent_pump_rate_hz", self.coherent_pump_rate_hz) < 0:
            raise ConfigError("coherent_pump_rate_hz must be >= 0")
        if int(self.mode_count) < 1:
            raise ConfigError("mode_count must be >= 1")
        if _finite("coherence_time_ps", self.coherence_time_ps) <= 0:
            raise ConfigError("coherence_time_ps must be > 0")


def _poisson_times(rng, rate_hz, duration_ps):
    """Homogeneous Poisson arrival times in integer ps, sorted."""
    mean = rate_hz * duration_ps * 1e-12
    n = int(rng.poisson(mean)) if mean > 0 else 0
    if n == 0:
        return np.empty(0, np.int64)
    t = rng.integers(0, duration_ps, size=n, dtype=np.int64)
    t.sort()
    return t


def generate_srs(params: SourceParams, duration_ps: int, seed: int):
    """Generate one run of correlated (signal 1, signal 2) emission streams.

    Pair times are Poisson at ``pair_rate_hz``; each signal-2 partner is
    delayed by ``pair_delay_offset_ps`` plus an exponential draw with
    constant ``correlation_time_ps``.  Each channel additionally carries
    its own uncorrelated Poisson background.  Partners delayed past the
    end of the run are dropped.
    """
    params.validate()
    duration_ps = int(duration_ps)
    if duration_ps <= 0:
        raise ConfigError("duration_ps must be > 0")
    floor = 10.0 * (params.pair_delay_offset_ps + params.correlation_time_ps)
    if duration_ps <= floor:
        raise ConfigError(
            f"duration_ps {duration_ps} too short; needs > {floor:.0f} ps "
            "(10x pair delay scale)"
        )

    t1 = _poisson_times(substream(seed, "srs.pairs"), params.pair_rate_hz, duration_ps)
    n = t1.size
    delay_rng = substream(seed, "srs.s2_delay")
    tails = delay_rng.exponential(params.correlation_time_ps, size=n)
    offset = int(round(params.pair_delay_offset_ps))
    t2 = t1 + offset + np.rint(tails).astype(np.int64)
    t2 = t2[(t2 >= 0) & (t2 <= duration_ps)]
    t2.sort()

    noise1 = _poisson_times(substream(seed, "srs.noise.s1"), params.noise_rate_s1_hz, duration_ps)
    noise2 = _poisson_times(substream(seed, "srs.noise.s2"), params.noise_rate_s2_hz, duration_ps)

    s1 = _merge_sorted_channel(CH_S1, t1, noise1, duration_ps)
    s2 = _merge_sorted_channel(CH_S2, t2, noise2, duration_ps)
    return s1, s2


def _merge_sorted_channel(channel, a, b, duration_ps):
    if b.size == 0:
        t = a
    elif a.size == 0:
        t = b
    else:
        t = np.concatenate([a, b])
        t.sort(kind="stable")
    return TagStream.single_channel(channel, t.astype(np.uint64), duration_ps, presorted=True)


def pair_rate_model(
    detuning_mhz: float,
    pump1_power_mw: float,
    *,
    table: dict[float, float] | None = None,
    collection_efficiency: float = 0.70,
    detector_efficiency: float = 0.10,
) -> float:
    """Generated pair rate (Hz) at a two-photon detuning and pump-1 power.

    The table maps detuning to *detected* signal-2 singles per mW; the
    generated rate divides out the collection and detector efficiencies.
    Linear in power, piecewise-linear between table knots, no
    extrapolation outside them.
    """
    detected = detected_s2_singles(detuning_mhz, pump1_power_mw, table=table)
    return detected / (collection_efficiency * detector_efficiency)


def detected_s2_singles(
    detuning_mhz: float,
    pump1_power_mw: float,
    *,
    table: dict[float, float] | None = None,
) -> float:
    """Predicted detected signal-2 singles rate (Hz) after all losses."""
    table = DEFAULT_DETUNING_TABLE if table is None else table
    if not table:
        raise ConfigError("empty detuning table")
    knots = np.array(sorted(table), dtype=float)
    per_mw = np.array([table[k] for k in knots], dtype=float)
    d = _finite("detuning_mhz", detuning_mhz)
    if d < knots[0] or d > knots[-1]:
        raise ConfigError(
            f"detuning {d} MHz outside table range [{knots[0]}, {knots[-1]}]"
        )
    if _finite("pump1_power_mw", pump1_power_mw) <= 0:
        raise ConfigError("pump1_power_mw must be > 0")
    return float(np.interp(d, knots, per_mw)) * pump1_power_mw


def correlation_time_model(
    temperature_c: float, *, table: dict[float, float] | None = None
) -> float:
    """Pair correlation time (ps) at a cell temperature.

    Hotter cell, narrower photon bandwidth, longer correlation time; any
    supplied table must be monotone non-decreasing.  Linear interpolation
    between knots, no extrapolation.
    """
    table = DEFAULT_TEMPERATURE_TABLE if table is None else table
    if not table:
        raise ConfigError("empty temperature table")
    knots = np.array(sorted(table), dtype=float)
    taus = np.array([table[k] for k in knots], dtype=float)
    if np.any(np.diff(taus) < 0):
        raise ConfigError("temperature table must be monotone non-decreasing")
    t = _finite("temperature_c", temperature_c)
    if t < knots[0] or t > knots[-1]:
        raise ConfigError(
            f"temperature {t} C outside table range [{knots[0]}, {knots[-1]}]"
        )
    return float(np.interp(t, knots, taus))


def fwm_delay_model(
    pump1_detuning_ghz: float,
    *,
    slope_ps_per_ghz: float = 0.0,
    reference_detuning_ghz: float = 0.8,
) -> float:
    """Additive shift (ps) of the pair delay from the pump-1 detuning.

    The four-wave-mixing slow-light delay moves the coincidence window
    when pump 1 is detuned; the default slope of zero leaves the window
    untouched.
    """
    return slope_ps_per_ghz * (
        _finite("pump1_detuning_ghz", pump1_detuning_ghz) - reference_detuning_ghz
    )


def spdc_convert(s2: TagStream, params: SpdcParams, seed: int):
    """Convert a signal-2 stream into (signal 3, signal 4) pair streams.

    Each input tag converts independently with ``conversion_efficiency``;
    both daughters inherit the parent time plus independent Gaussian
    jitter of ``pair_jitter_ps``.  Multi-pair emission is not modelled
    (double conversion is quadratically suppressed at realistic
    efficiencies); use :func:`spdc_coherent` for the multi-pair regime.
    """
    params.validate()
    u = substream(seed, "spdc.convert").random(len(s2))
    keep = u < params.conversion_efficiency
    t = s2.timestamps[keep].astype(np.int64)
    duration = s2.duration_ps
    if params.pair_jitter_ps > 0 and t.size:
        j3 = substream(seed, "spdc.jitter.s3").normal(0.0, params.pair_jitter_ps, t.size)
        j4 = substream(seed, "spdc.jitter.s4").normal(0.0, params.pair_jitter_ps, t.size)
        t3 = np.clip(t + np.rint(j3).astype(np.int64), 0, duration)
        t4 = np.clip(t + np.rint(j4).astype(np.int64), 0, duration)
        t3.sort()
        t4.sort()
    else:
        t3 = t
        t4 = t.copy()
    s3 = TagStream.single_channel(CH_S3, t3.astype(np.uint64), duration, presorted=True)
    s4 = TagStream.single_channel(CH_S4, t4.astype(np.uint64), duration, presorted=True)
    return s3, s4


_COHERENT_SLOT_CHUNK = 4_000_000  # fixed so the draw sequence never depends on run length


def spdc_coherent(params: SpdcParams, duration_ps: int, seed: int):
    """Pair streams for a coherent pump driving the waveguide.

    Pair events arrive at ``coherent_pump_rate_hz * conversion_efficiency``
    with multimode thermal counting statistics: time is tiled into cells
    of ``coherence_time_ps`` and per-cell pair numbers are negative
    binomial with ``mode_count`` modes, which makes each single arm's
    zero-delay auto-correlation 1 + 1/mode_count before detection.
    """
    params.validate()
    duration_ps = int(duration_ps)
    if params.coherent_pump_rate_hz <= 0:
        raise ConfigError("coherent_pump_rate_hz must be > 0 for coherent mode")
    if duration_ps <= 0:
        raise ConfigError("duration_ps must be > 0")

    cell = int(round(params.coherence_time_ps))
    n_slots = (duration_ps + cell - 1) // cell
    mu = params.coherent_pump_rate_hz * params.conversion_efficiency * cell * 1e-12
    m = int(params.mode_count)
    p = m / (m + mu)

    counts_rng = substream(seed, "spdc.coherent.counts")
    times_rng = substream(seed, "spdc.coherent.times")
    chunks = []
    for start in range(0, n_slots, _COHERENT_SLOT_CHUNK):
        size = min(_COHERENT_SLOT_CHUNK, n_slots - start)
        counts = counts_rng.negative_binomial(m, p, size=size) if mu > 0 else np.zeros(size, np.int64)
        total = int(counts.sum())
        if total == 0:
            continue
        base = (start + np.arange(size, dtype=np.int64)) * cell
        t = np.repeat(base, counts) + times_rng.integers(0, cell, size=total, dtype=np.int64)
        chunks.append(t)
    t = np.concatenate(chunks) if chunks else np.empty(0, np.int64)
    t = t[t <= duration_ps]
    t.sort()

    if params.pair_jitter_ps > 0 and t.size:
        j3 = substream(seed, "spdc.jitter.s3").normal(0.0, params.pair_jitter_ps, t.size)
        j4 = substream(seed, "spdc.jitter.s4").normal(0.0, params.pair_jitter_ps, t.size)
        t3 = np.clip(t + np.rint(j3).astype(np.int64), 0, duration_ps)
        t4 = np.clip(t + np.rint(j4).astype(np.int64), 0, duration_ps)
        t3.sort()
        t4.sort()
    else:
        t3 = t
        t4 = t.copy()
    s3 = TagStream.single_channel(CH_S3, t3.astype(np.uint64), duration_ps, presorted=True)
    s4 = TagStream.single_channel(CH_S4, t4.astype(np.uint64), duration_ps, presorted=True)
    return s3, s4
