"""Single-photon detector models.

Converts ideal emission streams into click streams with detection
efficiency, Gaussian timing jitter, Poisson dark counts, and a
non-paralyzable dead time (the standard behaviour of the InGaAs SPADs
modelled here).  A gated mode arms the detector only inside windows
triggered by another detector's clicks, the way D3 is slaved to D4
through a delay generator.

Detection thinning draws one uniform per input tag before anything
else, so raising the efficiency with the same seed only ever adds
clicks (coupled sampling).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ConfigError
from .rng import substream
from .timetags import TagStream

FREE_RUNNING = "free_running"
GATED = "gated"


@dataclass
class DetectorParams:
    """One detector arm; efficiency is the full coupling x quantum product."""

    efficiency: float = 0.10
    dark_rate_hz: float = 400.0
    dead_time_ps: float = 1_000_000.0
    jitter_sigma_ps: float = 200.0
    mode: str = FREE_RUNNING

    def validate(self):
        if not 0 <= self.efficiency <= 1 or not math.isfinite(self.efficiency):
            raise ConfigError("efficiency must be in [0, 1]")
        if self.dark_rate_hz < 0 or not math.isfinite(self.dark_rate_hz):
            raise ConfigError("dark_rate_hz must be >= 0")
        if self.dead_time_ps < 0 or not math.isfinite(self.dead_time_ps):
            raise ConfigError("dead_time_ps must be >= 0")
        if self.jitter_sigma_ps < 0 or not math.isfinite(self.jitter_sigma_ps):
            raise ConfigError("jitter_sigma_ps must be >= 0")
        if self.mode not in (FREE_RUNNING, GATED):
            raise ConfigError(f"unknown detector mode {self.mode!r}")


@dataclass
class GateParams:
    """Trigger-driven gate: open [t + delay, t + delay + width] per trigger.

    The delay is the delay-generator setting; it may be negative in
    simulation, where it simply expresses that the gated photon path is
    shorter than the trigger path.  Overlapping gates merge into one
    open interval.
    """

    gate_delay_ps: float = 0.0
    gate_width_ps: float = 100_000.0
    dark_prob_per_gate: float = 1e-5

    def validate(self):
        if self.gate_width_ps <= 0 or not math.isfinite(self.gate_width_ps):
            raise ConfigError("gate_width_ps must be > 0")
        if not math.isfinite(self.gate_delay_ps):
            raise ConfigError("gate_delay_ps must be finite")
        if not 0 <= self.dark_prob_per_gate <= 1:
            raise ConfigError("dark_prob_per_gate must be in [0, 1]")


@njit(cache=True)
def _dead_time_mask(times, dead_ps):
    """Non-paralyzable dead time: accept a click iff the previous accepted
    click is at least dead_ps earlier."""
    n = times.size
    keep = np.zeros(n, np.bool_)
    last = -np.int64(2) ** 62
    for i in range(n):
        if times[i] - last >= dead_ps:
            keep[i] = True
            last = times[i]
    return keep


def apply_dead_time(times: np.ndarray, dead_time_ps: float) -> np.ndarray:
    """Filter sorted int64 click times through a non-paralyzable dead time."""
    if dead_time_ps <= 0 or times.size == 0:
        return times
    keep = _dead_time_mask(times, np.int64(round(dead_time_ps)))
    return times[keep]


def _poisson_clicks(rng, rate_hz, duration_ps):
    mean = rate_hz * duration_ps * 1e-12
    n = int(rng.poisson(mean)) if mean > 0 else 0
    if n == 0:
        return np.empty(0, np.int64)
    t = rng.integers(0, duration_ps, size=n, dtype=np.int64)
    t.sort()
    return t


def detect_free(
    stream: TagStream, params: DetectorParams, seed: int, *, channel: int | None = None
) -> TagStream:
    """Free-running detection of one emission stream.

    Thinning by efficiency, then timing jitter, then dark clicks, then
    the dead-time filter over the combined candidates.  Tags jittered
    outside the run are dropped.  ``channel`` labels the click stream
    when the input is empty (dark-only runs).
    """
    params.validate()
    if params.mode != FREE_RUNNING:
        raise ConfigError("detect_free requires mode=free_running")
    duration = stream.duration_ps
    rng = substream(seed, "detector.free")

    u = rng.random(len(stream))
    t = stream.timestamps[u < params.efficiency].astype(np.int64)
    if params.jitter_sigma_ps > 0 and t.size:
        t = t + np.rint(rng.normal(0.0, params.jitter_sigma_ps, t.size)).astype(np.int64)
        t = t[(t >= 0) & (t <= duration)]
        t.sort()

    dark = _poisson_clicks(rng, params.dark_rate_hz, duration)
    if dark.size:
        t = np.concatenate([t, dark])
        t.sort(kind="stable")

    t = apply_dead_time(t, params.dead_time_ps)
    if channel is None:
        channel = int(stream.channels[0]) if len(stream) else 0
    return TagStream.single_channel(channel, t.astype(np.uint64), duration, presorted=True)


def merge_gate_intervals(starts: np.ndarray, ends: np.ndarray):
    """Merge overlapping closed intervals (inputs sorted by start)."""
    if starts.size == 0:
        return starts, ends
    keep_start = [starts[0]]
    keep_end = [ends[0]]
    for s, e in zip(starts[1:], ends[1:]):
        if s <= keep_end[-1]:
            if e > keep_end[-1]:
                keep_end[-1] = e
        else:
            keep_start.append(s)
            keep_end.append(e)
    return np.array(keep_start, np.int64), np.array(keep_end, np.int64)


def detect_gated(
    stream: TagStream,
    triggers: TagStream,
    params: DetectorParams,
    gate: GateParams,
    seed: int,
    *,
    channel: int | None = None,
) -> TagStream:
    """Gated detection: clicks only while a trigger-opened gate is live.

    Every trigger at t opens the closed window
    [t + gate_delay, t + gate_delay + gate_width]; overlapping windows
    merge.  Tags inside an open window are detected with the arm
    efficiency, each original gate adds a dark click with
    ``dark_prob_per_gate`` at a uniform position, and the dead time runs
    across gate boundaries.  Recorded times are the arrival times: the
    gate decides acceptance, so no jitter is applied and no click can
    fall outside a gate.
    """
    params.validate()
    gate.validate()
    if params.mode != GATED:
        raise ConfigError("detect_gated requires mode=gated")
    duration = stream.duration_ps
    if triggers.duration_ps != duration:
        raise ConfigError("stream and trigger durations differ")
    rng = substream(seed, "detector.gated")

    delay = int(round(gate.gate_delay_ps))
    width = int(round(gate.gate_width_ps))
    tt = triggers.timestamps.astype(np.int64)
    starts, ends = merge_gate_intervals(tt + delay, tt + delay + width)

    # per-tag uniforms drawn unconditionally keeps thinning coupled
    u = rng.random(len(stream))
    t = stream.timestamps.astype(np.int64)
    if starts.size:
        idx = np.searchsorted(starts, t, side="right") - 1
        in_gate = (idx >= 0) & (t <= ends[np.clip(idx, 0, len(ends) - 1)])
    else:
        in_gate = np.zeros(t.size, bool)
    t = t[in_gate & (u < params.efficiency)]

    if gate.dark_prob_per_gate > 0 and tt.size:
        fire = rng.random(tt.size) < gate.dark_prob_per_gate
        pos = rng.random(tt.size)  # one draw per gate, used only where fired
        dark = tt[fire] + delay + np.rint(pos[fire] * width).astype(np.int64)
        dark = dark[(dark >= 0) & (dark <= duration)]
        if dark.size:
            t = np.concatenate([t, dark])
            t.sort(kind="stable")

    t = t[(t >= 0) & (t <= duration)]
    t = apply_dead_time(t, params.dead_time_ps)
    if channel is None:
        channel = int(stream.channels[0]) if len(stream) else 0
    return TagStream.single_channel(channel, t.astype(np.uint64), duration, presorted=True)
