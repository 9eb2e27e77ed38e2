"""Time-tag event model, stream merging, and binary .ttag file I/O.

Timestamps are integer picoseconds since the start of the run, stored as
unsigned 64-bit counts (capping a run at roughly 213 days of virtual
time).  Integer picoseconds make delay histogramming exact and
platform-independent at the nanosecond delay scales this package works
at.

Canonical stream order is (timestamp, channel, insertion order); the
fixed tie-break keeps simulations bit-reproducible.  Files only
guarantee timestamp order, so reading preserves the exact record order
found on disk and ``read_tags(write_tags(s)) == s`` byte for byte.

Channel conventions used by the simulation pipeline:

* 0 - signal 1 (telecom Raman photon, detector D2)
* 1 - signal 2 (780 nm Raman photon before the waveguide, detector D1)
* 2 - signal 3 (down-converted, detector D3)
* 3 - signal 4 (down-converted, detector D4)
* 4+ - auxiliary
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError

TTAG_MAGIC = b"TTAGv01\x00"
HEADER_SIZE = 24
RECORD_SIZE = 12

_HEADER = struct.Struct("<8sQQ")
_RECORD_DTYPE = np.dtype(
    [("channel", "u1"), ("pad", "u1", (3,)), ("timestamp", "<u8")]
)
assert _RECORD_DTYPE.itemsize == RECORD_SIZE


@dataclass(frozen=True, order=True)
class TimeTag:
    """One emission or detection event.

    Ordering of TimeTag objects is (timestamp, channel), matching the
    canonical stream order.
    """

    timestamp_ps: int
    channel: int


class TagStream:
    """Immutable, time-ordered tag sequence over one run duration.

    Stored as a pair of numpy arrays (uint8 channels, uint64 picosecond
    timestamps).  Instances never mutate after construction and are safe
    to share across threads.
    """

    __slots__ = ("channels", "timestamps", "duration_ps")

    def __init__(self, channels, timestamps, duration_ps, *, presorted=False):
        ch = np.ascontiguousarray(channels, dtype=np.uint8)
        ts = np.ascontiguousarray(timestamps, dtype=np.uint64)
        if ch.ndim != 1 or ts.ndim != 1 or ch.shape != ts.shape:
            raise ConfigError("channels and timestamps must be 1-d arrays of equal length")
        duration_ps = int(duration_ps)
        if duration_ps < 0:
            raise ConfigError("duration_ps must be non-negative")
        if ts.size and int(ts.max()) > duration_ps:
            raise ConfigError(
                f"tag timestamp {int(ts.max())} exceeds duration_ps {duration_ps}"
            )
        if presorted:
            if ts.size > 1 and np.any(ts[1:] < ts[:-1]):
                raise ConfigError("presorted stream has decreasing timestamps")
            # never freeze a caller-owned buffer
            if ch is channels or ch.base is not None:
                ch = ch.copy()
            if ts is timestamps or ts.base is not None:
                ts = ts.copy()
        elif ts.size > 1:
            # lexsort is stable: full ties keep insertion order.
            order = np.lexsort((ch, ts))
            ch = ch[order]
            ts = ts[order]
        else:
            ch = ch.copy()
            ts = ts.copy()
        ch.flags.writeable = False
        ts.flags.writeable = False
        self_set = super().__setattr__
        self_set("channels", ch)
        self_set("timestamps", ts)
        self_set("duration_ps", duration_ps)

    def __setattr__(self, name, value):
        raise AttributeError("TagStream is immutable")

    @classmethod
    def empty(cls, duration_ps: int) -> "TagStream":
        return cls(np.empty(0, np.uint8), np.empty(0, np.uint64), duration_ps, presorted=True)

    @classmethod
    def from_tags(cls, tags, duration_ps: int) -> "TagStream":
        tags = list(tags)
        ch = np.array([t.channel for t in tags], dtype=np.uint8)
        ts = np.array([t.timestamp_ps for t in tags], dtype=np.uint64)
        return cls(ch, ts, duration_ps)

    @classmethod
    def single_channel(cls, channel: int, timestamps, duration_ps: int, *, presorted=False) -> "TagStream":
        ts = np.asarray(timestamps)
        ch = np.full(ts.shape, channel, dtype=np.uint8)
        return cls(ch, ts, duration_ps, presorted=presorted)

    def __len__(self) -> int:
        return int(self.timestamps.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TagStream):
            return NotImplemented
        return (
            self.duration_ps == other.duration_ps
            and np.array_equal(self.channels, other.channels)
            and np.array_equal(self.timestamps, other.timestamps)
        )

    def __repr__(self) -> str:
        return (
            f"TagStream(n={len(self)}, channels={sorted(self.channel_set)}, "
            f"duration_ps={self.duration_ps})"
        )

    @property
    def channel_set(self) -> set[int]:
        return set(int(c) for c in np.unique(self.channels))

    @property
    def tags(self) -> list[TimeTag]:
        """Materialize as TimeTag objects (intended for small streams)."""
        return [
            TimeTag(int(t), int(c))
            for t, c in zip(self.timestamps.tolist(), self.channels.tolist())
        ]

    def filter_channel(self, channel: int) -> "TagStream":
        mask = self.channels == channel
        return TagStream(
            self.channels[mask], self.timestamps[mask], self.duration_ps, presorted=True
        )


def merge_streams(streams) -> TagStream:
    """Merge streams sharing one duration into a single canonical stream.

    The output is the multiset union sorted by (timestamp, channel); tags
    equal in both keys keep argument order, so merge is associative and
    commutative up to that documented tie-break.
    """
    streams = list(streams)
    if not streams:
        raise ConfigError("merge_streams needs at least one stream")
    durations = {s.duration_ps for s in streams}
    if len(durations) != 1:
        raise ConfigError(f"mismatched stream durations: {sorted(durations)}")
    ch = np.concatenate([s.channels for s in streams])
    ts = np.concatenate([s.timestamps for s in streams])
    order = np.lexsort((ch, ts))
    return TagStream(ch[order], ts[order], durations.pop(), presorted=True)


def write_tags(stream: TagStream, sink) -> int:
    """Write a stream in .ttag format; returns the number of bytes written.

    Layout: 24-byte header (magic ``TTAGv01\\0``, little-endian uint64
    duration_ps, little-endian uint64 record count) followed by 12-byte
    records (uint8 channel, 3 zero pad bytes, little-endian uint64
    timestamp), in stream order.
    """
    n = len(stream)
    records = np.zeros(n, dtype=_RECORD_DTYPE)
    records["channel"] = stream.channels
    records["timestamp"] = stream.timestamps
    payload = _HEADER.pack(TTAG_MAGIC, stream.duration_ps, n) + records.tobytes()
    if isinstance(sink, (str, Path)):
        with open(sink, "wb") as fh:
            fh.write(payload)
    else:
        sink.write(payload)
    return len(payload)


def read_tags(source) -> TagStream:
    """Read a .ttag file back into a TagStream.

    Record order on disk is preserved exactly (files guarantee timestamp
    order only), so write_tags(read_tags(f)) reproduces f byte for byte.
    """
    if isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            raw = fh.read()
    else:
        raw = source.read()
    if len(raw) < HEADER_SIZE:
        raise FormatError("truncated header", byte_offset=len(raw))
    magic, duration_ps, count = _HEADER.unpack_from(raw, 0)
    if magic != TTAG_MAGIC:
        raise FormatError(f"bad magic {magic!r}", byte_offset=0)
    body = len(raw) - HEADER_SIZE
    if body != count * RECORD_SIZE:
        whole = body // RECORD_SIZE
        raise FormatError(
            f"expected {count} records, file holds {body} payload bytes",
            byte_offset=HEADER_SIZE + whole * RECORD_SIZE,
        )
    records = np.frombuffer(raw, dtype=_RECORD_DTYPE, count=count, offset=HEADER_SIZE)
    ts = records["timestamp"]
    if ts.size > 1:
        bad = np.nonzero(ts[1:] < ts[:-1])[0]
        if bad.size:
            i = int(bad[0]) + 1
            raise FormatError(
                "non-monotonic timestamps", byte_offset=HEADER_SIZE + i * RECORD_SIZE
            )
    if ts.size and int(ts.max()) > duration_ps:
        i = int(np.argmax(ts > duration_ps))
        raise FormatError(
            f"timestamp beyond duration_ps {duration_ps}",
            byte_offset=HEADER_SIZE + i * RECORD_SIZE,
        )
    return TagStream(records["channel"].copy(), ts.copy(), duration_ps, presorted=True)
