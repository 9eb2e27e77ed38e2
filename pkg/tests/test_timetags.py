import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tripletsim.errors import ConfigError, FormatError
from tripletsim.timetags import (
    HEADER_SIZE,
    RECORD_SIZE,
    TagStream,
    TimeTag,
    merge_streams,
    read_tags,
    write_tags,
)


def make_stream(pairs, duration):
    ch = np.array([c for c, _ in pairs], dtype=np.uint8)
    ts = np.array([t for _, t in pairs], dtype=np.uint64)
    return TagStream(ch, ts, duration)


def sorted_oracle(streams):
    """Independent ordering oracle: python stable sort on (timestamp, channel)."""
    flat = []
    for s in streams:
        flat.extend(zip(s.timestamps.tolist(), s.channels.tolist()))
    return sorted(flat, key=lambda tc: (tc[0], tc[1]))


def test_merge_two_empty_streams_is_empty():
    out = merge_streams([TagStream.empty(1000), TagStream.empty(1000)])
    assert len(out) == 0
    assert out.duration_ps == 1000


def test_merge_two_singletons_sorts():
    a = make_stream([(0, 100)], 1000)
    b = make_stream([(1, 50)], 1000)
    out = merge_streams([a, b])
    assert out.tags == [TimeTag(50, 1), TimeTag(100, 0)]


def test_merge_matches_sort_oracle_on_large_random_split():
    rng = np.random.default_rng(7)
    n = 100_000
    duration = 10**9
    ts = rng.integers(0, duration, n).astype(np.uint64)
    ch = rng.integers(0, 4, n).astype(np.uint8)
    parts = []
    assign = rng.integers(0, 4, n)
    for k in range(4):
        m = assign == k
        parts.append(TagStream(ch[m], ts[m], duration))
    merged = merge_streams(parts)
    oracle = sorted_oracle(parts)
    assert merged.timestamps.tolist() == [t for t, _ in oracle]
    assert merged.channels.tolist() == [c for _, c in oracle]
    assert merged.channel_set == {0, 1, 2, 3}


def test_merge_rejects_mismatched_durations():
    with pytest.raises(ConfigError):
        merge_streams([TagStream.empty(10), TagStream.empty(20)])


tag_lists = st.lists(
    st.tuples(st.integers(0, 5), st.integers(0, 500)), min_size=0, max_size=40
)


@settings(max_examples=100, deadline=None)
@given(tag_lists, tag_lists, tag_lists)
def test_merge_associative_and_commutative_as_multiset(pa, pb, pc):
    dur = 501
    a, b, c = (make_stream(p, dur) for p in (pa, pb, pc))
    left = merge_streams([merge_streams([a, b]), c])
    right = merge_streams([a, merge_streams([b, c])])
    assert left == right
    ab = merge_streams([a, b])
    ba = merge_streams([b, a])
    # commutes up to the tie-break; with (t, ch)-distinct tags it is exact
    assert sorted_oracle([ab]) == sorted_oracle([ba])


def test_stream_invariant_rejects_tag_beyond_duration():
    with pytest.raises(ConfigError):
        make_stream([(0, 1001)], 1000)


def test_unsorted_input_gets_canonical_order():
    s = make_stream([(3, 50), (1, 50), (0, 200), (2, 50)], 1000)
    assert s.tags == [TimeTag(50, 1), TimeTag(50, 2), TimeTag(50, 3), TimeTag(200, 0)]


def test_write_empty_stream_is_header_only_and_round_trips():
    buf = io.BytesIO()
    s = TagStream.empty(12345)
    n = write_tags(s, buf)
    assert n == HEADER_SIZE == len(buf.getvalue())
    assert read_tags(io.BytesIO(buf.getvalue())) == s


def test_single_tag_record_round_trips():
    # 356 800 ps: a typical herald-to-signal cable delay used as a timestamp
    s = make_stream([(3, 356_800)], 10**9)
    buf = io.BytesIO()
    n = write_tags(s, buf)
    assert n == HEADER_SIZE + RECORD_SIZE
    back = read_tags(io.BytesIO(buf.getvalue()))
    assert back == s
    assert back.tags == [TimeTag(356_800, 3)]


def test_large_random_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    n = 1_000_000
    duration = 2**40
    ts = np.sort(rng.integers(0, duration, n).astype(np.uint64))
    ch = rng.integers(0, 8, n).astype(np.uint8)
    s = TagStream(ch, ts, duration)
    path = tmp_path / "big.ttag"
    write_tags(s, path)
    assert read_tags(path) == s


def test_write_read_identity_preserves_file_bytes(tmp_path):
    # a valid file that is timestamp-sorted but not channel-tie-broken
    raw = io.BytesIO()
    write_tags(make_stream([(0, 10), (1, 10)], 100), raw)
    data = bytearray(raw.getvalue())
    # swap the two records (same timestamp, channels 1 then 0)
    data[24:36], data[36:48] = data[36:48], data[24:36]
    stream = read_tags(io.BytesIO(bytes(data)))
    out = io.BytesIO()
    write_tags(stream, out)
    assert out.getvalue() == bytes(data)


def test_read_rejects_bad_magic():
    raw = b"NOTATTAG" + b"\x00" * 16
    with pytest.raises(FormatError) as err:
        read_tags(io.BytesIO(raw))
    assert err.value.byte_offset == 0


def test_read_rejects_truncated_record():
    buf = io.BytesIO()
    write_tags(make_stream([(0, 1), (0, 2)], 10), buf)
    raw = buf.getvalue()[:-5]
    with pytest.raises(FormatError) as err:
        read_tags(io.BytesIO(raw))
    assert err.value.byte_offset == HEADER_SIZE + RECORD_SIZE


def test_read_rejects_non_monotonic_timestamps():
    buf = io.BytesIO()
    write_tags(make_stream([(0, 5), (0, 9)], 10), buf)
    data = bytearray(buf.getvalue())
    data[24:36], data[36:48] = data[36:48], data[24:36]
    with pytest.raises(FormatError) as err:
        read_tags(io.BytesIO(bytes(data)))
    assert err.value.byte_offset == HEADER_SIZE + RECORD_SIZE


@settings(max_examples=60, deadline=None)
@given(tag_lists)
def test_round_trip_property(pairs):
    s = make_stream(pairs, 512)
    buf = io.BytesIO()
    write_tags(s, buf)
    assert read_tags(io.BytesIO(buf.getvalue())) == s


def test_filter_channel():
    s = make_stream([(0, 1), (1, 2), (0, 3)], 10)
    only0 = s.filter_channel(0)
    assert only0.tags == [TimeTag(1, 0), TimeTag(3, 0)]
    assert only0.duration_ps == 10
