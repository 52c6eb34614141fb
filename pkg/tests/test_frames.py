import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from volstream.errors import ConfigError, InvalidFrameError
from volstream.frames import (DataPacket, Segment, VolumetricFrame,
                              make_synthetic_frame, packet_count,
                              packetize_segment, required_bandwidth_bps,
                              segment_frame)


def test_synthetic_frame_reference_section_sizes():
    # 1.4 MB color + 2.1 MB depth + 200 KB audio, decimal units
    frame = make_synthetic_frame(1, 1_400_000, 2_100_000, 200_000, seed=7)
    assert frame.size == 3_700_000
    assert len(frame.payload) == 3_700_000


def test_synthetic_frame_rejects_all_empty_sections():
    with pytest.raises(InvalidFrameError):
        make_synthetic_frame(7, 0, 0, 0, seed=1)


def test_synthetic_frame_section_sum():
    frame = make_synthetic_frame(2, 100, 200, 300, seed=1)
    assert frame.size == 600


def test_synthetic_frame_is_pure():
    a = make_synthetic_frame(5, 1000, 2000, 300, seed=42)
    b = make_synthetic_frame(5, 1000, 2000, 300, seed=42)
    assert a.payload == b.payload
    c = make_synthetic_frame(6, 1000, 2000, 300, seed=42)
    assert c.payload != a.payload
    d = make_synthetic_frame(5, 1000, 2000, 300, seed=43)
    assert d.payload != a.payload


def test_frame_invariants():
    with pytest.raises(InvalidFrameError):
        VolumetricFrame(1, 10, 0, 0, payload=b"x" * 9)
    with pytest.raises(InvalidFrameError):
        VolumetricFrame(1, 3, 0, 0, payload=b"abc", capture_start=10, capture_end=5)
    with pytest.raises(InvalidFrameError):
        VolumetricFrame(1, -1, 2, 0, payload=b"x")


def test_segment_counts_for_reference_frame_size():
    frame = make_synthetic_frame(1, 3_520_000, 0, 0, seed=1)
    segs = segment_frame(frame, 65_000)
    assert len(segs) == 55                       # ceil(3_520_000 / 65_000)
    assert len(segs[-1].payload) == 10_000
    assert all(len(s.payload) == 65_000 for s in segs[:-1])


def test_segment_exact_fit_and_remainder():
    frame = make_synthetic_frame(1, 65_000, 0, 0, seed=1)
    assert len(segment_frame(frame, 65_000)) == 1
    frame = make_synthetic_frame(1, 65_001, 0, 0, seed=1)
    segs = segment_frame(frame, 65_000)
    assert len(segs) == 2 and len(segs[1].payload) == 1


def test_segment_zero_size_is_config_error():
    frame = make_synthetic_frame(1, 10, 0, 0, seed=1)
    with pytest.raises(ConfigError):
        segment_frame(frame, 0)


def _segment_of(payload: bytes, index=1, count=1):
    return Segment(frame_id=1, segment_index=index, segment_count=count,
                   payload=payload)


def test_packetize_counts():
    seg = _segment_of(b"a" * 65_000)
    assert len(packetize_segment(seg, 1_400)) == 47    # ceil(65000/1400)
    assert len(packetize_segment(seg, 452)) == 144     # ceil(65000/452)
    assert len(packetize_segment(_segment_of(b"x"), 1_400)) == 1
    assert packet_count(65_000, 452) == 144


def test_packetize_zero_size_is_config_error():
    with pytest.raises(ConfigError):
        packetize_segment(_segment_of(b"abc"), 0)


def test_packetize_concatenation_restores_segment():
    seg = _segment_of(bytes(range(256)) * 20)
    packets = packetize_segment(seg, 300)
    assert b"".join(bytes(p.payload) for p in packets) == seg.payload
    for i, p in enumerate(packets):
        assert p.packet_seq == i + 1
        assert p.packets_in_segment == len(packets)


@settings(max_examples=30, deadline=None)
@given(
    length=st.integers(min_value=1, max_value=10_000_000),
    seg_size=st.integers(min_value=1, max_value=200_000),
    pkt_size=st.integers(min_value=1, max_value=9_000),
)
def test_reassembly_identity(length, seg_size, pkt_size):
    # full segment -> packet -> concatenate round trip over random geometry
    payload = (b"\x5a\xc3\x01\xfe" * ((length + 3) // 4))[:length]
    frame = VolumetricFrame(1, length, 0, 0, payload=payload)
    out = []
    segs = segment_frame(frame, seg_size)
    assert len(segs) == -(-length // seg_size)
    for seg in segs:
        for p in packetize_segment(seg, pkt_size):
            out.append(p.payload)
    assert b"".join(bytes(v) for v in out) == payload


def test_segment_and_packet_index_bounds():
    with pytest.raises(InvalidFrameError):
        Segment(frame_id=1, segment_index=0, segment_count=3, payload=b"x")
    with pytest.raises(InvalidFrameError):
        Segment(frame_id=1, segment_index=4, segment_count=3, payload=b"x")
    with pytest.raises(InvalidFrameError):
        DataPacket(stream_id=1, frame_id=1, segment_index=1, packet_seq=0,
                   packets_in_segment=2, payload=b"x")


def test_required_bandwidth_for_reference_stream():
    bw = required_bandwidth_bps(3_520_000, 30)
    assert bw == pytest.approx(844_800_000, rel=1e-9)
    with pytest.raises(ConfigError):
        required_bandwidth_bps(0, 30)
