"""Bit-exact wire codec for data and control packets.

Every datagram starts with the same fixed 32-byte big-endian header:

    | Offset | Size | Field               |
    |--------|------|---------------------|
    | 0      | 2    | magic (0x564C)      |
    | 2      | 1    | version (0x01)      |
    | 3      | 1    | packet_type         |
    | 4      | 1    | flags               |
    | 5      | 1    | stream_id           |
    | 6      | 4    | frame_id            |
    | 10     | 2    | segment_index       |
    | 12     | 2    | packet_seq          |
    | 14     | 2    | packets_in_segment  |
    | 16     | 2    | payload_length      |
    | 18     | 8    | send_timestamp (ns) |
    | 26     | 6    | reserved (zero)     |

The payload directly follows the header and must be exactly
``payload_length`` bytes. Decoders reject any nonzero reserved bytes so a
mutated header can never silently alias a valid packet.

Control packets reuse the header; their payloads are:

    NACK       u16 range_count, then per range: u16 segment_index,
               u16 seq_start, u16 seq_end (inclusive; seq_end == 0 requests
               the whole segment when the packet count is unknown)
    FRAME_ACK  empty (frame_id in the header)
    SYNC_REQ / SYNC_RESP
               four u64 timestamps t1..t4 (unknown values zero)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum

from .errors import CodecError
from .frames import DataPacket

MAGIC = 0x564C
VERSION = 0x01
HEADER_SIZE = 32

_HEADER = struct.Struct(">HBBBBIHHHHQ6s")
_NACK_COUNT = struct.Struct(">H")
_NACK_RANGE = struct.Struct(">HHH")
_SYNC_BODY = struct.Struct(">QQQQ")

# Flag bits carried on data packets.
FLAG_FINAL_SEGMENT = 0x01   # packet belongs to the frame's last segment
FLAG_END_OF_STREAM = 0x02   # packet belongs to the stream's last frame


class PacketType(IntEnum):
    DATA = 0x01
    NACK = 0x02
    FRAME_ACK = 0x03
    SYNC_REQ = 0x04
    SYNC_RESP = 0x05


@dataclass(frozen=True, slots=True)
class ControlPacket:
    """NACK / FRAME_ACK / SYNC_REQ / SYNC_RESP message.

    ``ranges`` is only meaningful for NACK: sorted, non-overlapping,
    non-empty (segment_index, seq_start, seq_end) triples. ``t1``..``t4``
    are only meaningful for sync packets.
    """

    packet_type: PacketType
    stream_id: int
    frame_id: int = 0
    ranges: tuple[tuple[int, int, int], ...] = ()
    t1: int = 0
    t2: int = 0
    t3: int = 0
    t4: int = 0
    send_timestamp: int = 0
    flags: int = 0


def _validate_nack_ranges(ranges) -> None:
    if not ranges:
        raise CodecError("ranges: NACK must carry at least one range")
    prev = None
    for seg, lo, hi in ranges:
        if seg < 1:
            raise CodecError(f"ranges: segment_index must be >= 1, got {seg}")
        if lo < 1:
            raise CodecError(f"ranges: seq_start must be >= 1, got {lo}")
        if hi != 0 and hi < lo:
            raise CodecError(f"ranges: seq_end {hi} precedes seq_start {lo}")
        if prev is not None:
            pseg, plo, phi = prev
            if (seg, lo) <= (pseg, plo):
                raise CodecError("ranges: must be sorted by (segment, seq_start)")
            if seg == pseg and (phi == 0 or lo <= phi):
                raise CodecError("ranges: overlapping ranges within a segment")
        prev = (seg, lo, hi)


def encode_packet(packet: DataPacket | ControlPacket) -> bytes:
    """Serialize a packet; ``decode_packet`` inverts this exactly."""
    if isinstance(packet, DataPacket):
        body = bytes(packet.payload)
        header = _HEADER.pack(
            MAGIC, VERSION, PacketType.DATA, packet.flags & 0xFF,
            packet.stream_id & 0xFF, packet.frame_id,
            packet.segment_index, packet.packet_seq,
            packet.packets_in_segment, len(body),
            packet.send_timestamp, b"\x00" * 6,
        )
        return header + body
    if packet.packet_type == PacketType.NACK:
        _validate_nack_ranges(packet.ranges)
        body = _NACK_COUNT.pack(len(packet.ranges)) + b"".join(
            _NACK_RANGE.pack(seg, lo, hi) for seg, lo, hi in packet.ranges
        )
    elif packet.packet_type in (PacketType.SYNC_REQ, PacketType.SYNC_RESP):
        body = _SYNC_BODY.pack(packet.t1, packet.t2, packet.t3, packet.t4)
    elif packet.packet_type == PacketType.FRAME_ACK:
        body = b""
    else:
        raise CodecError(f"packet_type: cannot encode {packet.packet_type!r}")
    header = _HEADER.pack(
        MAGIC, VERSION, int(packet.packet_type), packet.flags & 0xFF,
        packet.stream_id & 0xFF, packet.frame_id,
        0, 0, 0, len(body), packet.send_timestamp, b"\x00" * 6,
    )
    return header + body


def decode_packet(buf: bytes | memoryview) -> DataPacket | ControlPacket:
    """Parse one datagram; raises ``CodecError`` naming the bad field."""
    buf = memoryview(buf)
    if len(buf) < HEADER_SIZE:
        raise CodecError(f"buffer: {len(buf)} bytes is shorter than the {HEADER_SIZE}-byte header")
    (magic, version, ptype, flags, stream_id, frame_id, seg_idx, pkt_seq,
     pkts_in_seg, payload_len, send_ts, reserved) = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise CodecError(f"magic: expected {MAGIC:#06x}, got {magic:#06x}")
    if version != VERSION:
        raise CodecError(f"version: unsupported version {version}")
    if reserved != b"\x00" * 6:
        raise CodecError("reserved: nonzero reserved bytes")
    if len(buf) - HEADER_SIZE != payload_len:
        raise CodecError(
            f"payload_length: header says {payload_len}, buffer carries {len(buf) - HEADER_SIZE}"
        )
    body = buf[HEADER_SIZE:]
    try:
        ptype = PacketType(ptype)
    except ValueError:
        raise CodecError(f"packet_type: unknown type {ptype:#04x}") from None

    if ptype == PacketType.DATA:
        if seg_idx < 1:
            raise CodecError("segment_index: must be >= 1 for data packets")
        if not 1 <= pkt_seq <= pkts_in_seg:
            raise CodecError(
                f"packet_seq: {pkt_seq} outside 1..{pkts_in_seg}"
            )
        return DataPacket(
            stream_id=stream_id, frame_id=frame_id, segment_index=seg_idx,
            packet_seq=pkt_seq, packets_in_segment=pkts_in_seg,
            payload=bytes(body), send_timestamp=send_ts, flags=flags,
        )

    if seg_idx or pkt_seq or pkts_in_seg:
        raise CodecError("segment_index: must be zero on control packets")
    if ptype == PacketType.NACK:
        if len(body) < _NACK_COUNT.size:
            raise CodecError("ranges: NACK body shorter than range count")
        (count,) = _NACK_COUNT.unpack_from(body, 0)
        expect = _NACK_COUNT.size + count * _NACK_RANGE.size
        if len(body) != expect:
            raise CodecError(f"ranges: body is {len(body)} bytes, expected {expect}")
        ranges = tuple(
            _NACK_RANGE.unpack_from(body, _NACK_COUNT.size + i * _NACK_RANGE.size)
            for i in range(count)
        )
        _validate_nack_ranges(ranges)
        return ControlPacket(
            packet_type=ptype, stream_id=stream_id, frame_id=frame_id,
            ranges=ranges, send_timestamp=send_ts, flags=flags,
        )
    if ptype in (PacketType.SYNC_REQ, PacketType.SYNC_RESP):
        if len(body) != _SYNC_BODY.size:
            raise CodecError(f"timestamps: sync body is {len(body)} bytes, expected {_SYNC_BODY.size}")
        t1, t2, t3, t4 = _SYNC_BODY.unpack(body)
        return ControlPacket(
            packet_type=ptype, stream_id=stream_id, frame_id=frame_id,
            t1=t1, t2=t2, t3=t3, t4=t4, send_timestamp=send_ts, flags=flags,
        )
    # FRAME_ACK
    if len(body):
        raise CodecError("payload_length: FRAME_ACK carries no payload")
    return ControlPacket(
        packet_type=ptype, stream_id=stream_id, frame_id=frame_id,
        send_timestamp=send_ts, flags=flags,
    )
