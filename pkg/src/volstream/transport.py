"""Sender and receiver endpoints of the reliable-datagram protocol.

Each endpoint is a single-owner state machine driven by explicit events
(send request, packet arrival, timer); nothing here spawns threads or owns
sockets, so the same state machines back both the virtual-clock simulation
and the real-socket runner.

Sender side: frames are segmented, packetized, and emitted through a rate
pacer; emission instants are planned arithmetically and each packet carries
a send timestamp from its actual emission instant. Recently sent frames are
retained so NACKs can be answered; retransmissions share the same pacer and
get fresh timestamps.

Receiver side: packets are tracked per segment as covered seq intervals
(duplicates are idempotent), gaps trigger NACKs after a persistence delay or
a frame-tail timeout for a bounded number of rounds, and a frame is handed
upward exactly once, when every packet of every segment has arrived. The
per-frame receive log keeps first/last arrival and the embedded timestamp of
the earliest-arriving packet, which is what the one-way delay metrics use.

Timing conventions: a frame's send span runs from the first packet's
emission start to the last packet's pacer serialization end, so at zero
configured per-packet overhead it equals payload_bits / pacing_rate exactly.
Receive spans run between arrival instants, and include retransmitted
arrivals; retransmissions never extend the recorded send span (they are
counted separately).
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

from .clock import NodeClock
from .errors import ConfigError, TransportError
from .frames import VolumetricFrame, segment_frame
from .wire import (FLAG_END_OF_STREAM, FLAG_FINAL_SEGMENT, HEADER_SIZE,
                   ControlPacket, PacketType)
from .pacing import RatePacer


@dataclass(slots=True)
class SegmentBurst:
    """A planned emission of contiguous packets of one segment."""

    frame_id: int
    segment_index: int
    packets_in_segment: int
    seq_start: int
    count: int
    payload: object            # buffer covering seqs [seq_start, seq_start+count-1]
    packet_payload_size: int
    emissions: list            # true-time ns per packet
    stamps: list               # sender-local ns per packet
    wire_bytes: list           # datagram size incl header, per packet
    flags: int = 0
    retransmit: bool = False

    def iter_packets(self, stream_id: int):
        """Materialize (emission_ns, DataPacket) pairs; used by socket mode."""
        from .frames import DataPacket

        view = memoryview(self.payload)
        pps = self.packet_payload_size
        for i in range(self.count):
            yield self.emissions[i], DataPacket(
                stream_id=stream_id,
                frame_id=self.frame_id,
                segment_index=self.segment_index,
                packet_seq=self.seq_start + i,
                packets_in_segment=self.packets_in_segment,
                payload=bytes(view[i * pps:(i + 1) * pps]),
                send_timestamp=self.stamps[i],
                flags=self.flags,
            )


@dataclass(slots=True)
class SendLogEntry:
    frame_id: int
    first_send_ns: int = 0            # sender-local, first packet emission start
    last_send_end_ns: int = 0         # sender-local, last packet pacer-serialization end
    first_send_true_ns: int = 0
    last_send_end_true_ns: int = 0
    packet_count: int = 0
    retransmit_count: int = 0
    payload_len: int = 0
    payload_checksum: int = 0

    @property
    def send_span_ns(self) -> int:
        return self.last_send_end_ns - self.first_send_ns


@dataclass(slots=True)
class RecvLogEntry:
    frame_id: int
    first_recv_ns: int = 0            # receiver-local
    last_recv_ns: int = 0
    first_recv_true_ns: int = 0
    last_recv_true_ns: int = 0
    embedded_first_send_ts: int = 0   # sender-local stamp of earliest arrival
    complete_ns: int = 0              # receiver-local time the frame completed
    complete_true_ns: int = 0
    packets_received: int = 0
    duplicates: int = 0
    nack_count: int = 0
    payload_len: int = 0
    payload_checksum: int = 0
    end_of_stream: bool = False

    @property
    def recv_span_ns(self) -> int:
        return self.last_recv_ns - self.first_recv_ns


@dataclass(slots=True)
class ReceiveEvent:
    kind: str                         # stored | duplicate | late | frame_complete | nack_emitted
    frame_id: int
    log: RecvLogEntry | None = None
    payload: bytes | None = None
    ranges: tuple = ()


class SenderEndpoint:
    """Paced, retention-backed sending side of one stream hop."""

    def __init__(
        self,
        stream_id: int,
        pacing_rate_bps: int,
        clock: NodeClock,
        segment_payload_size: int = 65_000,
        packet_payload_size: int = 1_400,
        overhead_bits_per_packet: int = 0,
        retention_frames: int = 8,
        max_frame_bytes: int = 64_000_000,
        compute_crc: bool = True,
    ):
        if packet_payload_size < 1 or segment_payload_size < 1:
            raise ConfigError("segment and packet payload sizes must be >= 1")
        if overhead_bits_per_packet < 0:
            raise ConfigError("overhead_bits_per_packet must be >= 0")
        if retention_frames < 1:
            raise ConfigError("retention_frames must be >= 1")
        self.stream_id = stream_id
        self.clock = clock
        self.pacer = RatePacer(pacing_rate_bps)
        self.segment_payload_size = segment_payload_size
        self.packet_payload_size = packet_payload_size
        self.overhead_bits = overhead_bits_per_packet
        self.retention_frames = retention_frames
        self.max_frame_bytes = max_frame_bytes
        self.compute_crc = compute_crc
        self.send_log: dict[int, SendLogEntry] = {}
        self.packets_sent = 0
        self.packets_retransmitted = 0
        self.stale_nacks = 0
        self.frames_acked = 0
        self._retained: dict[int, dict] = {}   # frame_id -> {seg_idx: (payload, n, flags)}
        self._last_frame_id: int | None = None
        self._closed = False

    def close(self) -> None:
        self._closed = True

    @property
    def pacing_rate_bps(self) -> int:
        return self.pacer.rate_bps

    def _plan_burst(self, now_true, frame_id, seg_idx, n_in_seg, seq_start, count,
                    payload, flags, retransmit):
        pps = self.packet_payload_size
        seg_len = len(payload)
        overhead = self.overhead_bits
        last_plen = seg_len - (seq_start - 2 + count) * pps
        if last_plen > pps:
            last_plen = pps
        wire = [HEADER_SIZE + pps] * count
        wire[-1] = HEADER_SIZE + last_plen

        # Inlined pacer arithmetic: after the first packet the bucket is
        # always draining, so only the first emission can rebase to `now`.
        pacer = self.pacer
        rate = pacer.rate_bps
        base = pacer._base_ns
        bits = pacer._bits
        start = base + (bits * 1_000_000_000) // rate
        if now_true > start:
            base, bits, start = now_true, 0, now_true
        emissions = [0] * count
        full_bits = pps * 8 + overhead
        for i in range(count - 1):
            emissions[i] = base + (bits * 1_000_000_000) // rate
            bits += full_bits
        emissions[count - 1] = base + (bits * 1_000_000_000) // rate
        bits += last_plen * 8 + overhead
        pacer._base_ns = base
        pacer._bits = bits

        clk = self.clock
        if clk.true_offset_ns == 0 and clk.drift_ppm == 0:
            stamps = emissions
        else:
            local = clk.local_from_true
            stamps = [local(e) for e in emissions]
        view = memoryview(payload)[(seq_start - 1) * pps:(seq_start - 1 + count) * pps]
        return SegmentBurst(
            frame_id=frame_id, segment_index=seg_idx, packets_in_segment=n_in_seg,
            seq_start=seq_start, count=count, payload=view,
            packet_payload_size=pps, emissions=emissions, stamps=stamps,
            wire_bytes=wire, flags=flags, retransmit=retransmit,
        )

    def send_frame(self, frame: VolumetricFrame, now_true_ns: int,
                   end_of_stream: bool = False) -> list[SegmentBurst]:
        """Plan the paced emission of every packet of ``frame``, in order.

        Returns one burst per segment; packets are emitted in
        (segment_index, packet_seq) order and the send log records the span
        from the first emission start to the last pacer-serialization end.
        """
        if self._closed:
            raise TransportError("emission channel closed")
        if frame.size > self.max_frame_bytes:
            raise TransportError(
                f"frame {frame.frame_id} is {frame.size} bytes, max {self.max_frame_bytes}"
            )
        if self._last_frame_id is not None and frame.frame_id != self._last_frame_id + 1:
            raise TransportError(
                f"frame_id must increase by 1: got {frame.frame_id} after {self._last_frame_id}"
            )
        self._last_frame_id = frame.frame_id

        segments = segment_frame(frame, self.segment_payload_size)
        pps = self.packet_payload_size
        eos = FLAG_END_OF_STREAM if end_of_stream else 0
        bursts = []
        retained = {}
        for seg in segments:
            n = -(-len(seg.payload) // pps)
            flags = eos | (FLAG_FINAL_SEGMENT if seg.segment_index == seg.segment_count else 0)
            burst = self._plan_burst(now_true_ns, frame.frame_id, seg.segment_index,
                                     n, 1, n, seg.payload, flags, retransmit=False)
            bursts.append(burst)
            retained[seg.segment_index] = (seg.payload, n, flags)
            self.packets_sent += n

        entry = SendLogEntry(
            frame_id=frame.frame_id,
            first_send_ns=bursts[0].stamps[0],
            last_send_end_ns=self.clock.local_from_true(self.pacer.busy_until_ns),
            first_send_true_ns=bursts[0].emissions[0],
            last_send_end_true_ns=self.pacer.busy_until_ns,
            packet_count=sum(b.count for b in bursts),
            payload_len=frame.size,
            payload_checksum=zlib.adler32(frame.payload) if self.compute_crc else 0,
        )
        self.send_log[frame.frame_id] = entry
        self._retained[frame.frame_id] = retained
        self._evict()
        return bursts

    def send_segment(self, frame_id: int, segment_index: int, payload,
                     now_true_ns: int, is_final: bool = False,
                     end_of_stream: bool = False) -> SegmentBurst:
        """Plan the paced emission of one segment (relay forwarding path).

        Unlike ``send_frame``, segments of different frames may interleave;
        the per-frame send log aggregates the earliest emission and the
        latest serialization end across its segments.
        """
        if self._closed:
            raise TransportError("emission channel closed")
        n = -(-len(payload) // self.packet_payload_size)
        flags = (FLAG_FINAL_SEGMENT if is_final else 0) | (FLAG_END_OF_STREAM if end_of_stream else 0)
        burst = self._plan_burst(now_true_ns, frame_id, segment_index, n, 1, n,
                                 payload, flags, retransmit=False)
        self.packets_sent += n
        end_true = self.pacer.busy_until_ns
        entry = self.send_log.get(frame_id)
        if entry is None:
            entry = SendLogEntry(
                frame_id=frame_id,
                first_send_ns=burst.stamps[0],
                first_send_true_ns=burst.emissions[0],
            )
            self.send_log[frame_id] = entry
            self._retained[frame_id] = {}
            self._evict()
        elif burst.emissions[0] < entry.first_send_true_ns:
            entry.first_send_true_ns = burst.emissions[0]
            entry.first_send_ns = burst.stamps[0]
        if end_true > entry.last_send_end_true_ns:
            entry.last_send_end_true_ns = end_true
            entry.last_send_end_ns = self.clock.local_from_true(end_true)
        entry.packet_count += n
        entry.payload_len += len(payload)
        if frame_id in self._retained:
            self._retained[frame_id][segment_index] = (payload, n, flags)
        return burst

    def _evict(self) -> None:
        while len(self._retained) > self.retention_frames:
            self._retained.pop(next(iter(self._retained)))

    def retransmit(self, nack: ControlPacket, now_true_ns: int) -> list[SegmentBurst]:
        """Re-emit the packets a NACK asks for, paced under the same limiter.

        NACKs for frames that fell out of the retention window count as
        stale and emit nothing. Re-emitted packets carry fresh timestamps.
        """
        if self._closed:
            raise TransportError("emission channel closed")
        if nack.packet_type != PacketType.NACK:
            raise TransportError(f"expected NACK, got {nack.packet_type!r}")
        retained = self._retained.get(nack.frame_id)
        if retained is None:
            self.stale_nacks += 1
            return []
        bursts = []
        for seg_idx, lo, hi in nack.ranges:
            if seg_idx not in retained:
                continue
            payload, n, flags = retained[seg_idx]
            if hi == 0 or hi > n:
                hi = n
            if lo > n:
                continue
            count = hi - lo + 1
            burst = self._plan_burst(now_true_ns, nack.frame_id, seg_idx, n,
                                     lo, count, payload, flags, retransmit=True)
            bursts.append(burst)
            self.packets_retransmitted += count
        if nack.frame_id in self.send_log:
            self.send_log[nack.frame_id].retransmit_count += sum(b.count for b in bursts)
        return bursts

    def on_frame_ack(self, ack: ControlPacket) -> None:
        self.frames_acked += 1


class _SegmentState:
    __slots__ = ("expected", "covered", "pieces", "length", "complete_true_ns")

    def __init__(self, expected: int):
        self.expected = expected
        self.covered: list[list[int]] = []     # merged [lo, hi] pairs
        self.pieces: list[tuple] = []          # (lo, hi, buffer view)
        self.length = 0
        self.complete_true_ns = 0

    def missing(self) -> list[tuple[int, int]]:
        gaps = []
        nxt = 1
        for lo, hi in self.covered:
            if lo > nxt:
                gaps.append((nxt, lo - 1))
            nxt = hi + 1
        if nxt <= self.expected:
            gaps.append((nxt, self.expected))
        return gaps

    @property
    def is_complete(self) -> bool:
        return len(self.covered) == 1 and self.covered[0][0] == 1 and self.covered[0][1] == self.expected

    def add(self, lo: int, hi: int, view, pps: int) -> tuple[int, int]:
        """Insert run [lo, hi]; returns (stored, duplicate) packet counts."""
        new_parts = []
        cursor = lo
        for clo, chi in self.covered:
            if chi < cursor:
                continue
            if clo > hi:
                break
            if clo > cursor:
                new_parts.append((cursor, min(clo - 1, hi)))
            cursor = max(cursor, chi + 1)
            if cursor > hi:
                break
        if cursor <= hi:
            new_parts.append((cursor, hi))
        stored = sum(b - a + 1 for a, b in new_parts)
        dup = (hi - lo + 1) - stored
        for a, b in new_parts:
            piece = view[(a - lo) * pps:(b - lo + 1) * pps]
            self.pieces.append((a, b, piece))
            self.length += len(piece)
        if new_parts:
            merged = []
            todo = sorted(self.covered + [list(p) for p in new_parts])
            for lo2, hi2 in todo:
                if merged and lo2 <= merged[-1][1] + 1:
                    if hi2 > merged[-1][1]:
                        merged[-1][1] = hi2
                else:
                    merged.append([lo2, hi2])
            self.covered = merged
        return stored, dup

    def assemble(self) -> bytes:
        self.pieces.sort(key=lambda p: p[0])
        return b"".join(p[2] for p in self.pieces)


class _FrameState:
    __slots__ = ("frame_id", "segments", "segment_count", "first_arr_true",
                 "first_arr_local", "first_stamp", "last_arr_true", "last_arr_local",
                 "packets", "duplicates", "nack_rounds", "nack_count",
                 "gap_deadline", "tail_deadline", "drop_deadline", "end_of_stream",
                 "seg_payloads", "max_seen_seg", "incomplete")

    def __init__(self, frame_id: int):
        self.frame_id = frame_id
        self.segments: dict[int, _SegmentState] = {}
        self.segment_count: int | None = None
        self.first_arr_true: int | None = None
        self.first_arr_local = 0
        self.first_stamp = 0
        self.last_arr_true = 0
        self.last_arr_local = 0
        self.packets = 0
        self.duplicates = 0
        self.nack_rounds = 0
        self.nack_count = 0
        self.gap_deadline: int | None = None
        self.tail_deadline: int | None = None
        self.drop_deadline: int | None = None
        self.end_of_stream = False
        self.seg_payloads: dict[int, bytes] = {}
        self.max_seen_seg = 0
        self.incomplete: set[int] = set()

    def is_complete(self) -> bool:
        if self.segment_count is None or len(self.seg_payloads) != self.segment_count:
            return False
        return True

    def has_gap(self) -> bool:
        """Cheap check: is anything visibly missing behind the reception front?"""
        if self.max_seen_seg > len(self.segments):
            return True
        for idx in self.incomplete:
            if idx < self.max_seen_seg:
                return True
            cov = self.segments[idx].covered
            if cov and (cov[0][0] != 1 or len(cov) > 1):
                return True
        return False

    def missing_ranges(self) -> tuple[tuple[int, int, int], ...]:
        ranges = []
        known = self.segments
        top = self.segment_count or (max(known) if known else 0)
        for idx in range(1, top + 1):
            seg = known.get(idx)
            if seg is None:
                ranges.append((idx, 1, 0))  # whole segment, count unknown
                continue
            for lo, hi in seg.missing():
                ranges.append((idx, lo, hi))
        return tuple(ranges)

    def next_deadline(self) -> int | None:
        candidates = [d for d in (self.gap_deadline, self.tail_deadline, self.drop_deadline)
                      if d is not None]
        return min(candidates) if candidates else None


class ReceiverEndpoint:
    """Reassembling, NACK-emitting receiving side of one stream hop."""

    def __init__(
        self,
        stream_id: int,
        clock: NodeClock,
        nack_delay_ns: int = 2_000_000,
        tail_timeout_ns: int = 5_000_000,
        max_nack_rounds: int = 3,
        deadline_ns: int = 66_600_000,   # 0 disables the deadline
        retain_payloads: bool = False,
        compute_crc: bool = True,
        on_segment=None,
        on_frame=None,
    ):
        if nack_delay_ns < 0 or tail_timeout_ns < 0 or deadline_ns < 0:
            raise ConfigError("receiver timeouts must be >= 0")
        if max_nack_rounds < 0:
            raise ConfigError("max_nack_rounds must be >= 0")
        self.stream_id = stream_id
        self.clock = clock
        self.nack_delay_ns = nack_delay_ns
        self.tail_timeout_ns = tail_timeout_ns
        self.max_nack_rounds = max_nack_rounds
        self.deadline_ns = deadline_ns
        self.retain_payloads = retain_payloads
        self.compute_crc = compute_crc
        self.on_segment = on_segment
        self.on_frame = on_frame
        self.recv_log: dict[int, RecvLogEntry] = {}
        self.payloads: dict[int, bytes] = {}
        self.dropped: dict[int, RecvLogEntry] = {}
        self.packets_received = 0
        self.duplicates = 0
        self.late_packets = 0
        self.packets_delivered_upward = 0
        self.pending_control: list[ControlPacket] = []
        self._frames: dict[int, _FrameState] = {}

    # -- ingestion -----------------------------------------------------------

    def on_packet(self, packet, recv_true_ns: int) -> ReceiveEvent:
        """Process one decoded data packet arriving at ``recv_true_ns``.

        Duplicates are idempotent. Completion of the frame returns a
        ``frame_complete`` event carrying the reassembled payload's log.
        """
        if packet.stream_id != self.stream_id:
            raise TransportError(
                f"packet for stream {packet.stream_id} on endpoint {self.stream_id}"
            )
        events = self.ingest_run(
            frame_id=packet.frame_id,
            segment_index=packet.segment_index,
            packets_in_segment=packet.packets_in_segment,
            seq_start=packet.packet_seq,
            count=1,
            payload=packet.payload,
            packet_payload_size=max(len(packet.payload), 1),
            arrivals_min_true=recv_true_ns,
            arrivals_max_true=recv_true_ns,
            stamp_at_min=packet.send_timestamp,
            flags=packet.flags,
        )
        for ev in events:
            if ev.kind in ("frame_complete", "nack_emitted", "late"):
                return ev
        for ev in events:
            if ev.kind == "duplicate":
                return ev
        return events[0] if events else ReceiveEvent(kind="stored", frame_id=packet.frame_id)

    def ingest_run(self, frame_id, segment_index, packets_in_segment, seq_start,
                   count, payload, packet_payload_size, arrivals_min_true,
                   arrivals_max_true, stamp_at_min, flags) -> list[ReceiveEvent]:
        """Batch form of ``on_packet`` for a contiguous run of one segment."""
        if frame_id in self.dropped:
            self.late_packets += count
            return [ReceiveEvent(kind="late", frame_id=frame_id)]
        done = self.recv_log.get(frame_id)
        if done is not None:
            self.duplicates += count
            done.duplicates += count
            return [ReceiveEvent(kind="duplicate", frame_id=frame_id)]

        state = self._frames.get(frame_id)
        if state is None:
            state = _FrameState(frame_id)
            self._frames[frame_id] = state
            if self.deadline_ns:
                state.drop_deadline = arrivals_min_true + self.deadline_ns

        if flags & FLAG_FINAL_SEGMENT:
            state.segment_count = segment_index
        if flags & FLAG_END_OF_STREAM:
            state.end_of_stream = True

        seg = state.segments.get(segment_index)
        if seg is None:
            seg = _SegmentState(packets_in_segment)
            state.segments[segment_index] = seg
            state.incomplete.add(segment_index)
            if segment_index > state.max_seen_seg:
                state.max_seen_seg = segment_index
        was_complete = segment_index in state.seg_payloads
        stored, dup = seg.add(seq_start, seq_start + count - 1,
                              memoryview(payload), packet_payload_size)
        self.packets_received += stored
        self.duplicates += dup
        state.packets += stored
        state.duplicates += dup

        events = []
        if stored == 0:
            events.append(ReceiveEvent(kind="duplicate", frame_id=frame_id))
            return events
        events.append(ReceiveEvent(kind="stored", frame_id=frame_id))

        if state.first_arr_true is None or arrivals_min_true < state.first_arr_true:
            state.first_arr_true = arrivals_min_true
            state.first_arr_local = self.clock.local_from_true(arrivals_min_true)
            state.first_stamp = stamp_at_min
        if arrivals_max_true > state.last_arr_true:
            state.last_arr_true = arrivals_max_true
            state.last_arr_local = self.clock.local_from_true(arrivals_max_true)

        now = arrivals_max_true
        if seg.is_complete and not was_complete:
            seg.complete_true_ns = now
            data = seg.assemble()
            state.seg_payloads[segment_index] = data
            state.incomplete.discard(segment_index)
            seg.pieces.clear()
            if self.on_segment is not None:
                self.on_segment(frame_id, segment_index, data, now, seg.expected,
                                state.segment_count == segment_index, state.end_of_stream)

        if state.is_complete():
            events.append(self._complete(state, now))
            return events

        # Re-arm timers: tail timer follows the latest arrival; a visible gap
        # arms the gap timer once until it fires or fills.
        if self.tail_timeout_ns and self.max_nack_rounds:
            state.tail_deadline = now + self.tail_timeout_ns
        has_gap = state.has_gap()
        if has_gap and self.max_nack_rounds:
            if self.nack_delay_ns == 0:
                nack = self._emit_nack(state)
                if nack is not None:
                    events.append(ReceiveEvent(kind="nack_emitted", frame_id=frame_id,
                                               ranges=nack.ranges))
                    self.pending_control.append(nack)
            elif state.gap_deadline is None:
                state.gap_deadline = now + self.nack_delay_ns
        elif not has_gap:
            state.gap_deadline = None
        return events

    def _complete(self, state: _FrameState, now_true: int) -> ReceiveEvent:
        payload = b"".join(state.seg_payloads[i] for i in range(1, state.segment_count + 1))
        log = RecvLogEntry(
            frame_id=state.frame_id,
            first_recv_ns=state.first_arr_local,
            last_recv_ns=state.last_arr_local,
            first_recv_true_ns=state.first_arr_true,
            last_recv_true_ns=state.last_arr_true,
            embedded_first_send_ts=state.first_stamp,
            complete_ns=self.clock.local_from_true(now_true),
            complete_true_ns=now_true,
            packets_received=state.packets,
            duplicates=state.duplicates,
            nack_count=state.nack_count,
            payload_len=len(payload),
            payload_checksum=zlib.adler32(payload) if self.compute_crc else 0,
            end_of_stream=state.end_of_stream,
        )
        self.recv_log[state.frame_id] = log
        self.packets_delivered_upward += state.packets
        if self.retain_payloads:
            self.payloads[state.frame_id] = payload
        if self.on_frame is not None:
            self.on_frame(state.frame_id, payload, log)
        del self._frames[state.frame_id]
        return ReceiveEvent(kind="frame_complete", frame_id=state.frame_id,
                            log=log, payload=payload)

    # -- gap detection and timers ---------------------------------------------

    def detect_gaps(self, frame_id: int) -> tuple[tuple[int, int, int], ...]:
        """Missing (segment_index, seq_start, seq_end) ranges, sorted.

        ``seq_end == 0`` marks a wholly-missing segment whose packet count
        is not yet known.
        """
        state = self._frames.get(frame_id)
        if state is None:
            return ()
        return state.missing_ranges()

    def _emit_nack(self, state: _FrameState) -> ControlPacket | None:
        ranges = state.missing_ranges()
        if not ranges:
            if state.segment_count is not None:
                return None
            # Nothing is visibly missing, yet the frame never ended: every
            # packet of the tail segment(s) was lost, so the receiver has no
            # final-segment marker. Ask for the next unseen segment; the
            # round still counts, which bounds the retries.
            ranges = ((state.max_seen_seg + 1, 1, 0),)
        state.nack_rounds += 1
        state.nack_count += 1
        state.gap_deadline = None
        return ControlPacket(packet_type=PacketType.NACK, stream_id=self.stream_id,
                             frame_id=state.frame_id, ranges=ranges)

    def next_timer_ns(self) -> int | None:
        deadlines = [d for s in self._frames.values() if (d := s.next_deadline()) is not None]
        return min(deadlines) if deadlines else None

    def on_timer(self, now_true_ns: int) -> list[ControlPacket]:
        """Fire due timers; returns NACKs to transmit on the reverse path.

        A frame whose NACK rounds are exhausted, or whose deadline passed,
        is abandoned and counted as dropped.
        """
        out = []
        for frame_id in list(self._frames):
            state = self._frames[frame_id]
            if state.drop_deadline is not None and now_true_ns >= state.drop_deadline:
                self._drop(state)
                continue
            due_gap = state.gap_deadline is not None and now_true_ns >= state.gap_deadline
            due_tail = state.tail_deadline is not None and now_true_ns >= state.tail_deadline
            if not (due_gap or due_tail):
                continue
            if state.nack_rounds >= self.max_nack_rounds:
                self._drop(state)
                continue
            nack = self._emit_nack(state)
            state.tail_deadline = now_true_ns + self.tail_timeout_ns if self.tail_timeout_ns else None
            if nack is not None:
                out.append(nack)
        return out

    def _drop(self, state: _FrameState) -> None:
        log = RecvLogEntry(
            frame_id=state.frame_id,
            first_recv_ns=state.first_arr_local,
            last_recv_ns=state.last_arr_local,
            first_recv_true_ns=state.first_arr_true or 0,
            last_recv_true_ns=state.last_arr_true,
            embedded_first_send_ts=state.first_stamp,
            packets_received=state.packets,
            duplicates=state.duplicates,
            nack_count=state.nack_count,
        )
        self.dropped[state.frame_id] = log
        del self._frames[state.frame_id]

    def finalize(self) -> None:
        """End of run: any frame still in flight counts as dropped."""
        for state in list(self._frames.values()):
            self._drop(state)

    @property
    def frames_in_flight(self) -> int:
        return len(self._frames)
