"""Virtual-clock simulation of the full streaming pipeline.

Topology: sender -> relay (sync server) -> N receivers, two emulated hops
with independent forward and reverse (control) links. Receiver 0 is the
time master; sender and relay run offset clocks synced over a dedicated
loss-free path. The event core is strictly single-threaded over the virtual
clock and every random draw comes from a named seeded stream, so a run is a
pure function of (config, seed).

Packet bursts are planned arithmetically by the pacers, carried by the link
models, and delivered to the receiving endpoints as contiguous runs; losses
split runs and NACK-driven retransmissions fill them back in. After the
event queue drains, per-frame records are assembled from the per-node logs
and written as the CSV report.
"""

from __future__ import annotations

import os
import random
from dataclasses import dataclass

from .appemu import capture_tick, render_complete
from .clock import AnomalyLog, NodeClock, SyncPath, sync_exchange
from .config import ScenarioConfig, _ms, _us, render_config
from .errors import ConfigError
from .metrics import (OffsetTable, RunLogs, RunSummary, assemble_record,
                      dropped_record, summarize, write_report)
from .netem import TRACE_COLUMNS, EventQueue, Link
from .relay import RelayNode
from .transport import ReceiverEndpoint, SenderEndpoint
from .wire import ControlPacket, PacketType, encode_packet

NS_PER_S = 1_000_000_000


@dataclass
class ReceiverResult:
    records: list
    summary: RunSummary
    frames_csv: str = ""
    summary_csv: str = ""


@dataclass
class SimResult:
    config: ScenarioConfig
    receivers: list          # ReceiverResult per receiver
    offsets: OffsetTable
    anomalies: AnomalyLog
    trace_rows: list
    payload_mismatches: int
    sim: object = None       # the SimulationRun, for white-box tests

    @property
    def primary(self) -> ReceiverResult:
        return self.receivers[0]


class SimulationRun:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.evq = EventQueue()
        self.frame_count = cfg.frame_count()
        if self.frame_count < 1:
            raise ConfigError("duration and fps yield zero frames")
        self._rngs = {}
        self.trace_rows = [] if cfg.trace.enabled else None
        self.anomalies = AnomalyLog()
        self.payload_mismatches = 0

        self.sender_clock = NodeClock("sender", "slave",
                                      true_offset_ns=_ms(cfg.clock.sender_offset_ms),
                                      drift_ppm=cfg.clock.drift_ppm)
        self.relay_clock = NodeClock("relay", "slave",
                                     true_offset_ns=_ms(cfg.clock.relay_offset_ms),
                                     drift_ppm=cfg.clock.drift_ppm)
        self.receiver_clocks = [NodeClock("receiver0", "master")]
        for r in range(1, cfg.receivers):
            self.receiver_clocks.append(NodeClock(f"receiver{r}", "slave"))

        trace = self.trace_rows.append if self.trace_rows is not None else None

        def link(name, hop, node_tx, node_rx, reverse=False):
            return Link(
                name, cfg.link_model(hop, reverse=reverse),
                cfg.node_stages(node_tx), cfg.node_stages(node_rx),
                loss_rng=self._rng(f"loss:{name}"),
                switch_rng=self._rng(f"switch:{name}"),
                reorder_rng=self._rng(f"reorder:{name}"),
                trace=None if trace is None else lambda *row: trace(row),
            )

        self.h1f = link("hop1", cfg.hop1, cfg.node_sender, cfg.node_relay)
        self.h1r = link("hop1_rev", cfg.hop1, cfg.node_relay, cfg.node_sender, reverse=True)
        self.h2f = [link(f"hop2_r{r}", cfg.hop2, cfg.node_relay, cfg.node_receiver)
                    for r in range(cfg.receivers)]
        self.h2r = [link(f"hop2_rev_r{r}", cfg.hop2, cfg.node_receiver, cfg.node_relay,
                         reverse=True) for r in range(cfg.receivers)]

        t = cfg.transport
        self.sender = SenderEndpoint(
            cfg.stream_id, cfg.hop1.pacing_bps[0], self.sender_clock,
            segment_payload_size=cfg.segment_payload_size,
            packet_payload_size=t.packet_payload_size,
            overhead_bits_per_packet=t.overhead_bits_per_packet,
            retention_frames=t.retention_frames,
            max_frame_bytes=t.max_frame_bytes,
            compute_crc=cfg.verify_payload,
        )
        recv_kwargs = dict(
            nack_delay_ns=_ms(t.nack_delay_ms),
            tail_timeout_ns=_ms(t.tail_timeout_ms),
            max_nack_rounds=t.max_nack_rounds,
            deadline_ns=_ms(t.deadline_ms),
        )
        self.relay_up = ReceiverEndpoint(cfg.stream_id, self.relay_clock, compute_crc=False,
                                         **recv_kwargs)
        self.relay_down = [
            SenderEndpoint(
                cfg.stream_id, cfg.hop2_pacing(r), self.relay_clock,
                segment_payload_size=cfg.segment_payload_size,
                packet_payload_size=t.packet_payload_size,
                overhead_bits_per_packet=t.overhead_bits_per_packet,
                retention_frames=t.retention_frames,
                max_frame_bytes=t.max_frame_bytes,
            )
            for r in range(cfg.receivers)
        ]
        self.receivers = [
            ReceiverEndpoint(cfg.stream_id, self.receiver_clocks[r],
                             retain_payloads=cfg.retain_payloads,
                             compute_crc=cfg.verify_payload,
                             on_frame=self._make_render(r), **recv_kwargs)
            for r in range(cfg.receivers)
        ]
        self.relay = RelayNode(
            self.relay_up, self.relay_down,
            policy=cfg.relay.policy,
            forward_delay_ns=_ms(cfg.relay.forward_delay_ms),
            stall=cfg.stall_model(),
            stall_rng=self._rng("stall"),
            scheduler=self.evq.schedule,
            emit=self._relay_emit,
            queue_high_water_ns=_ms(cfg.relay.queue_high_water_ms),
        )

        self.capture_profile = cfg.capture_profile()
        self.render_profile = cfg.render_profile()
        self.app_tx_records = {}
        self.app_rx_records = [dict() for _ in range(cfg.receivers)]
        self._timer_armed = {}    # id(endpoint) -> scheduled deadline

    # -- plumbing ---------------------------------------------------------------

    def _rng(self, name: str) -> random.Random:
        rng = self._rngs.get(name)
        if rng is None:
            rng = random.Random(f"{self.cfg.seed}:{name}")
            self._rngs[name] = rng
        return rng

    def _make_render(self, r: int):
        def on_frame(frame_id, payload, log):
            rec = render_complete(self.render_profile, frame_id,
                                  log.complete_true_ns, self.receiver_clocks[r],
                                  self._rng(f"apprx:{r}"))
            self.app_rx_records[r][frame_id] = rec
            if self.cfg.verify_payload:
                sent = self.sender.send_log.get(frame_id)
                if sent is None or sent.payload_len != log.payload_len \
                        or sent.payload_checksum != log.payload_checksum:
                    self.payload_mismatches += 1
        return on_frame

    # -- clock sync ---------------------------------------------------------------

    def _sync_path(self) -> SyncPath:
        k = self.cfg.clock
        return SyncPath(req_delay_ns=_us(k.sync_req_us), resp_delay_ns=_us(k.sync_resp_us),
                        loss_rate=k.sync_loss_rate)

    def _sync_all(self, now_ns: int) -> None:
        k = self.cfg.clock
        if not k.sync_enabled:
            return
        path = self._sync_path()
        master = self.receiver_clocks[0]
        rng = self._rng("sync")
        for clk in (self.sender_clock, self.relay_clock, *self.receiver_clocks[1:]):
            sync_exchange(clk, master, path, now_ns, rng, max_attempts=k.sync_retries)

    # -- burst delivery -----------------------------------------------------------

    def _deliver_burst(self, lnk: Link, burst, ingest) -> None:
        arrivals = lnk.traverse(burst.emissions, burst.wire_bytes, burst.frame_id,
                                burst.segment_index, burst.seq_start, burst.stamps)
        pps = burst.packet_payload_size
        view = memoryview(burst.payload)
        stamps = burst.stamps
        n = burst.count
        schedule = self.evq.schedule
        i = 0
        while i < n:
            if arrivals[i] is None:
                i += 1
                continue
            j = i
            mn = mx = arrivals[i]
            stamp = stamps[i]
            while j + 1 < n and arrivals[j + 1] is not None:
                j += 1
                a = arrivals[j]
                if a < mn:
                    mn = a
                    stamp = stamps[j]
                if a > mx:
                    mx = a
            schedule(mx, ingest, burst.frame_id, burst.segment_index,
                     burst.packets_in_segment, burst.seq_start + i, j - i + 1,
                     view[i * pps:(j + 1) * pps], pps, mn, mx, stamp, burst.flags)
            i = j + 1

    def _send_control(self, lnk: Link, ctrl: ControlPacket, handler) -> None:
        size = len(encode_packet(ctrl))
        arrivals = lnk.traverse([self.evq.now], [size], ctrl.frame_id, 0, 0, None)
        if arrivals[0] is not None:
            self.evq.schedule(arrivals[0], handler, ctrl)

    # -- endpoint timers ------------------------------------------------------------

    def _arm_timer(self, ep: ReceiverEndpoint, route) -> None:
        deadline = ep.next_timer_ns()
        if deadline is None:
            return
        key = id(ep)
        armed = self._timer_armed.get(key)
        if armed is not None and armed <= deadline:
            return
        self._timer_armed[key] = deadline
        self.evq.schedule(max(deadline, self.evq.now), self._timer_fire, ep, route)

    def _timer_fire(self, ep: ReceiverEndpoint, route) -> None:
        self._timer_armed.pop(id(ep), None)
        deadline = ep.next_timer_ns()
        if deadline is None:
            return
        if deadline <= self.evq.now:
            for nack in ep.on_timer(self.evq.now):
                route(nack)
        self._arm_timer(ep, route)

    # -- event handlers --------------------------------------------------------------

    def _capture(self, k: int) -> None:
        frame, rec = capture_tick(self.capture_profile, k + 1, self.evq.now,
                                  self.sender_clock, self.cfg.seed,
                                  self._rng("apptx"))
        self.app_tx_records[frame.frame_id] = rec
        self.evq.schedule(rec.capture_end_true_ns, self._handoff, frame,
                          k + 1 == self.frame_count)

    def _handoff(self, frame, eos: bool) -> None:
        for burst in self.sender.send_frame(frame, self.evq.now, end_of_stream=eos):
            self._deliver_burst(self.h1f, burst, self._relay_ingest)

    def _route_relay_nack(self, nack: ControlPacket) -> None:
        self._send_control(self.h1r, nack, self._sender_control)

    def _sender_control(self, ctrl: ControlPacket) -> None:
        if ctrl.packet_type == PacketType.NACK:
            for burst in self.sender.retransmit(ctrl, self.evq.now):
                self._deliver_burst(self.h1f, burst, self._relay_ingest)
        elif ctrl.packet_type == PacketType.FRAME_ACK:
            self.sender.on_frame_ack(ctrl)

    def _relay_ingest(self, frame_id, seg_idx, n_in_seg, seq_start, count, payload,
                      pps, mn, mx, stamp, flags) -> None:
        events = self.relay_up.ingest_run(
            frame_id=frame_id, segment_index=seg_idx, packets_in_segment=n_in_seg,
            seq_start=seq_start, count=count, payload=payload,
            packet_payload_size=pps, arrivals_min_true=mn, arrivals_max_true=mx,
            stamp_at_min=stamp, flags=flags)
        for ev in events:
            if ev.kind == "frame_complete":
                ack = ControlPacket(packet_type=PacketType.FRAME_ACK,
                                    stream_id=self.cfg.stream_id, frame_id=frame_id)
                self._send_control(self.h1r, ack, self._sender_control)
        for nack in self.relay_up.pending_control:
            self._route_relay_nack(nack)
        self.relay_up.pending_control.clear()
        self._arm_timer(self.relay_up, self._route_relay_nack)

    def _relay_emit(self, r: int, bursts) -> None:
        for burst in bursts:
            self._deliver_burst(self.h2f[r], burst, self._receiver_ingest_fn(r))

    def _receiver_ingest_fn(self, r: int):
        fn = getattr(self, "_recv_fns", None)
        if fn is None:
            fn = self._recv_fns = {}
        cached = fn.get(r)
        if cached is None:
            def ingest(*args, _r=r):
                self._receiver_ingest(_r, *args)
            cached = fn[r] = ingest
        return cached

    def _route_receiver_nack(self, r: int, nack: ControlPacket) -> None:
        self._send_control(self.h2r[r], nack,
                           lambda ctrl, _r=r: self._relay_down_control(_r, ctrl))

    def _relay_down_control(self, r: int, ctrl: ControlPacket) -> None:
        if ctrl.packet_type == PacketType.NACK:
            for burst in self.relay_down[r].retransmit(ctrl, self.evq.now):
                self._deliver_burst(self.h2f[r], burst, self._receiver_ingest_fn(r))
        elif ctrl.packet_type == PacketType.FRAME_ACK:
            self.relay_down[r].on_frame_ack(ctrl)

    def _receiver_ingest(self, r, frame_id, seg_idx, n_in_seg, seq_start, count,
                         payload, pps, mn, mx, stamp, flags) -> None:
        ep = self.receivers[r]
        events = ep.ingest_run(
            frame_id=frame_id, segment_index=seg_idx, packets_in_segment=n_in_seg,
            seq_start=seq_start, count=count, payload=payload,
            packet_payload_size=pps, arrivals_min_true=mn, arrivals_max_true=mx,
            stamp_at_min=stamp, flags=flags)
        for ev in events:
            if ev.kind == "frame_complete":
                ack = ControlPacket(packet_type=PacketType.FRAME_ACK,
                                    stream_id=self.cfg.stream_id, frame_id=frame_id)
                self._send_control(self.h2r[r], ack,
                                   lambda ctrl, _r=r: self._relay_down_control(_r, ctrl))
        for nack in ep.pending_control:
            self._route_receiver_nack(r, nack)
        ep.pending_control.clear()
        self._arm_timer(ep, lambda nack, _r=r: self._route_receiver_nack(_r, nack))

    # -- run ---------------------------------------------------------------------------

    def run(self) -> SimResult:
        cfg = self.cfg
        self._sync_all(0)
        if cfg.clock.sync_enabled:
            interval = int(cfg.clock.sync_interval_s * NS_PER_S)
            horizon = int(cfg.duration_s * NS_PER_S)
            t = interval
            while t < horizon:
                self.evq.schedule(t, self._sync_all, t)
                t += interval
        tick = self.capture_profile.interval_ns
        for k in range(self.frame_count):
            self.evq.schedule(k * tick, self._capture, k)
        self.evq.run()
        for ep in (self.relay_up, *self.receivers):
            ep.finalize()

        offsets = OffsetTable(
            sender_est_ns=self.sender_clock.estimated_offset_ns,
            relay_est_ns=self.relay_clock.estimated_offset_ns,
            receiver_est_ns=[c.estimated_offset_ns for c in self.receiver_clocks],
            sender_true_ns=self.sender_clock.true_offset_ns,
            relay_true_ns=self.relay_clock.true_offset_ns,
            receiver_true_ns=[c.true_offset_ns for c in self.receiver_clocks],
        )
        results = []
        for r in range(cfg.receivers):
            logs = RunLogs(
                app_tx=self.app_tx_records,
                send_log=self.sender.send_log,
                relay_recv=self.relay_up.recv_log,
                relay_dist=self.relay.dist_log,
                relay_send=[ep.send_log for ep in self.relay_down],
                recv=[ep.recv_log for ep in self.receivers],
                app_rx=self.app_rx_records,
                has_ground_truth=True,
            )
            records = []
            for frame_id in range(1, self.frame_count + 1):
                if frame_id in self.receivers[r].recv_log and frame_id in self.app_rx_records[r]:
                    records.append(assemble_record(frame_id, logs, offsets, r,
                                                   self.anomalies))
                else:
                    records.append(dropped_record(frame_id, logs))
            counts = self._packet_counts(r)
            results.append(ReceiverResult(records=records,
                                          summary=summarize(records, counts)))
        return SimResult(config=cfg, receivers=results, offsets=offsets,
                         anomalies=self.anomalies,
                         trace_rows=self.trace_rows or [],
                         payload_mismatches=self.payload_mismatches, sim=self)

    def _packet_counts(self, r: int) -> dict:
        ep = self.receivers[r]
        return {
            "hop1_sent": self.h1f.sent,
            "hop1_delivered": self.h1f.delivered,
            "hop1_lost": self.h1f.lost,
            "hop1_retransmitted": self.sender.packets_retransmitted,
            "hop2_sent": self.h2f[r].sent,
            "hop2_delivered": self.h2f[r].delivered,
            "hop2_lost": self.h2f[r].lost,
            "hop2_retransmitted": self.relay_down[r].packets_retransmitted,
            "receiver_duplicates": ep.duplicates,
            "receiver_late_packets": ep.late_packets,
            "relay_backpressure_events": self.relay.backpressure_events,
            "relay_stalled_frames": self.relay.stalled_frames,
            "payload_mismatches": self.payload_mismatches,
            "clock_anomalies": self.anomalies.count,
        }


def run_simulation(cfg: ScenarioConfig, write_outputs: bool = True) -> SimResult:
    """Run one stream-experiment simulation; optionally write the report."""
    result = SimulationRun(cfg).run()
    if write_outputs:
        out = cfg.out_dir
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "config.txt"), "w", encoding="utf-8") as fh:
            fh.write(render_config(cfg))
        for r, rr in enumerate(result.receivers):
            suffix = "" if r == 0 else f"_r{r}"
            rr.frames_csv, rr.summary_csv = write_report(rr.records, rr.summary,
                                                         out, suffix)
        if cfg.trace.enabled:
            path = os.path.join(out, cfg.trace.file)
            rows = sorted(result.trace_rows)
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(",".join(TRACE_COLUMNS) + "\n")
                for row in rows:
                    fh.write(",".join(str(v) for v in row) + "\n")
    return result
