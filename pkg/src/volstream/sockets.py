"""Real-datagram mode: sender / relay / receiver roles over UDP sockets.

Each role runs as its own process, reuses the same endpoint state machines
as the simulation, and writes its logs as JSON when it exits. On a single
host the orchestrator spawns all three roles on loopback, waits for them,
merges the logs, and produces the same CSV report as a simulation run. For
multi-host use, start each role by hand with ``--role`` and matching host
configuration.

Timestamps come from a composite clock (wall-clock anchor plus the
monotonic counter), so they are steady within a run and comparable across
processes on one host. Offset estimation against the receiver master runs
over a SYNC_REQ/SYNC_RESP exchange even on a single host, where it should
come out near zero.

The emulated link models do not apply here; socket mode prints a warning
and ignores them.
"""

from __future__ import annotations

import dataclasses
import heapq
import json
import os
import socket
import subprocess
import sys
import threading
import time
from collections import deque

from .appemu import AppRxRecord, AppTxRecord, capture_tick, render_complete
from .clock import NodeClock, estimate_offset
from .config import ScenarioConfig, _ms, render_config
from .errors import VolstreamError
from .frames import DataPacket
from .metrics import (OffsetTable, RunLogs, assemble_record, dropped_record,
                      summarize, write_report)
from .relay import DistributionLogEntry, RelayNode
from .transport import (ReceiverEndpoint, RecvLogEntry, SendLogEntry,
                        SenderEndpoint)
from .wire import ControlPacket, PacketType, decode_packet, encode_packet

NS_PER_S = 1_000_000_000
_POLL_S = 0.0005


class HostClock:
    """Wall-anchored monotonic nanoseconds, stable against clock slew."""

    def __init__(self):
        self._anchor = time.time_ns() - time.monotonic_ns()

    def now_ns(self) -> int:
        return self._anchor + time.monotonic_ns()


def _ports(cfg: ScenarioConfig):
    base = cfg.socket.base_port
    return {
        "relay_up": base + 1,
        "sync": base + 2,
        "receiver": lambda r: base + 10 + r,
    }


# -- log (de)serialization -----------------------------------------------------


def _dump_map(mapping) -> dict:
    return {str(k): dataclasses.asdict(v) for k, v in mapping.items()}


def _load_map(mapping, cls) -> dict:
    return {int(k): cls(**v) for k, v in mapping.items()}


def _write_role_log(out_dir: str, role: str, payload: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, f"{role}_log.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def _read_role_log(out_dir: str, role: str) -> dict:
    path = os.path.join(out_dir, f"{role}_log.json")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise VolstreamError(f"missing role log {path}: {exc}") from exc


# -- clock sync over UDP ---------------------------------------------------------


def _sync_against_master(cfg: ScenarioConfig, clock: HostClock, name: str) -> int:
    if not cfg.clock.sync_enabled:
        return 0
    addr = (cfg.socket.receiver_host, _ports(cfg)["sync"])
    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    sock.settimeout(0.5)
    try:
        for _ in range(max(cfg.clock.sync_retries, 1) * 4):
            t1 = clock.now_ns()
            req = ControlPacket(packet_type=PacketType.SYNC_REQ, stream_id=cfg.stream_id,
                                t1=t1, send_timestamp=t1)
            sock.sendto(encode_packet(req), addr)
            try:
                data, _ = sock.recvfrom(2048)
            except socket.timeout:
                continue
            t4 = clock.now_ns()
            resp = decode_packet(data)
            if isinstance(resp, ControlPacket) and resp.packet_type == PacketType.SYNC_RESP:
                return estimate_offset(resp.t1, resp.t2, resp.t3, t4)
        raise VolstreamError(f"{name}: clock sync against master failed")
    finally:
        sock.close()


class _SyncResponder(threading.Thread):
    """Master-side responder: stamps t2/t3 and echoes the request's t1."""

    def __init__(self, cfg: ScenarioConfig, clock: HostClock):
        super().__init__(daemon=True)
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.bind((cfg.socket.receiver_host, _ports(cfg)["sync"]))
        self.sock.settimeout(0.2)
        self.clock = clock
        self.stream_id = cfg.stream_id
        self.stop = False

    def run(self):
        while not self.stop:
            try:
                data, addr = self.sock.recvfrom(2048)
            except socket.timeout:
                continue
            except OSError:
                break
            t2 = self.clock.now_ns()
            try:
                req = decode_packet(data)
            except VolstreamError:
                continue
            if not (isinstance(req, ControlPacket) and req.packet_type == PacketType.SYNC_REQ):
                continue
            t3 = self.clock.now_ns()
            resp = ControlPacket(packet_type=PacketType.SYNC_RESP, stream_id=self.stream_id,
                                 t1=req.t1, t2=t2, t3=t3, send_timestamp=t3)
            self.sock.sendto(encode_packet(resp), addr)
        self.sock.close()


# -- sender role -------------------------------------------------------------------


def _burst_packet(burst, i: int, stamp: int, stream_id: int) -> DataPacket:
    pps = burst.packet_payload_size
    view = memoryview(burst.payload)
    return DataPacket(
        stream_id=stream_id, frame_id=burst.frame_id, segment_index=burst.segment_index,
        packet_seq=burst.seq_start + i, packets_in_segment=burst.packets_in_segment,
        payload=bytes(view[i * pps:(i + 1) * pps]), send_timestamp=stamp,
        flags=burst.flags)


def run_sender_role(cfg: ScenarioConfig, out_dir: str) -> None:
    clock = HostClock()
    node_clock = NodeClock("sender", "slave")
    offset = _sync_against_master(cfg, clock, "sender")
    profile = cfg.capture_profile()
    t = cfg.transport
    ep = SenderEndpoint(
        cfg.stream_id, cfg.hop1.pacing_bps[0], node_clock,
        segment_payload_size=cfg.segment_payload_size,
        packet_payload_size=t.packet_payload_size,
        overhead_bits_per_packet=t.overhead_bits_per_packet,
        retention_frames=t.retention_frames, max_frame_bytes=t.max_frame_bytes)
    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    sock.bind((cfg.socket.sender_host, 0))
    sock.settimeout(_POLL_S)
    relay_addr = (cfg.socket.relay_host, _ports(cfg)["relay_up"])

    import random
    apptx_rng = random.Random(f"{cfg.seed}:apptx")
    frames = cfg.frame_count()
    interval = profile.interval_ns
    app_records = {}
    pending = deque()   # (emission_ns, burst, index)
    spans = {}          # frame_id -> [first_ns, last_ns, last_bits]
    t0 = clock.now_ns() + int(0.05 * NS_PER_S)
    k = 0
    hard_deadline = t0 + int((cfg.duration_s + cfg.socket.drain_timeout_s + 20) * NS_PER_S)
    done_sending_at = None

    while True:
        now = clock.now_ns()
        if now > hard_deadline:
            break
        if k < frames and now >= t0 + k * interval:
            tick = t0 + k * interval
            frame, rec = capture_tick(profile, k + 1, tick, node_clock, cfg.seed, apptx_rng)
            app_records[frame.frame_id] = rec
            handoff = max(now, rec.capture_end_true_ns)
            for burst in ep.send_frame(frame, handoff, end_of_stream=(k + 1 == frames)):
                for i in range(burst.count):
                    pending.append((burst.emissions[i], burst, i))
            k += 1
            continue
        if pending and now >= pending[0][0]:
            _, burst, i = pending.popleft()
            pkt = _burst_packet(burst, i, now, cfg.stream_id)
            sock.sendto(encode_packet(pkt), relay_addr)
            if not burst.retransmit:
                bits = len(pkt.payload) * 8 + ep.overhead_bits
                span = spans.setdefault(pkt.frame_id, [now, now, bits])
                span[1], span[2] = now, bits
            continue
        if k >= frames and not pending:
            if done_sending_at is None:
                done_sending_at = now
            elif now - done_sending_at > int(cfg.socket.drain_timeout_s * NS_PER_S):
                break
        try:
            data, _ = sock.recvfrom(65535)
        except socket.timeout:
            continue
        try:
            ctrl = decode_packet(data)
        except VolstreamError:
            continue
        if isinstance(ctrl, ControlPacket) and ctrl.packet_type == PacketType.NACK:
            for burst in ep.retransmit(ctrl, clock.now_ns()):
                for i in range(burst.count):
                    pending.append((burst.emissions[i], burst, i))
            done_sending_at = None
        elif isinstance(ctrl, ControlPacket) and ctrl.packet_type == PacketType.FRAME_ACK:
            ep.on_frame_ack(ctrl)
    sock.close()

    for frame_id, (first, last, last_bits) in spans.items():
        entry = ep.send_log.get(frame_id)
        if entry is not None:
            entry.first_send_ns = entry.first_send_true_ns = first
            end = last + (last_bits * NS_PER_S) // ep.pacing_rate_bps
            entry.last_send_end_ns = entry.last_send_end_true_ns = end
    _write_role_log(out_dir, "sender", {
        "offset_ns": offset,
        "send_log": _dump_map(ep.send_log),
        "app_tx": _dump_map(app_records),
        "counters": {"packets_sent": ep.packets_sent,
                     "packets_retransmitted": ep.packets_retransmitted,
                     "stale_nacks": ep.stale_nacks,
                     "frames_acked": ep.frames_acked},
    })


# -- relay role ---------------------------------------------------------------------


def run_relay_role(cfg: ScenarioConfig, out_dir: str) -> None:
    clock = HostClock()
    node_clock = NodeClock("relay", "slave")
    offset = _sync_against_master(cfg, clock, "relay")
    t = cfg.transport
    up = ReceiverEndpoint(
        cfg.stream_id, node_clock, nack_delay_ns=_ms(t.nack_delay_ms),
        tail_timeout_ns=_ms(t.tail_timeout_ms), max_nack_rounds=t.max_nack_rounds,
        deadline_ns=_ms(t.deadline_ms))
    downs = [
        SenderEndpoint(cfg.stream_id, cfg.hop2_pacing(r), node_clock,
                       segment_payload_size=cfg.segment_payload_size,
                       packet_payload_size=t.packet_payload_size,
                       overhead_bits_per_packet=t.overhead_bits_per_packet,
                       retention_frames=t.retention_frames,
                       max_frame_bytes=t.max_frame_bytes)
        for r in range(cfg.receivers)
    ]
    pending = [deque() for _ in range(cfg.receivers)]
    actions = []
    action_seq = 0

    def scheduler(at_ns, fn, *args):
        nonlocal action_seq
        heapq.heappush(actions, (at_ns, action_seq, fn, args))
        action_seq += 1

    def emit(r, bursts):
        for burst in bursts:
            for i in range(burst.count):
                pending[r].append((burst.emissions[i], burst, i))

    import random
    relay = RelayNode(up, downs, policy=cfg.relay.policy,
                      forward_delay_ns=_ms(cfg.relay.forward_delay_ms),
                      stall=cfg.stall_model(),
                      stall_rng=random.Random(f"{cfg.seed}:stall"),
                      scheduler=scheduler, emit=emit,
                      queue_high_water_ns=_ms(cfg.relay.queue_high_water_ms))

    up_sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    up_sock.bind((cfg.socket.relay_host, _ports(cfg)["relay_up"]))
    up_sock.settimeout(_POLL_S)
    down_socks = []
    for r in range(cfg.receivers):
        s = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        s.bind((cfg.socket.relay_host, 0))
        s.setblocking(False)
        down_socks.append(s)
    recv_addr = _ports(cfg)["receiver"]
    sender_addr = None
    eos_seen = False
    idle_since = clock.now_ns()
    hard_deadline = clock.now_ns() + int((cfg.duration_s + cfg.socket.drain_timeout_s + 25) * NS_PER_S)

    while True:
        now = clock.now_ns()
        if now > hard_deadline:
            break
        busy = False
        while actions and actions[0][0] <= now:
            _, _, fn, args = heapq.heappop(actions)
            fn(*args)
            busy = True
        for r in range(cfg.receivers):
            q = pending[r]
            while q and q[0][0] <= now:
                _, burst, i = q.popleft()
                pkt = _burst_packet(burst, i, clock.now_ns(), cfg.stream_id)
                down_socks[r].sendto(encode_packet(pkt),
                                     (cfg.socket.receiver_host, recv_addr(r)))
                busy = True
            try:
                data, _ = down_socks[r].recvfrom(65535)
            except (BlockingIOError, InterruptedError):
                data = None
            if data:
                busy = True
                try:
                    ctrl = decode_packet(data)
                except VolstreamError:
                    ctrl = None
                if isinstance(ctrl, ControlPacket) and ctrl.packet_type == PacketType.NACK:
                    emit(r, downs[r].retransmit(ctrl, clock.now_ns()))
                elif isinstance(ctrl, ControlPacket) and ctrl.packet_type == PacketType.FRAME_ACK:
                    downs[r].on_frame_ack(ctrl)
        for nack in up.on_timer(now):
            if sender_addr:
                up_sock.sendto(encode_packet(nack), sender_addr)
        try:
            data, src = up_sock.recvfrom(65535)
        except socket.timeout:
            data = None
        if data:
            busy = True
            sender_addr = src
            try:
                pkt = decode_packet(data)
            except VolstreamError:
                pkt = None
            if isinstance(pkt, DataPacket):
                ev = up.on_packet(pkt, clock.now_ns())
                if ev.kind == "frame_complete":
                    ack = ControlPacket(packet_type=PacketType.FRAME_ACK,
                                        stream_id=cfg.stream_id, frame_id=ev.frame_id)
                    up_sock.sendto(encode_packet(ack), src)
                    if ev.log.end_of_stream:
                        eos_seen = True
                for nack in up.pending_control:
                    up_sock.sendto(encode_packet(nack), src)
                up.pending_control.clear()
        if busy:
            idle_since = clock.now_ns()
        elif eos_seen and not actions and all(not q for q in pending) \
                and clock.now_ns() - idle_since > int(cfg.socket.drain_timeout_s * NS_PER_S):
            break
    up.finalize()
    up_sock.close()
    for s in down_socks:
        s.close()
    _write_role_log(out_dir, "relay", {
        "offset_ns": offset,
        "recv_log": _dump_map(up.recv_log),
        "dropped": _dump_map(up.dropped),
        "dist_log": _dump_map(relay.dist_log),
        "send_logs": [_dump_map(d.send_log) for d in downs],
        "counters": {"packets_received": up.packets_received,
                     "duplicates": up.duplicates,
                     "backpressure_events": relay.backpressure_events,
                     "stalled_frames": relay.stalled_frames},
    })


# -- receiver role --------------------------------------------------------------------


def run_receiver_role(cfg: ScenarioConfig, out_dir: str, index: int = 0) -> None:
    clock = HostClock()
    node_clock = NodeClock(f"receiver{index}", "master" if index == 0 else "slave")
    responder = None
    if index == 0 and cfg.clock.sync_enabled:
        responder = _SyncResponder(cfg, clock)
        responder.start()
        offset = 0
    else:
        offset = _sync_against_master(cfg, clock, f"receiver{index}") if index else 0

    import random
    render_profile = cfg.render_profile()
    rng = random.Random(f"{cfg.seed}:apprx:{index}")
    app_records = {}
    eos_done = [None]

    t = cfg.transport
    ep = ReceiverEndpoint(
        cfg.stream_id, node_clock, nack_delay_ns=_ms(t.nack_delay_ms),
        tail_timeout_ns=_ms(t.tail_timeout_ms), max_nack_rounds=t.max_nack_rounds,
        deadline_ns=_ms(t.deadline_ms), retain_payloads=cfg.retain_payloads)

    def on_frame(frame_id, payload, log):
        app_records[frame_id] = render_complete(render_profile, frame_id,
                                                log.complete_true_ns, node_clock, rng)
        if log.end_of_stream:
            eos_done[0] = clock.now_ns()
    ep.on_frame = on_frame

    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    sock.bind((cfg.socket.receiver_host, _ports(cfg)["receiver"](index)))
    sock.settimeout(_POLL_S)
    upstream = None
    hard_deadline = clock.now_ns() + int((cfg.duration_s + cfg.socket.drain_timeout_s + 30) * NS_PER_S)

    while True:
        now = clock.now_ns()
        if now > hard_deadline:
            break
        if eos_done[0] is not None and \
                now - eos_done[0] > int(cfg.socket.drain_timeout_s * NS_PER_S):
            break
        for nack in ep.on_timer(now):
            if upstream:
                sock.sendto(encode_packet(nack), upstream)
        try:
            data, src = sock.recvfrom(65535)
        except socket.timeout:
            continue
        upstream = src
        try:
            pkt = decode_packet(data)
        except VolstreamError:
            continue
        if isinstance(pkt, DataPacket):
            ev = ep.on_packet(pkt, clock.now_ns())
            for nack in ep.pending_control:
                sock.sendto(encode_packet(nack), src)
            ep.pending_control.clear()
            if ev.kind == "frame_complete":
                ack = ControlPacket(packet_type=PacketType.FRAME_ACK,
                                    stream_id=cfg.stream_id, frame_id=ev.frame_id)
                sock.sendto(encode_packet(ack), src)
    ep.finalize()
    if responder is not None:
        responder.stop = True
    sock.close()
    _write_role_log(out_dir, f"receiver{index}", {
        "offset_ns": offset,
        "recv_log": _dump_map(ep.recv_log),
        "dropped": _dump_map(ep.dropped),
        "app_rx": _dump_map(app_records),
        "counters": {"packets_received": ep.packets_received,
                     "duplicates": ep.duplicates,
                     "late_packets": ep.late_packets},
    })


def run_role(cfg: ScenarioConfig, role: str, role_index: int = 0) -> None:
    out_dir = cfg.out_dir
    if role == "sender":
        run_sender_role(cfg, out_dir)
    elif role == "relay":
        run_relay_role(cfg, out_dir)
    elif role == "receiver":
        run_receiver_role(cfg, out_dir, role_index)
    else:
        raise VolstreamError(f"unknown role {role!r}")


# -- single-host orchestration -----------------------------------------------------------


def run_socket_orchestrated(cfg: ScenarioConfig):
    """Spawn all roles on loopback, merge their logs, write the report.

    Returns the merged (records, summary) pair per receiver.
    """
    print("socket mode: emulated link models (hop*.bandwidth/loss/delay) are ignored")
    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    cfg_path = os.path.join(out, "socket_config.cfg")
    with open(cfg_path, "w", encoding="utf-8") as fh:
        fh.write(render_config(cfg))

    def spawn(role, idx=0):
        argv = [sys.executable, "-m", "volstream", "run", "--config", cfg_path,
                "--mode", "socket", "--role", role, "--role-index", str(idx),
                "--out", out]
        return subprocess.Popen(argv)

    procs = [spawn("receiver", r) for r in range(cfg.receivers)]
    time.sleep(cfg.socket.setup_wait_s)
    procs.append(spawn("relay"))
    time.sleep(cfg.socket.setup_wait_s)
    procs.append(spawn("sender"))
    timeout = cfg.duration_s + cfg.socket.drain_timeout_s * 3 + 40
    failed = False
    for p in procs:
        try:
            if p.wait(timeout=timeout) != 0:
                failed = True
        except subprocess.TimeoutExpired:
            p.kill()
            failed = True
    if failed:
        raise VolstreamError("one or more socket roles failed; see role output")
    return merge_socket_logs(cfg)


def merge_socket_logs(cfg: ScenarioConfig):
    """Combine role logs into per-receiver records and write the CSV report."""
    out = cfg.out_dir
    sender = _read_role_log(out, "sender")
    relay = _read_role_log(out, "relay")
    receivers = [_read_role_log(out, f"receiver{r}") for r in range(cfg.receivers)]

    def load_dist(mapping):
        return {int(k): DistributionLogEntry(**v) for k, v in mapping.items()}

    logs = RunLogs(
        app_tx=_load_map(sender["app_tx"], AppTxRecord),
        send_log=_load_map(sender["send_log"], SendLogEntry),
        relay_recv=_load_map(relay["recv_log"], RecvLogEntry),
        relay_dist=load_dist(relay["dist_log"]),
        relay_send=[_load_map(m, SendLogEntry) for m in relay["send_logs"]],
        recv=[_load_map(r["recv_log"], RecvLogEntry) for r in receivers],
        app_rx=[_load_map(r["app_rx"], AppRxRecord) for r in receivers],
        has_ground_truth=False,
    )
    offsets = OffsetTable(
        sender_est_ns=sender["offset_ns"],
        relay_est_ns=relay["offset_ns"],
        receiver_est_ns=[r["offset_ns"] for r in receivers],
    )
    frames = cfg.frame_count()
    results = []
    for r in range(cfg.receivers):
        records = []
        for frame_id in range(1, frames + 1):
            if frame_id in logs.recv[r] and frame_id in logs.app_rx[r] \
                    and frame_id in logs.send_log and frame_id in logs.relay_recv \
                    and frame_id in logs.relay_dist:
                records.append(assemble_record(frame_id, logs, offsets, r))
            else:
                records.append(dropped_record(frame_id, logs))
        counts = {
            "hop1_sent": sender["counters"]["packets_sent"],
            "hop1_retransmitted": sender["counters"]["packets_retransmitted"],
            "receiver_duplicates": receivers[r]["counters"]["duplicates"],
            "receiver_late_packets": receivers[r]["counters"]["late_packets"],
            "relay_backpressure_events": relay["counters"]["backpressure_events"],
            "relay_stalled_frames": relay["counters"]["stalled_frames"],
        }
        summary = summarize(records, counts)
        suffix = "" if r == 0 else f"_r{r}"
        write_report(records, summary, out, suffix)
        results.append((records, summary))
    return results
