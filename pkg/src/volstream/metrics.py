"""Layered latency records, run statistics, and the canonical CSV report.

Per completed frame the record carries, all in integer nanoseconds:

    app_tx        capture/frame-generation time at the sender
    frame_tx      sender emission span, first packet start to last packet end
    network_l     offset-corrected one-way delay of the frame's first packet,
                  original sender to final receiver
    frame_rx      receiver arrival span of the frame (= hop-2 protocol_rx)
    frame_l       network_l + frame_rx
    app_rx        reassembly-to-display time at the receiver
    service_l     app_tx + frame_l + app_rx
    server_dist   relay forwarding-done minus upstream-complete
    protocol_tx/rx/l and network_l per hop (1: sender->relay, 2: relay->receiver)

The three latency identities (service, frame, per-hop protocol) hold exactly
at ns resolution on every record by construction, and survive into the CSV,
which prints milliseconds with six decimals (1 ns) via exact integer
formatting. Dropped frames appear with ``completed=0`` and zeroed latencies
and are excluded from the summary statistics.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields

from .clock import AnomalyLog, one_way_delay, pairwise_offset
from .errors import MetricsError
from .stats import jitter, mean, percentile_nearest_rank

NS_PER_MS = 1_000_000

CSV_COLUMNS = (
    "frame_id", "app_tx_ms", "frame_tx_ms", "network_l_ms", "frame_rx_ms",
    "frame_l_ms", "app_rx_ms", "service_l_ms", "server_dist_ms",
    "protocol_tx1_ms", "protocol_rx1_ms", "protocol_l1_ms",
    "protocol_tx2_ms", "protocol_rx2_ms", "protocol_l2_ms",
    "retransmits", "completed",
    # appended beyond the canonical set so the per-hop identity is checkable
    # from the file alone
    "network_l1_ms", "network_l2_ms",
)

SUMMARY_METRICS = (
    "app_tx", "frame_tx", "network_l", "frame_rx", "frame_l", "app_rx",
    "service_l", "server_dist", "protocol_tx1", "protocol_rx1", "protocol_l1",
    "network_l1", "protocol_tx2", "protocol_rx2", "protocol_l2", "network_l2",
)


@dataclass(slots=True)
class FrameLatencyRecord:
    frame_id: int
    completed: bool = False
    app_tx_ns: int = 0
    frame_tx_ns: int = 0
    network_l_ns: int = 0
    frame_rx_ns: int = 0
    frame_l_ns: int = 0
    app_rx_ns: int = 0
    service_l_ns: int = 0
    server_dist_ns: int = 0
    protocol_tx1_ns: int = 0
    protocol_rx1_ns: int = 0
    protocol_l1_ns: int = 0
    network_l1_ns: int = 0
    protocol_tx2_ns: int = 0
    protocol_rx2_ns: int = 0
    protocol_l2_ns: int = 0
    network_l2_ns: int = 0
    retransmits: int = 0
    # Diagnostics, not part of the CSV contract. Ground-truth fields are only
    # meaningful in simulation runs.
    network_l_uncorrected_ns: int = 0
    network_l_true_ns: int = 0
    network_l1_uncorrected_ns: int = 0
    network_l1_true_ns: int = 0
    network_l2_uncorrected_ns: int = 0
    network_l2_true_ns: int = 0
    capture_start_ns: int = 0
    display_ns: int = 0

    def check_identities(self) -> None:
        if self.service_l_ns != self.app_tx_ns + self.frame_l_ns + self.app_rx_ns:
            raise MetricsError(f"frame {self.frame_id}: service identity violated")
        if self.frame_l_ns != self.network_l_ns + self.frame_rx_ns:
            raise MetricsError(f"frame {self.frame_id}: frame identity violated")
        if self.protocol_l1_ns != self.network_l1_ns + self.protocol_rx1_ns:
            raise MetricsError(f"frame {self.frame_id}: hop-1 protocol identity violated")
        if self.protocol_l2_ns != self.network_l2_ns + self.protocol_rx2_ns:
            raise MetricsError(f"frame {self.frame_id}: hop-2 protocol identity violated")


@dataclass
class OffsetTable:
    """Estimated (and, in simulation, true) clock corrections to the master."""

    sender_est_ns: int = 0
    relay_est_ns: int = 0
    receiver_est_ns: list = field(default_factory=lambda: [0])
    sender_true_ns: int = 0
    relay_true_ns: int = 0
    receiver_true_ns: list = field(default_factory=lambda: [0])


@dataclass
class RunLogs:
    """Everything the per-frame assembly needs, keyed by frame_id."""

    app_tx: dict
    send_log: dict
    relay_recv: dict
    relay_dist: dict
    relay_send: list        # per receiver: dict
    recv: list              # per receiver: dict
    app_rx: list            # per receiver: dict
    has_ground_truth: bool = True


def assemble_record(
    frame_id: int,
    logs: RunLogs,
    offsets: OffsetTable,
    receiver: int = 0,
    anomalies: AnomalyLog | None = None,
) -> FrameLatencyRecord:
    """Merge the per-node logs of one completed frame into a latency record.

    Raises ``MetricsError`` naming the missing source if any log lacks the
    frame. The end-to-end one-way delay uses the sender's first emission
    timestamp against the receiver's first arrival; per-hop delays use the
    embedded timestamp of each hop's earliest-arriving packet.
    """
    def need(table, source):
        entry = table.get(frame_id)
        if entry is None:
            raise MetricsError(f"frame {frame_id}: no entry in {source} log")
        return entry

    app_tx = need(logs.app_tx, "sender application")
    send = need(logs.send_log, "sender transport")
    relay_recv = need(logs.relay_recv, "relay upstream")
    dist = need(logs.relay_dist, "relay distribution")
    relay_send = need(logs.relay_send[receiver], f"relay downstream[{receiver}]")
    recv = need(logs.recv[receiver], f"receiver[{receiver}] transport")
    app_rx = need(logs.app_rx[receiver], f"receiver[{receiver}] application")

    recv_est = offsets.receiver_est_ns[receiver]
    network_l1 = one_way_delay(
        relay_recv.first_recv_ns, relay_recv.embedded_first_send_ts,
        pairwise_offset(offsets.sender_est_ns, offsets.relay_est_ns), anomalies)
    network_l2 = one_way_delay(
        recv.first_recv_ns, recv.embedded_first_send_ts,
        pairwise_offset(offsets.relay_est_ns, recv_est), anomalies)
    network_l = one_way_delay(
        recv.first_recv_ns, send.first_send_ns,
        pairwise_offset(offsets.sender_est_ns, recv_est), anomalies)

    rec = FrameLatencyRecord(
        frame_id=frame_id,
        completed=True,
        app_tx_ns=app_tx.app_tx_ns,
        frame_tx_ns=send.send_span_ns,
        network_l_ns=network_l,
        frame_rx_ns=recv.recv_span_ns,
        frame_l_ns=network_l + recv.recv_span_ns,
        app_rx_ns=app_rx.app_rx_ns,
        server_dist_ns=dist.distribution_ns(receiver),
        protocol_tx1_ns=send.send_span_ns,
        protocol_rx1_ns=relay_recv.recv_span_ns,
        protocol_l1_ns=network_l1 + relay_recv.recv_span_ns,
        network_l1_ns=network_l1,
        protocol_tx2_ns=relay_send.send_span_ns,
        protocol_rx2_ns=recv.recv_span_ns,
        protocol_l2_ns=network_l2 + recv.recv_span_ns,
        network_l2_ns=network_l2,
        retransmits=send.retransmit_count + relay_send.retransmit_count,
        capture_start_ns=app_tx.capture_start_ns,
        display_ns=app_rx.display_ns,
    )
    rec.service_l_ns = rec.app_tx_ns + rec.frame_l_ns + rec.app_rx_ns
    rec.network_l_uncorrected_ns = recv.first_recv_ns - send.first_send_ns
    rec.network_l1_uncorrected_ns = relay_recv.first_recv_ns - relay_recv.embedded_first_send_ts
    rec.network_l2_uncorrected_ns = recv.first_recv_ns - recv.embedded_first_send_ts
    if logs.has_ground_truth:
        rec.network_l_true_ns = recv.first_recv_true_ns - send.first_send_true_ns
        rec.network_l1_true_ns = relay_recv.first_recv_true_ns - send.first_send_true_ns
        rec.network_l2_true_ns = recv.first_recv_true_ns - relay_send.first_send_true_ns
    rec.check_identities()
    return rec


def dropped_record(frame_id: int, logs: RunLogs) -> FrameLatencyRecord:
    """Placeholder record for a frame that never completed at this receiver."""
    rec = FrameLatencyRecord(frame_id=frame_id, completed=False)
    app = logs.app_tx.get(frame_id)
    if app is not None:
        rec.capture_start_ns = app.capture_start_ns
    return rec


@dataclass
class MetricStats:
    mean_ns: float
    p50_ns: int
    p95_ns: int
    p99_ns: int
    min_ns: int
    max_ns: int
    jitter_ns: float


@dataclass
class RunSummary:
    frames_sent: int
    frames_completed: int
    frames_dropped: int
    stats: dict                 # metric name -> MetricStats
    packet_counts: dict         # counter name -> int

    def stat(self, metric: str) -> MetricStats:
        return self.stats[metric]


def summarize(records, packet_counts: dict | None = None) -> RunSummary:
    """Aggregate statistics over the completed records of one run."""
    records = list(records)
    if not records:
        raise MetricsError("cannot summarize an empty run")
    done = [r for r in records if r.completed]
    stats = {}
    for metric in SUMMARY_METRICS:
        values = [getattr(r, metric + "_ns") for r in done]
        if values:
            ordered = sorted(values)
            stats[metric] = MetricStats(
                mean_ns=mean(values),
                p50_ns=percentile_nearest_rank(ordered, 50),
                p95_ns=percentile_nearest_rank(ordered, 95),
                p99_ns=percentile_nearest_rank(ordered, 99),
                min_ns=ordered[0],
                max_ns=ordered[-1],
                jitter_ns=jitter(values),
            )
    return RunSummary(
        frames_sent=len(records),
        frames_completed=len(done),
        frames_dropped=len(records) - len(done),
        stats=stats,
        packet_counts=dict(packet_counts or {}),
    )


def ns_to_ms_str(ns: int) -> str:
    """Exact decimal milliseconds with six fractional digits (1 ns)."""
    sign = "-" if ns < 0 else ""
    ns = abs(ns)
    return f"{sign}{ns // NS_PER_MS}.{ns % NS_PER_MS:06d}"


def _record_row(rec: FrameLatencyRecord) -> str:
    return ",".join((
        str(rec.frame_id),
        ns_to_ms_str(rec.app_tx_ns),
        ns_to_ms_str(rec.frame_tx_ns),
        ns_to_ms_str(rec.network_l_ns),
        ns_to_ms_str(rec.frame_rx_ns),
        ns_to_ms_str(rec.frame_l_ns),
        ns_to_ms_str(rec.app_rx_ns),
        ns_to_ms_str(rec.service_l_ns),
        ns_to_ms_str(rec.server_dist_ns),
        ns_to_ms_str(rec.protocol_tx1_ns),
        ns_to_ms_str(rec.protocol_rx1_ns),
        ns_to_ms_str(rec.protocol_l1_ns),
        ns_to_ms_str(rec.protocol_tx2_ns),
        ns_to_ms_str(rec.protocol_rx2_ns),
        ns_to_ms_str(rec.protocol_l2_ns),
        str(rec.retransmits),
        "1" if rec.completed else "0",
        ns_to_ms_str(rec.network_l1_ns),
        ns_to_ms_str(rec.network_l2_ns),
    ))


def render_frames_csv(records) -> str:
    lines = [",".join(CSV_COLUMNS)]
    lines.extend(_record_row(r) for r in sorted(records, key=lambda r: r.frame_id))
    return "\n".join(lines) + "\n"


def render_summary_csv(summary: RunSummary) -> str:
    lines = ["metric,mean,p50,p95,p99,min,max,jitter"]
    for metric in SUMMARY_METRICS:
        st = summary.stats.get(metric)
        if st is None:
            continue
        lines.append(",".join((
            metric,
            f"{st.mean_ns / NS_PER_MS:.6f}",
            ns_to_ms_str(st.p50_ns),
            ns_to_ms_str(st.p95_ns),
            ns_to_ms_str(st.p99_ns),
            ns_to_ms_str(st.min_ns),
            ns_to_ms_str(st.max_ns),
            f"{st.jitter_ns / NS_PER_MS:.6f}",
        )))
    lines.append(f"frames_sent,{summary.frames_sent},,,,,,")
    lines.append(f"frames_completed,{summary.frames_completed},,,,,,")
    lines.append(f"frames_dropped,{summary.frames_dropped},,,,,,")
    for name in sorted(summary.packet_counts):
        lines.append(f"{name},{summary.packet_counts[name]},,,,,,")
    return "\n".join(lines) + "\n"


def write_report(records, summary: RunSummary, out_dir: str,
                 suffix: str = "") -> tuple[str, str]:
    """Write frames{suffix}.csv and summary{suffix}.csv under ``out_dir``.

    Output is a pure function of the records, so reruns of the same seeded
    scenario produce byte-identical files.
    """
    records = list(records)
    if not records:
        raise MetricsError("refusing to write a report for an empty record set")
    frames_txt = render_frames_csv(records)
    summary_txt = render_summary_csv(summary)
    os.makedirs(out_dir, exist_ok=True)
    frames_path = os.path.join(out_dir, f"frames{suffix}.csv")
    summary_path = os.path.join(out_dir, f"summary{suffix}.csv")
    try:
        with open(frames_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(frames_txt)
        with open(summary_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(summary_txt)
    except OSError as exc:
        raise MetricsError(f"cannot write report under {out_dir}: {exc}") from exc
    return frames_path, summary_path
