"""Deterministic discrete-event network emulation.

The simulation core is a single virtual clock plus an event queue; all
randomness is drawn from named, seeded streams so any run is an exact
replay of its (scenario, seed) pair.

A link carries packets through a fixed stage pipeline:

    tx_sw -> tx_hw -> [egress queue] -> serialization -> propagation
          -> per-hop switching -> rx_hw -> rx_sw

Serialization is FIFO per link: a packet's wire time begins when the
previous packet's ends, which models a switch egress port. Kernel and NIC
stage delays come from per-node models; the receiving side may be scaled by
a load factor to emulate a busy host.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

from .errors import ConfigError
from .stats import mean, percentile_nearest_rank

NS_PER_S = 1_000_000_000


@dataclass(frozen=True)
class LinkModel:
    """Emulated path parameters for one direction of a link."""

    bandwidth_bps: int
    distance_km: float = 0.0
    propagation_ns_per_km: int = 5_000
    hops: int = 0
    hop_delay_min_ns: int = 5_000
    hop_delay_max_ns: int = 10_000
    loss_rate: float = 0.0
    reorder_rate: float = 0.0
    reorder_extra_ns: int = 50_000

    def __post_init__(self) -> None:
        if self.bandwidth_bps <= 0:
            raise ConfigError("bandwidth_bps must be > 0")
        if self.distance_km < 0 or self.propagation_ns_per_km < 0 or self.hops < 0:
            raise ConfigError("distance, propagation and hops must be >= 0")
        if not 0 <= self.hop_delay_min_ns <= self.hop_delay_max_ns:
            raise ConfigError("hop delay range must satisfy 0 <= min <= max")
        for name in ("loss_rate", "reorder_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1]")
        if self.reorder_extra_ns < 0:
            raise ConfigError("reorder_extra_ns must be >= 0")

    @property
    def propagation_ns(self) -> int:
        return int(self.distance_km * self.propagation_ns_per_km)


@dataclass(frozen=True)
class NodeStageModel:
    """Per-packet kernel and NIC delays of one node."""

    tx_sw_ns: int = 0
    tx_hw_ns: int = 0
    rx_sw_ns: int = 0
    rx_hw_ns: int = 0
    load_factor: float = 1.0

    def __post_init__(self) -> None:
        for name in ("tx_sw_ns", "tx_hw_ns", "rx_sw_ns", "rx_hw_ns"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.load_factor < 0:
            raise ConfigError("load_factor must be >= 0")

    @property
    def rx_sw_effective_ns(self) -> int:
        return int(self.rx_sw_ns * self.load_factor)

    @property
    def rx_hw_effective_ns(self) -> int:
        return int(self.rx_hw_ns * self.load_factor)


@dataclass(frozen=True)
class StageBreakdown:
    """Per-stage delay of one packet, all in ns. Total is the exact sum."""

    tx_sw_ns: int
    tx_hw_ns: int
    queue_ns: int
    serialization_ns: int
    propagation_ns: int
    switching_ns: int
    rx_hw_ns: int
    rx_sw_ns: int

    @property
    def total_ns(self) -> int:
        return (self.tx_sw_ns + self.tx_hw_ns + self.queue_ns + self.serialization_ns
                + self.propagation_ns + self.switching_ns + self.rx_hw_ns + self.rx_sw_ns)


def serialization_ns(packet_bytes: int, bandwidth_bps: int) -> int:
    return (packet_bytes * 8 * NS_PER_S) // bandwidth_bps


def sample_switching_ns(model: LinkModel, rng) -> int:
    lo, hi = model.hop_delay_min_ns, model.hop_delay_max_ns
    if model.hops == 0:
        return 0
    if lo == hi or rng is None:
        return model.hops * lo
    span = hi - lo
    return sum(lo + int(rng.random() * span) for _ in range(model.hops))


def packet_delay(
    link: LinkModel,
    node_tx: NodeStageModel,
    node_rx: NodeStageModel,
    packet_bytes: int,
    rng=None,
) -> tuple[bool, StageBreakdown]:
    """Delay breakdown for one isolated packet on an otherwise idle link.

    Returns ``(delivered, breakdown)``; the loss draw happens before the
    delay is computed so loss and delay sampling stay aligned across
    replays. The breakdown is computed for lost packets too (the delay the
    packet would have seen).
    """
    delivered = True
    if link.loss_rate > 0 and rng is not None and rng.random() < link.loss_rate:
        delivered = False
    breakdown = StageBreakdown(
        tx_sw_ns=node_tx.tx_sw_ns,
        tx_hw_ns=node_tx.tx_hw_ns,
        queue_ns=0,
        serialization_ns=serialization_ns(packet_bytes, link.bandwidth_bps),
        propagation_ns=link.propagation_ns,
        switching_ns=sample_switching_ns(link, rng),
        rx_hw_ns=node_rx.rx_hw_effective_ns,
        rx_sw_ns=node_rx.rx_sw_effective_ns,
    )
    return delivered, breakdown


class EventQueue:
    """Virtual clock plus pending events ordered by (time, insertion seq)."""

    def __init__(self, start_ns: int = 0):
        self.now = start_ns
        self._heap: list = []
        self._seq = 0

    def schedule(self, at_ns: int, fn, *args) -> None:
        if at_ns < self.now:
            raise ConfigError(f"cannot schedule at {at_ns} ns: clock already at {self.now} ns")
        heapq.heappush(self._heap, (at_ns, self._seq, fn, args))
        self._seq += 1

    def schedule_in(self, delay_ns: int, fn, *args) -> None:
        self.schedule(self.now + delay_ns, fn, *args)

    def step(self):
        """Fire the next event; returns (time, seq) or None when drained."""
        if not self._heap:
            return None
        at, seq, fn, args = heapq.heappop(self._heap)
        self.now = at
        fn(*args)
        return at, seq

    def run(self, until_ns: int | None = None) -> int:
        """Drain the queue (optionally only up to ``until_ns``); returns events fired."""
        fired = 0
        while self._heap:
            if until_ns is not None and self._heap[0][0] > until_ns:
                break
            self.step()
            fired += 1
        return fired

    def __len__(self) -> int:
        return len(self._heap)


class Link:
    """Runtime state of one directional link: FIFO egress plus seeded draws.

    ``traverse`` converts a burst of emission instants into arrival instants,
    applying loss, switching jitter, and optional reorder-as-extra-delay.
    Counters satisfy delivered + lost == sent at all times.
    """

    def __init__(
        self,
        name: str,
        model: LinkModel,
        node_tx: NodeStageModel,
        node_rx: NodeStageModel,
        loss_rng=None,
        switch_rng=None,
        reorder_rng=None,
        trace=None,
    ):
        self.name = name
        self.model = model
        self.node_tx = node_tx
        self.node_rx = node_rx
        self._loss_rng = loss_rng
        self._switch_rng = switch_rng
        self._reorder_rng = reorder_rng
        self._trace = trace
        self._busy_until = 0
        self.sent = 0
        self.delivered = 0
        self.lost = 0
        self.reordered = 0

    def traverse(self, emissions, wire_bytes, frame_id=0, segment_index=0,
                 first_seq=1, stamps=None):
        """Carry one burst of packets; returns per-packet arrival ns (None = lost).

        ``emissions`` must be non-decreasing true-time instants. ``stamps``
        (sender-local send timestamps) are only used for trace rows.
        """
        m = self.model
        loss_rate = m.loss_rate
        loss_random = self._loss_rng.random if (loss_rate > 0 and self._loss_rng) else None
        reorder_rate = m.reorder_rate
        reorder_random = self._reorder_rng.random if (reorder_rate > 0 and self._reorder_rng) else None
        switch_random = self._switch_rng.random if self._switch_rng is not None else None
        hops = m.hops
        lo = m.hop_delay_min_ns
        span = m.hop_delay_max_ns - lo
        tx_ns = self.node_tx.tx_sw_ns + self.node_tx.tx_hw_ns
        after_ns = m.propagation_ns + self.node_rx.rx_hw_effective_ns + self.node_rx.rx_sw_effective_ns
        bw = m.bandwidth_bps
        busy = self._busy_until
        trace = self._trace
        arrivals = []
        append = arrivals.append

        if loss_random is None and reorder_random is None and trace is None:
            # Fast path for clean links: no draws besides switching jitter.
            n = len(emissions)
            if hops == 1 and span and switch_random is not None:
                base_after = after_ns + lo
                for i in range(n):
                    ready = emissions[i] + tx_ns
                    start = busy if busy > ready else ready
                    busy = start + (wire_bytes[i] * 8_000_000_000) // bw
                    append(busy + base_after + int(switch_random() * span))
            elif hops and span and switch_random is not None:
                base_after = after_ns + hops * lo
                for i in range(n):
                    ready = emissions[i] + tx_ns
                    start = busy if busy > ready else ready
                    busy = start + (wire_bytes[i] * 8_000_000_000) // bw
                    sw = 0
                    for _ in range(hops):
                        sw += int(switch_random() * span)
                    append(busy + base_after + sw)
            else:
                base_after = after_ns + hops * lo
                for i in range(n):
                    ready = emissions[i] + tx_ns
                    start = busy if busy > ready else ready
                    busy = start + (wire_bytes[i] * 8_000_000_000) // bw
                    append(busy + base_after)
            self.sent += n
            self.delivered += n
            self._busy_until = busy
            return arrivals

        for i, e in enumerate(emissions):
            self.sent += 1
            lost = loss_random is not None and loss_random() < loss_rate
            ready = e + tx_ns
            start = busy if busy > ready else ready
            ser = (wire_bytes[i] * 8 * NS_PER_S) // bw
            busy = start + ser
            if hops:
                if span and switch_random is not None:
                    sw = 0
                    for _ in range(hops):
                        sw += lo + int(switch_random() * span)
                else:
                    sw = hops * lo
            else:
                sw = 0
            if lost:
                self.lost += 1
                append(None)
                if trace is not None:
                    trace(busy, self.name, frame_id, segment_index, first_seq + i,
                          "lost", self.node_tx.tx_sw_ns, self.node_tx.tx_hw_ns,
                          start - ready, ser, m.propagation_ns, sw,
                          self.node_rx.rx_hw_effective_ns, self.node_rx.rx_sw_effective_ns,
                          e, stamps[i] if stamps else 0)
                continue
            arrival = busy + after_ns + sw
            if reorder_random is not None and reorder_random() < reorder_rate:
                arrival += m.reorder_extra_ns
                self.reordered += 1
            self.delivered += 1
            append(arrival)
            if trace is not None:
                trace(arrival, self.name, frame_id, segment_index, first_seq + i,
                      "delivered", self.node_tx.tx_sw_ns, self.node_tx.tx_hw_ns,
                      start - ready, ser, m.propagation_ns, sw,
                      self.node_rx.rx_hw_effective_ns, self.node_rx.rx_sw_effective_ns,
                      e, stamps[i] if stamps else 0)

        self._busy_until = busy
        return arrivals


TRACE_COLUMNS = (
    "time_ns", "link", "frame_id", "segment_index", "packet_seq", "status",
    "tx_sw_ns", "tx_hw_ns", "queue_ns", "serialization_ns", "propagation_ns",
    "switching_ns", "rx_hw_ns", "rx_sw_ns", "emission_true_ns", "send_ts_ns",
)


@dataclass(frozen=True)
class StageStats:
    """mean/p50/p99 of one delay stage over a probe batch, in ns."""

    mean_ns: float
    p50_ns: int
    p99_ns: int


_PROBE_STAGES = ("tx_sw", "tx_hw", "serialization", "propagation", "switching",
                 "rx_hw", "rx_sw", "total")


@dataclass(frozen=True)
class ProbeSizeResult:
    packet_bytes: int
    samples: int
    stages: dict  # stage name -> StageStats


def run_probe_experiment(
    link: LinkModel,
    node_tx: NodeStageModel,
    node_rx: NodeStageModel,
    packet_sizes,
    samples_per_size: int,
    seed,
) -> list[ProbeSizeResult]:
    """Send isolated probe packets per size and report per-stage statistics.

    Switching jitter is drawn once per (sample, hop) and reused across
    packet sizes, so the size comparison is paired: only serialization
    varies between sizes and mean totals increase monotonically whenever
    serialization does.
    """
    sizes = list(packet_sizes)
    if not sizes:
        raise ConfigError("packet_sizes must be non-empty")
    if samples_per_size < 1:
        raise ConfigError("samples_per_size must be >= 1")
    import random as _random

    rng = _random.Random(f"probe:{seed}")
    switching = [sample_switching_ns(link, rng) for _ in range(samples_per_size)]

    results = []
    for size in sizes:
        ser = serialization_ns(size, link.bandwidth_bps)
        fixed = {
            "tx_sw": node_tx.tx_sw_ns,
            "tx_hw": node_tx.tx_hw_ns,
            "serialization": ser,
            "propagation": link.propagation_ns,
            "rx_hw": node_rx.rx_hw_effective_ns,
            "rx_sw": node_rx.rx_sw_effective_ns,
        }
        base_total = sum(fixed.values())
        totals = sorted(base_total + sw for sw in switching)
        sw_sorted = sorted(switching)
        stages = {
            name: StageStats(mean_ns=float(v), p50_ns=v, p99_ns=v)
            for name, v in fixed.items()
        }
        stages["switching"] = StageStats(
            mean_ns=mean(switching),
            p50_ns=percentile_nearest_rank(sw_sorted, 50),
            p99_ns=percentile_nearest_rank(sw_sorted, 99),
        )
        stages["total"] = StageStats(
            mean_ns=mean(totals),
            p50_ns=percentile_nearest_rank(totals, 50),
            p99_ns=percentile_nearest_rank(totals, 99),
        )
        results.append(ProbeSizeResult(packet_bytes=size, samples=samples_per_size,
                                       stages=stages))
    return results
