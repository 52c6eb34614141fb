"""The sync server: replicates the upstream stream to every receiver.

The relay owns one upstream receiving endpoint and one independent, paced
sending endpoint per receiver. Two forwarding policies exist:

    cut_through    each completed segment is re-packetized and queued to
                   every downstream pacer as soon as it is whole (default)
    store_forward  forwarding starts only at upstream frame completion

An optional processing stall (sampled once per frame, seeded) delays the
frame's forwarding gate; later segments of a stalled frame queue behind the
gate so replication order is preserved. Per frame and receiver the relay
records when the frame finished arriving upstream and when its forwarding
started and ended downstream; their difference is the distribution time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError
from .transport import ReceiverEndpoint, SenderEndpoint

NS_PER_MS = 1_000_000


@dataclass(frozen=True)
class StallModel:
    """Per-frame processing stall: probability plus uniform duration range."""

    probability: float = 0.0
    min_ns: int = 0
    max_ns: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.probability <= 1.0:
            raise ConfigError(f"stall probability must be in [0, 1], got {self.probability}")
        if not 0 <= self.min_ns <= self.max_ns:
            raise ConfigError("stall duration range must satisfy 0 <= min <= max")

    def sample(self, rng) -> int:
        if self.probability <= 0.0 or rng is None:
            return 0
        if rng.random() >= self.probability:
            return 0
        if self.min_ns == self.max_ns:
            return self.min_ns
        return self.min_ns + int(rng.random() * (self.max_ns - self.min_ns + 1))


@dataclass(slots=True)
class DistributionLogEntry:
    frame_id: int
    upstream_complete_ns: int = 0        # relay-local
    upstream_complete_true_ns: int = 0
    forward_start_ns: list = field(default_factory=list)       # per receiver, relay-local
    forward_end_ns: list = field(default_factory=list)
    forward_start_true_ns: list = field(default_factory=list)
    forward_end_true_ns: list = field(default_factory=list)
    stall_ns: int = 0

    def distribution_ns(self, receiver: int) -> int:
        return self.forward_end_ns[receiver] - self.upstream_complete_ns


class RelayNode:
    """Replication node between the sender hop and the receiver hops.

    The relay is event-driven: the owner wires ``upstream.on_segment`` /
    ``on_frame`` to this node and injects ``scheduler(at_ns, fn)`` (to defer
    forwards past the gate) and ``emit(receiver_idx, bursts)`` (to hand
    planned bursts to the downstream network).
    """

    def __init__(
        self,
        upstream: ReceiverEndpoint,
        downstreams: list[SenderEndpoint],
        policy: str = "cut_through",
        forward_delay_ns: int = 0,
        stall: StallModel | None = None,
        stall_rng=None,
        scheduler=None,
        emit=None,
        queue_high_water_ns: int = 50 * NS_PER_MS,
    ):
        if not downstreams:
            raise ConfigError("relay needs at least one downstream sender")
        if policy not in ("cut_through", "store_forward"):
            raise ConfigError(f"unknown forwarding policy {policy!r}")
        if forward_delay_ns < 0:
            raise ConfigError("forward_delay_ns must be >= 0")
        self.upstream = upstream
        self.downstreams = downstreams
        self.policy = policy
        self.forward_delay_ns = forward_delay_ns
        self.stall = stall or StallModel()
        self._stall_rng = stall_rng
        self.scheduler = scheduler
        self.emit = emit
        self.queue_high_water_ns = queue_high_water_ns
        self.dist_log: dict[int, DistributionLogEntry] = {}
        self.backpressure_events = 0
        self.stalled_frames = 0
        self._gates: dict[int, int] = {}   # frame_id -> gate-open true ns
        upstream.on_segment = self._upstream_segment
        upstream.on_frame = self._upstream_frame

    def set_stall(self, stall: StallModel, rng=None) -> None:
        """Install a processing-stall model for subsequent forwards."""
        self.stall = stall
        if rng is not None:
            self._stall_rng = rng

    @property
    def receiver_count(self) -> int:
        return len(self.downstreams)

    def _log(self, frame_id: int) -> DistributionLogEntry:
        entry = self.dist_log.get(frame_id)
        if entry is None:
            n = self.receiver_count
            entry = DistributionLogEntry(
                frame_id=frame_id,
                forward_start_ns=[0] * n, forward_end_ns=[0] * n,
                forward_start_true_ns=[0] * n, forward_end_true_ns=[0] * n,
            )
            self.dist_log[frame_id] = entry
        return entry

    def _gate(self, frame_id: int, now_true: int) -> int:
        gate = self._gates.get(frame_id)
        if gate is None:
            stall = self.stall.sample(self._stall_rng)
            if stall:
                self.stalled_frames += 1
                self._log(frame_id).stall_ns = stall
            gate = now_true + self.forward_delay_ns + stall
            self._gates[frame_id] = gate
        return gate

    # -- upstream endpoint callbacks ------------------------------------------

    def _upstream_segment(self, frame_id, segment_index, payload, now_true,
                          expected, is_final, eos) -> None:
        if self.policy != "cut_through":
            return
        at = max(self._gate(frame_id, now_true), now_true + self.forward_delay_ns)
        if self.scheduler is not None and at > now_true:
            self.scheduler(at, self.forward_segment, frame_id, segment_index,
                           payload, is_final, eos, at)
        else:
            self.forward_segment(frame_id, segment_index, payload, is_final, eos,
                                 max(at, now_true))

    def _upstream_frame(self, frame_id, payload, log) -> None:
        entry = self._log(frame_id)
        entry.upstream_complete_ns = log.complete_ns
        entry.upstream_complete_true_ns = log.complete_true_ns
        if self.policy == "store_forward":
            at = self._gate(frame_id, log.complete_true_ns)
            if self.scheduler is not None and at > log.complete_true_ns:
                self.scheduler(at, self.forward_frame, frame_id, payload, at,
                               log.end_of_stream)
            else:
                self.forward_frame(frame_id, payload, max(at, log.complete_true_ns),
                                   log.end_of_stream)
        self._gates.pop(frame_id, None)

    # -- forwarding ------------------------------------------------------------

    def forward_segment(self, frame_id, segment_index, payload, is_final, eos,
                        now_true) -> dict[int, object]:
        """Replicate one segment to every receiver; returns bursts per receiver."""
        entry = self._log(frame_id)
        out = {}
        for r, sender in enumerate(self.downstreams):
            if sender.pacer.busy_until_ns - now_true > self.queue_high_water_ns:
                self.backpressure_events += 1
            burst = sender.send_segment(frame_id, segment_index, payload, now_true,
                                        is_final=is_final, end_of_stream=eos)
            first = burst.emissions[0]
            end_true = sender.pacer.busy_until_ns
            if entry.forward_start_true_ns[r] == 0 or first < entry.forward_start_true_ns[r]:
                entry.forward_start_true_ns[r] = first
                entry.forward_start_ns[r] = burst.stamps[0]
            if end_true > entry.forward_end_true_ns[r]:
                entry.forward_end_true_ns[r] = end_true
                entry.forward_end_ns[r] = sender.clock.local_from_true(end_true)
            if self.emit is not None:
                self.emit(r, [burst])
            out[r] = [burst]
        return out

    def forward_frame(self, frame_id, payload, now_true, eos=False) -> dict[int, object]:
        """Store-and-forward: replicate a whole reassembled frame."""
        seg_size = self.downstreams[0].segment_payload_size
        view = memoryview(payload)
        total = len(view)
        count = -(-total // seg_size)
        out = {r: [] for r in range(self.receiver_count)}
        for i in range(count):
            seg_payload = view[i * seg_size:(i + 1) * seg_size]
            per_recv = self.forward_segment(frame_id, i + 1, seg_payload,
                                            is_final=(i + 1 == count),
                                            eos=eos, now_true=now_true)
            for r, bursts in per_recv.items():
                out[r].extend(bursts)
        return out
