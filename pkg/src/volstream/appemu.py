"""Capture-side and render-side application emulation.

Real capture hardware and mesh rendering are out of scope; both ends are
modeled as configurable processing-time distributions around the frame
cadence. The capture side emits synthetic frames on an exact fps grid; the
render side turns a completed frame into a display instant.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

from .clock import NodeClock
from .errors import ConfigError
from .frames import VolumetricFrame, make_synthetic_frame

NS_PER_S = 1_000_000_000


@dataclass(frozen=True)
class DurationDist:
    """Uniform duration distribution: mean_ns +/- half_width_ns (ns ints)."""

    mean_ns: int
    half_width_ns: int = 0

    def __post_init__(self) -> None:
        if self.mean_ns < 0 or self.half_width_ns < 0:
            raise ConfigError("durations must be >= 0")
        if self.half_width_ns > self.mean_ns:
            raise ConfigError("duration jitter wider than the mean would go negative")

    def sample(self, rng=None) -> int:
        if self.half_width_ns == 0 or rng is None:
            return self.mean_ns
        span = 2 * self.half_width_ns
        return self.mean_ns - self.half_width_ns + int(rng.random() * (span + 1))


@dataclass(frozen=True)
class CaptureProfile:
    fps: float = 30.0
    app_tx: DurationDist = DurationDist(7_300_000)
    color_bytes: int = 1_400_000
    depth_bytes: int = 1_920_000
    audio_bytes: int = 200_000
    busywork: bool = False

    def __post_init__(self) -> None:
        if self.fps <= 0:
            raise ConfigError("fps must be > 0")

    @property
    def interval_ns(self) -> int:
        return round(NS_PER_S / self.fps)

    @property
    def frame_bytes(self) -> int:
        return self.color_bytes + self.depth_bytes + self.audio_bytes


@dataclass(frozen=True)
class RenderProfile:
    app_rx: DurationDist = DurationDist(22_000_000)


@dataclass(slots=True)
class AppTxRecord:
    frame_id: int
    capture_start_ns: int       # sender-local
    capture_end_ns: int
    capture_start_true_ns: int
    capture_end_true_ns: int
    app_tx_ns: int
    overrun: bool


@dataclass(slots=True)
class AppRxRecord:
    frame_id: int
    app_rx_ns: int
    display_ns: int             # receiver-local
    display_true_ns: int


def capture_tick(
    profile: CaptureProfile,
    frame_id: int,
    tick_true_ns: int,
    clock: NodeClock,
    seed: int,
    rng=None,
) -> tuple[VolumetricFrame, AppTxRecord]:
    """Produce the frame for one cadence tick.

    The capture interval brackets the sampled processing time; the frame is
    ready for transport at ``capture_end``. Processing that exceeds the
    frame interval flags an overrun but never skips the next tick.
    """
    app_tx = profile.app_tx.sample(rng)
    end_true = tick_true_ns + app_tx
    frame = make_synthetic_frame(
        frame_id,
        profile.color_bytes,
        profile.depth_bytes,
        profile.audio_bytes,
        seed,
        capture_start=clock.local_from_true(tick_true_ns),
        capture_end=clock.local_from_true(end_true),
    )
    if profile.busywork:
        zlib.crc32(frame.payload)
    record = AppTxRecord(
        frame_id=frame_id,
        capture_start_ns=frame.capture_start,
        capture_end_ns=frame.capture_end,
        capture_start_true_ns=tick_true_ns,
        capture_end_true_ns=end_true,
        app_tx_ns=app_tx,
        overrun=app_tx >= profile.interval_ns,
    )
    return frame, record


def render_complete(
    profile: RenderProfile,
    frame_id: int,
    complete_true_ns: int,
    clock: NodeClock,
    rng=None,
) -> AppRxRecord:
    """Turn a reassembled frame into a display instant."""
    app_rx = profile.app_rx.sample(rng)
    display_true = complete_true_ns + app_rx
    return AppRxRecord(
        frame_id=frame_id,
        app_rx_ns=app_rx,
        display_ns=clock.local_from_true(display_true),
        display_true_ns=display_true,
    )
