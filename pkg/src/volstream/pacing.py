"""Rate pacing for packet emission.

A continuous token bucket with a depth of one packet: after any idle gap the
next packet goes out immediately, and consecutive packets are spaced by
``wire_bits / rate``. Emission instants are exact integer nanoseconds derived
from cumulative bits, so a gapless burst of B bits spans exactly
``B * 1e9 // rate`` ns with no per-packet rounding drift.
"""

from __future__ import annotations

from .errors import ConfigError

NS_PER_S = 1_000_000_000


class RatePacer:
    def __init__(self, rate_bps: int):
        if rate_bps <= 0:
            raise ConfigError(f"pacing rate must be > 0, got {rate_bps}")
        self.rate_bps = int(rate_bps)
        self._base_ns = 0
        self._bits = 0

    @property
    def busy_until_ns(self) -> int:
        return self._base_ns + (self._bits * NS_PER_S) // self.rate_bps

    def emit(self, now_ns: int, wire_bits: int) -> int:
        """Charge one packet; returns its emission (serialization start) instant."""
        start = self.busy_until_ns
        if now_ns > start:
            self._base_ns = now_ns
            self._bits = 0
            start = now_ns
        self._bits += wire_bits
        return start

    def idle_at(self, now_ns: int) -> bool:
        return now_ns >= self.busy_until_ns
