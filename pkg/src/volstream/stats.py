"""Small statistics helpers shared by metrics and the probe experiment."""

from __future__ import annotations


def mean(values) -> float:
    values = list(values)
    if not values:
        raise ValueError("mean of empty sequence")
    return sum(values) / len(values)


def percentile_nearest_rank(sorted_values, q: float):
    """Nearest-rank percentile over an already-sorted sequence, q in (0, 100]."""
    if not sorted_values:
        raise ValueError("percentile of empty sequence")
    if not 0 < q <= 100:
        raise ValueError(f"q must be in (0, 100], got {q}")
    rank = -(-int(q * len(sorted_values)) // 100)  # ceil(q*n/100)
    return sorted_values[max(rank, 1) - 1]


def jitter(values) -> float:
    """Mean absolute difference between successive values; 0 for < 2 values."""
    values = list(values)
    if len(values) < 2:
        return 0.0
    return sum(abs(b - a) for a, b in zip(values, values[1:])) / (len(values) - 1)
