"""Worker-count policy driven by queue depth and the delivery window."""

from __future__ import annotations

import threading
from dataclasses import dataclass
from fractions import Fraction

WARMUP_ITEMS = 30


@dataclass(frozen=True)
class ScalePolicy:
    """``per_worker_rate`` of None means: estimate it from the first completed items."""

    delivery_window: float
    per_worker_rate: float | None = None
    min_workers: int = 0
    max_workers: int = 8
    initial_rate: float = 1.0

    def __post_init__(self):
        if self.delivery_window <= 0:
            raise ValueError("delivery_window must be positive")
        if self.per_worker_rate is not None and self.per_worker_rate <= 0:
            raise ValueError("per_worker_rate must be positive")
        if not 0 <= self.min_workers <= self.max_workers:
            raise ValueError("need 0 <= min_workers <= max_workers")


def autoscale_tick(policy: ScalePolicy, queue_depth: int, current_workers: int = 0,
                   rate: float | None = None) -> int:
    """Desired worker count: enough to drain ``queue_depth`` within the window, clamped.

    ``current_workers`` is accepted for interface symmetry; the target does not
    depend on it. ``rate`` overrides the policy's configured per-worker rate.
    """
    if queue_depth <= 0:
        return 0
    r = rate if rate is not None else policy.per_worker_rate
    if r is None:
        r = policy.initial_rate
    per_worker = Fraction(r) * Fraction(policy.delivery_window)
    needed = -(-Fraction(queue_depth) // per_worker)
    return int(min(max(needed, policy.min_workers), policy.max_workers))


class RateEstimator:
    """Messages per worker-second, from the first ``warmup`` completed messages."""

    def __init__(self, warmup: int = WARMUP_ITEMS):
        self.warmup = warmup
        self._lock = threading.Lock()
        self._items = 0
        self._busy = 0.0

    def observe(self, seconds: float) -> None:
        with self._lock:
            if self._items < self.warmup:
                self._items += 1
                self._busy += max(seconds, 1e-6)

    @property
    def samples(self) -> int:
        return self._items

    def rate(self) -> float | None:
        with self._lock:
            if self._items < min(self.warmup, 1) or self._busy <= 0:
                return None
            return self._items / self._busy

    def ready(self) -> bool:
        return self._items >= self.warmup
