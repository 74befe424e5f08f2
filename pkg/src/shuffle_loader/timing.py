"""Thread-safe counters for per-stage latency and concurrency accounting."""

import threading
import time
from contextlib import contextmanager
from typing import Dict, Iterator

STAGES = ("index_lookup", "read", "decode", "preprocess", "assemble", "consume")


class StageTimes:
    """Accumulates seconds spent per pipeline stage.

    Stages overlap across worker threads, so totals can exceed wall time.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._totals: Dict[str, float] = dict.fromkeys(STAGES, 0.0)

    def add(self, stage: str, seconds: float) -> None:
        """Add `seconds` to `stage`."""
        with self._lock:
            self._totals[stage] = self._totals.get(stage, 0.0) + seconds

    @contextmanager
    def measure(self, stage: str) -> Iterator[None]:
        """Time the enclosed block into `stage`."""
        start = time.perf_counter()
        try:
            yield
        finally:
            self.add(stage, time.perf_counter() - start)

    def snapshot(self) -> Dict[str, float]:
        """Copy of the current totals."""
        with self._lock:
            return dict(self._totals)

    def reset(self) -> None:
        """Zero every stage."""
        with self._lock:
            for stage in self._totals:
                self._totals[stage] = 0.0


class Gauge:
    """A counter of concurrently active things that remembers its peak."""

    def __init__(self):
        self._lock = threading.Lock()
        self._current = 0
        self._peak = 0

    def increment(self, amount: int = 1) -> None:
        """Raise the level by `amount`."""
        with self._lock:
            self._current += amount
            if self._current > self._peak:
                self._peak = self._current

    def decrement(self, amount: int = 1) -> None:
        """Lower the level by `amount`."""
        with self._lock:
            self._current -= amount

    @contextmanager
    def track(self, amount: int = 1) -> Iterator[None]:
        """Hold `amount` for the duration of the block."""
        self.increment(amount)
        try:
            yield
        finally:
            self.decrement(amount)

    @property
    def current(self) -> int:
        """Current level."""
        return self._current

    @property
    def peak(self) -> int:
        """Highest level seen since creation or the last reset."""
        return self._peak

    def reset(self) -> None:
        """Forget the peak; keep the current level."""
        with self._lock:
            self._peak = self._current

