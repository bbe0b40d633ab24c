# thalassa/utils/timing.py
"""
Stage timing - mean / p95 runtime of repeated pipeline stages
"""

import time
from typing import Dict, List

from loguru import logger


class StageTimer:
    def __init__(self, stage: str, max_samples: int = 100_000):
        self.stage = stage
        self._durations_ms: List[float] = []
        self._max_samples = max_samples

    def record(self, duration_ms: float) -> None:
        self._durations_ms.append(float(duration_ms))
        if len(self._durations_ms) > self._max_samples:
            self._durations_ms = self._durations_ms[-self._max_samples:]

    def measure(self) -> "StageContext":
        return StageContext(self)

    @property
    def count(self) -> int:
        return len(self._durations_ms)

    @property
    def mean_ms(self) -> float:
        if not self._durations_ms:
            return 0.0
        return round(sum(self._durations_ms) / len(self._durations_ms), 2)

    @property
    def p95_ms(self) -> float:
        if not self._durations_ms:
            return 0.0
        ordered = sorted(self._durations_ms)
        idx = min(int(len(ordered) * 0.95), len(ordered) - 1)
        return round(ordered[idx], 2)

    def stats(self) -> Dict[str, float]:
        return {"count": self.count, "mean_ms": self.mean_ms, "p95_ms": self.p95_ms}

    def log(self) -> None:
        logger.info(f"⏱️ {self.stage}: {self.count} runs, mean {self.mean_ms:.1f} ms, p95 {self.p95_ms:.1f} ms")


class StageContext:
    def __init__(self, timer: StageTimer):
        self.timer = timer
        self.start = None

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *args):
        self.timer.record((time.perf_counter() - self.start) * 1000)
