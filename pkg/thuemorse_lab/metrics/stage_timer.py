"""
Stage Timer
Tracks wall-clock durations of pipeline stages and self-test checks
"""

import time
import statistics
from collections import defaultdict
from contextlib import contextmanager
from typing import Any, Dict, Iterator, Optional


class StageTimer:
    """Per-stage duration samples in milliseconds"""

    def __init__(self):
        self.metrics = defaultdict(list)

    def record(self, stage: str, duration_ms: float):
        self.metrics[stage].append(duration_ms)

    @contextmanager
    def time(self, stage: str) -> Iterator[None]:
        """Record the duration of the enclosed block, also when it raises"""
        start = time.perf_counter()
        try:
            yield
        finally:
            self.record(stage, (time.perf_counter() - start) * 1000)

    def get_statistics(self, stage: Optional[str] = None) -> Dict[str, Any]:
        """Statistics for one stage, or for every stage keyed by name"""
        if stage is None:
            return {name: self.get_statistics(name) for name in self.metrics}

        values = self.metrics.get(stage, [])
        if not values:
            return {}
        return {
            "stage": stage,
            "count": len(values),
            "mean": statistics.mean(values),
            "min": min(values),
            "max": max(values),
        }

    def total_ms(self) -> float:
        return sum(sum(v) for v in self.metrics.values())
