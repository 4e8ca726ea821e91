"""
In-memory metrics tracking for query matching.
Tracks compiled queries, processed frames, reported matches and latency.
"""

from dataclasses import dataclass, field
from typing import Dict, Any
from threading import Lock


@dataclass
class Metrics:
    """Thread-safe in-memory metrics store."""

    queries_compiled: int = 0
    match_runs: int = 0
    frames_processed: int = 0
    matches_reported: int = 0
    total_latency_ms: float = 0.0
    _lock: Lock = field(default_factory=Lock, repr=False)

    def record_compile(self):
        """Record one successfully compiled query."""
        with self._lock:
            self.queries_compiled += 1

    def record_run(self, frames: int, matches: int, latency_ms: float):
        """Record one matching run (an offline scan or a single online push)."""
        with self._lock:
            self.match_runs += 1
            self.frames_processed += frames
            self.matches_reported += matches
            self.total_latency_ms += latency_ms

    def get_stats(self) -> Dict[str, Any]:
        """Get current metrics snapshot."""
        with self._lock:
            avg_latency = (
                (self.total_latency_ms / self.match_runs)
                if self.match_runs > 0
                else 0.0
            )
            frames_per_second = (
                (self.frames_processed / self.total_latency_ms * 1000)
                if self.total_latency_ms > 0
                else 0.0
            )

            return {
                "queries_compiled": self.queries_compiled,
                "match_runs": self.match_runs,
                "frames_processed": self.frames_processed,
                "matches_reported": self.matches_reported,
                "avg_latency_ms": round(avg_latency, 2),
                "frames_per_second": round(frames_per_second, 2),
            }

    def reset(self):
        """Reset all metrics to zero."""
        with self._lock:
            self.queries_compiled = 0
            self.match_runs = 0
            self.frames_processed = 0
            self.matches_reported = 0
            self.total_latency_ms = 0.0


# Global metrics instance
metrics = Metrics()
