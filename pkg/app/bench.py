"""
Wall-clock benchmarks for offline and online matching.
"""

import logging
import time
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional

import numpy as np

from app.config import BENCH_SAMPLES, BENCH_WARMUP
from app.matcher import CompiledQuery, OnlineSession, match_offline
from app.stream import PerceptionStream

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BenchReport:
    query: str
    frames: int
    samples: int
    matches: int
    mean_ms: float
    min_ms: float
    max_ms: float
    std_ms: float
    frames_per_second: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class OnlineCost:
    """Per-frame push latency over a stream, with its linear trend."""

    frames: int
    window: int
    mean_ms: float
    slope_ms_per_frame: float
    reports: int

    @property
    def relative_slope(self) -> float:
        """Slope scaled to the mean; near zero when cost does not grow with position."""
        return self.slope_ms_per_frame / self.mean_ms if self.mean_ms > 0 else 0.0

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["relative_slope"] = self.relative_slope
        return data


def run_benchmark(
    query: CompiledQuery,
    stream: PerceptionStream,
    samples: int = BENCH_SAMPLES,
    channel: Optional[str] = None,
    warmup: int = BENCH_WARMUP,
) -> BenchReport:
    """
    Time `samples` offline matching runs over the whole stream.

    Each run uses a fresh monitor, so no per-frame work is shared between
    samples. The `warmup` untimed runs before them fill the per-object
    attribute caches a first pass would otherwise pay for.
    """
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    if warmup < 0:
        raise ValueError(f"warmup must be >= 0, got {warmup}")
    for _ in range(warmup):
        match_offline(stream, query.forward, query.monitor(channel))
    timings = np.empty(samples)
    matches = 0
    for sample in range(samples):
        monitor = query.monitor(channel)
        start = time.perf_counter()
        matches = len(match_offline(stream, query.forward, monitor))
        timings[sample] = (time.perf_counter() - start) * 1000

    mean_ms = float(timings.mean())
    report = BenchReport(
        query=query.text,
        frames=len(stream),
        samples=samples,
        matches=matches,
        mean_ms=round(mean_ms, 3),
        min_ms=round(float(timings.min()), 3),
        max_ms=round(float(timings.max()), 3),
        std_ms=round(float(timings.std()), 3),
        frames_per_second=round(len(stream) / mean_ms * 1000, 1) if mean_ms > 0 else 0.0,
    )
    logger.info(f"Benchmark: {report.frames} frames, {report.matches} matches, mean {report.mean_ms}ms")
    return report


def run_sweep(
    query: CompiledQuery,
    stream: PerceptionStream,
    points: int,
    samples: int = BENCH_SAMPLES,
    channel: Optional[str] = None,
    warmup: int = BENCH_WARMUP,
) -> List[BenchReport]:
    """Benchmark `points` evenly spaced stream prefixes, ending with the whole stream."""
    if points < 1:
        raise ValueError(f"points must be >= 1, got {points}")
    sizes = np.unique(np.linspace(len(stream) / points, len(stream), points).round().astype(int))
    reports = []
    for size in sizes:
        if size <= 0:
            continue
        prefix = PerceptionStream(stream.frames[:size])
        reports.append(run_benchmark(query, prefix, samples, channel, warmup))
    return reports


def measure_online(
    query: CompiledQuery,
    stream: PerceptionStream,
    max_window: Optional[int] = None,
    channel: Optional[str] = None,
) -> OnlineCost:
    """Push every frame through one online session, timing each push."""
    session = OnlineSession(query, channel, max_window)
    timings = np.empty(len(stream))
    reports = 0
    for position, frame in enumerate(stream):
        start = time.perf_counter()
        found = session.push(frame)
        timings[position] = (time.perf_counter() - start) * 1000
        reports += found is not None

    if len(stream) >= 2:
        slope = float(np.polyfit(np.arange(len(stream)), timings, 1)[0])
    else:
        slope = 0.0
    mean_ms = float(timings.mean()) if len(stream) else 0.0
    return OnlineCost(len(stream), session.bound, mean_ms, slope, reports)
