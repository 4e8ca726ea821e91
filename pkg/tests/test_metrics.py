"""
Tests for the metrics module.
"""

from concurrent.futures import ThreadPoolExecutor

from app.metrics import Metrics


class TestMetrics:
    """Tests for metrics tracking."""

    def test_initial_state(self):
        """Metrics should start at zero."""
        metrics = Metrics()
        stats = metrics.get_stats()

        assert stats["queries_compiled"] == 0
        assert stats["match_runs"] == 0
        assert stats["frames_processed"] == 0
        assert stats["matches_reported"] == 0
        assert stats["avg_latency_ms"] == 0.0
        assert stats["frames_per_second"] == 0.0

    def test_record_compile(self):
        """Compiles are counted separately from runs."""
        metrics = Metrics()
        metrics.record_compile()
        metrics.record_compile()

        stats = metrics.get_stats()
        assert stats["queries_compiled"] == 2
        assert stats["match_runs"] == 0

    def test_record_run(self):
        """A run adds its frames and matches."""
        metrics = Metrics()
        metrics.record_run(frames=100, matches=3, latency_ms=50.0)

        stats = metrics.get_stats()
        assert stats["match_runs"] == 1
        assert stats["frames_processed"] == 100
        assert stats["matches_reported"] == 3
        assert stats["avg_latency_ms"] == 50.0

    def test_average_latency_calculation(self):
        """Average latency is per run."""
        metrics = Metrics()
        metrics.record_run(10, 0, 100.0)
        metrics.record_run(10, 1, 200.0)

        stats = metrics.get_stats()
        assert stats["avg_latency_ms"] == 150.0

    def test_throughput_calculation(self):
        """Frames per second over the total latency."""
        metrics = Metrics()
        metrics.record_run(500, 0, 250.0)
        metrics.record_run(500, 0, 250.0)

        stats = metrics.get_stats()
        assert stats["frames_per_second"] == 2000.0

    def test_reset(self):
        """Reset should zero all metrics."""
        metrics = Metrics()
        metrics.record_compile()
        metrics.record_run(10, 2, 5.0)
        metrics.reset()

        stats = metrics.get_stats()
        assert stats["queries_compiled"] == 0
        assert stats["match_runs"] == 0
        assert stats["frames_processed"] == 0
        assert stats["avg_latency_ms"] == 0.0

    def test_concurrent_updates(self):
        """Updates from many threads are not lost."""
        metrics = Metrics()
        with ThreadPoolExecutor(max_workers=8) as pool:
            for _ in range(400):
                pool.submit(metrics.record_run, 1, 1, 1.0)

        stats = metrics.get_stats()
        assert stats["match_runs"] == 400
        assert stats["frames_processed"] == 400
