"""
Tests for the FastAPI endpoints.
"""

import pytest
from fastapi.testclient import TestClient

from tests.builders import frame_record, overlap_records
from tests.corpus import QUERY_A1, QUERY_B2


@pytest.fixture
def client():
    from app.main import app
    return TestClient(app)


class TestQueryValidation:
    """Tests for query input validation."""

    def test_query_min_length(self, client):
        """Query must have at least 1 character."""
        response = client.post("/match", json={"query": ""})
        assert response.status_code == 422  # Validation error

    def test_query_max_length(self, client):
        """Query must not exceed 2000 characters."""
        long_query = "[[:a:]]" * 300
        response = client.post("/match", json={"query": long_query})
        assert response.status_code == 422  # Validation error

    def test_query_valid_length(self):
        """Length limits come from config."""
        from app.main import MAX_QUERY_LENGTH, MIN_QUERY_LENGTH

        assert MIN_QUERY_LENGTH == 1
        assert MAX_QUERY_LENGTH == 2000

    def test_ill_formed_query(self, client):
        """Parser and well-formedness errors come back as 422 with the diagnostic."""
        response = client.post("/match", json={"query": "[<nonempty>(v)]"})
        assert response.status_code == 422
        assert "free variable" in response.json()["detail"]

    def test_malformed_frame(self, client):
        """Frames that break the schema are rejected."""
        response = client.post("/match", json={"query": QUERY_A1, "frames": [{"index": 0, "channels": []}]})
        assert response.status_code == 422


class TestHealthEndpoint:
    """Tests for health check endpoint."""

    def test_health_returns_200(self, client):
        """Health endpoint should return 200."""
        response = client.get("/health")
        assert response.status_code == 200

    def test_health_returns_healthy_status(self, client):
        """Health endpoint should return healthy status."""
        response = client.get("/health")
        assert response.json() == {"status": "healthy"}


class TestMetricsEndpoint:
    """Tests for metrics endpoint."""

    def test_metrics_returns_expected_fields(self, client):
        """Metrics should include all expected fields."""
        data = client.get("/metrics").json()

        assert "queries_compiled" in data
        assert "match_runs" in data
        assert "frames_processed" in data
        assert "matches_reported" in data
        assert "avg_latency_ms" in data
        assert "frames_per_second" in data

    def test_match_updates_metrics(self, client):
        """A match run adds its frames."""
        client.post("/metrics/reset")
        client.post("/match", json={"query": QUERY_A1, "frames": overlap_records("..ooo.")})

        data = client.get("/metrics").json()
        assert data["queries_compiled"] == 1
        assert data["frames_processed"] == 6
        assert data["matches_reported"] == 1

    def test_reset(self, client):
        """Reset zeroes the counters."""
        client.post("/compile", json={"query": QUERY_A1})
        response = client.post("/metrics/reset")
        assert response.json() == {"status": "metrics reset"}
        assert client.get("/metrics").json()["queries_compiled"] == 0


class TestMatchEndpoint:
    """Tests for offline matching."""

    def test_overlap_run(self, client):
        """One run of three overlap frames."""
        response = client.post("/match", json={"query": QUERY_A1, "frames": overlap_records("..ooo.")})
        assert response.status_code == 200
        data = response.json()
        assert data["matches"] == [{"start": 2, "end": 5, "frames": 3}]
        assert data["horizon"] is None
        assert data["symbols"] == 1

    def test_no_frames(self, client):
        """An empty stream has no matches."""
        data = client.post("/match", json={"query": QUERY_A1}).json()
        assert data["matches"] == []

    def test_unknown_channel(self, client):
        """Naming a channel the frames do not have is a 422."""
        response = client.post(
            "/match",
            json={"query": QUERY_A1, "frames": overlap_records("o"), "channel": "lidar"},
        )
        assert response.status_code == 422

    def test_too_many_frames(self, client):
        """Requests above the frame limit are refused."""
        from app.config import MAX_FRAMES_PER_REQUEST

        frames = [frame_record(0, [])] * (MAX_FRAMES_PER_REQUEST + 1)
        response = client.post("/match", json={"query": QUERY_A1, "frames": frames})
        assert response.status_code == 413


class TestCompileEndpoint:
    """Tests for query compilation."""

    def test_compile(self, client):
        """Canonical text, symbols, states and graph."""
        response = client.post("/compile", json={"query": "[[:a:]] [[:b:]]"})
        assert response.status_code == 200
        data = response.json()
        assert data["canonical"] == "([[:a:]] [[:b:]])"
        assert data["symbols"] == ["[:a:]", "[:b:]"]
        assert data["states"] == 3
        assert data["horizon"] == 2
        assert data["dot"].startswith("digraph spre {")

    def test_compile_error(self, client):
        """Lexical errors are a 422."""
        response = client.post("/compile", json={"query": "[[:a:]] @"})
        assert response.status_code == 422


class TestSessions:
    """Tests for online sessions."""

    def test_session_lifecycle(self, client):
        """Open, push frames, close."""
        response = client.post("/sessions", json={"query": QUERY_A1, "max_window": 10})
        assert response.status_code == 200
        session_id = response.json()["session_id"]
        assert response.json()["bound"] == 10

        found = []
        for record in overlap_records("..oo"):
            reply = client.post(f"/sessions/{session_id}/frames", json=record)
            assert reply.status_code == 200
            found.append(reply.json()["match"])
        assert found == [None, None, {"start": 2, "end": 3, "frames": 1}, {"start": 2, "end": 4, "frames": 2}]

        assert client.delete(f"/sessions/{session_id}").json() == {"status": "session closed"}
        assert client.post(f"/sessions/{session_id}/frames", json=overlap_records("o")[0]).status_code == 404

    def test_bounded_horizon(self, client):
        """Without a window the buffer holds the horizon."""
        response = client.post("/sessions", json={"query": QUERY_B2})
        assert response.json()["bound"] == 201

    def test_unbounded_horizon_needs_window(self, client):
        """A starred query without a window is refused."""
        response = client.post("/sessions", json={"query": QUERY_A1})
        assert response.status_code == 422

    def test_unknown_session(self, client):
        """Unknown ids are a 404."""
        assert client.post("/sessions/missing/frames", json=overlap_records("o")[0]).status_code == 404
        assert client.delete("/sessions/missing").status_code == 404

    def test_misaligned_frame(self, client):
        """Channels more than the key-frame threshold apart are rejected."""
        session_id = client.post("/sessions", json={"query": QUERY_A1, "max_window": 5}).json()["session_id"]
        record = frame_record(0, [])
        record["channels"].append({**record["channels"][0], "name": "lidar", "timestamp": 1.0})
        response = client.post(f"/sessions/{session_id}/frames", json=record)
        assert response.status_code == 422
