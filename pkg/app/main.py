"""
FastAPI server for spatial regular expression queries.
Offline matching over posted frames, query compilation, and online
sessions that report matches frame by frame.
"""

import logging
import time
import uuid
from threading import Lock
from typing import Dict, List, Optional

from fastapi import FastAPI, HTTPException, Request
from pydantic import BaseModel, Field
from slowapi import Limiter, _rate_limit_exceeded_handler
from slowapi.util import get_remote_address
from slowapi.errors import RateLimitExceeded

from app.automaton import StateLimitError, to_dot
from app.config import KEYFRAME_EPSILON, LOG_FORMAT, MAX_FRAMES_PER_REQUEST, MAX_QUERY_LENGTH, RATE_LIMIT
from app.ingest import (
    FrameRecord,
    IngestConfig,
    IngestError,
    KeyFrameError,
    frame_from_record,
    stream_from_records,
    validate_key_frame,
)
from app.matcher import CompiledQuery, MatcherConfigError, OnlineSession, match_offline
from app.metrics import metrics
from app.monitor import MonitorError
from app.parser import QueryError
from app.regions import RegionError
from app.stream import StreamError
from app.syntax import formula_to_source

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format=LOG_FORMAT,
)
logger = logging.getLogger(__name__)

# Rate limiter - uses client IP address
limiter = Limiter(key_func=get_remote_address)

app = FastAPI(title="Spatial Regular Expression Query Service")
app.state.limiter = limiter
app.add_exception_handler(RateLimitExceeded, _rate_limit_exceeded_handler)

# Query length limits
MIN_QUERY_LENGTH = 1

QUERY_ERRORS = (QueryError, IngestError, StreamError, MonitorError, StateLimitError, MatcherConfigError, RegionError)

# Online sessions by id
sessions: Dict[str, OnlineSession] = {}
sessions_lock = Lock()


class QueryText(BaseModel):
    query: str = Field(
        ...,
        min_length=MIN_QUERY_LENGTH,
        max_length=MAX_QUERY_LENGTH,
        description="Spatial regular expression",
    )


class MatchRequest(QueryText):
    frames: List[FrameRecord] = Field(default_factory=list)
    channel: Optional[str] = None
    epsilon: float = Field(default=KEYFRAME_EPSILON, ge=0.0)


class MatchItem(BaseModel):
    start: int
    end: int
    frames: int


class MatchResponse(BaseModel):
    matches: List[MatchItem]
    horizon: Optional[int] = None  # null when unbounded
    symbols: int
    latency_ms: float


class CompileResponse(BaseModel):
    canonical: str
    symbols: List[str]
    states: int
    horizon: Optional[int] = None
    dot: str


class SessionRequest(QueryText):
    channel: Optional[str] = None
    max_window: Optional[int] = Field(default=None, ge=1)


class SessionResponse(BaseModel):
    session_id: str
    bound: int


class FrameResponse(BaseModel):
    match: Optional[MatchItem] = None


def _compile(text: str) -> CompiledQuery:
    try:
        compiled = CompiledQuery.compile(text)
    except QUERY_ERRORS as e:
        logger.warning(f"Rejected query: {e}")
        raise HTTPException(status_code=422, detail=str(e))
    metrics.record_compile()
    return compiled


@app.post("/match", response_model=MatchResponse)
@limiter.limit(RATE_LIMIT)
async def match(request: Request, match_request: MatchRequest):
    """
    Offline leftmost-longest matching over the posted frames.

    Frames go through the same key-frame check and re-indexing as file
    input. Rate limited per client IP.
    """
    if len(match_request.frames) > MAX_FRAMES_PER_REQUEST:
        raise HTTPException(status_code=413, detail=f"at most {MAX_FRAMES_PER_REQUEST} frames per request")

    start_time = time.time()
    compiled = _compile(match_request.query)
    logger.info(f"Matching {len(match_request.frames)} frames against: {match_request.query[:50]}")

    try:
        stream = stream_from_records(match_request.frames, IngestConfig(keyframe_threshold=match_request.epsilon))
        found = match_offline(stream, compiled.forward, compiled.monitor(match_request.channel))
    except QUERY_ERRORS as e:
        logger.warning(f"Match failed: {e}")
        raise HTTPException(status_code=422, detail=str(e))
    except Exception as e:
        logger.error(f"Unexpected error: {e}")
        raise HTTPException(status_code=500, detail="Internal server error")

    latency_ms = (time.time() - start_time) * 1000
    metrics.record_run(len(stream), len(found), latency_ms)
    return MatchResponse(
        matches=[MatchItem(start=m.start, end=m.end, frames=len(m)) for m in found],
        horizon=compiled.horizon.value,
        symbols=len(compiled.symbols),
        latency_ms=round(latency_ms, 2),
    )


@app.post("/compile", response_model=CompileResponse)
@limiter.limit(RATE_LIMIT)
async def compile_query(request: Request, query_request: QueryText):
    """Canonical form, symbol table and automaton of a query."""
    compiled = _compile(query_request.query)
    return CompileResponse(
        canonical=compiled.canonical,
        symbols=[formula_to_source(formula) for formula in compiled.symbols],
        states=compiled.forward.num_states,
        horizon=compiled.horizon.value,
        dot=to_dot(compiled.forward),
    )


@app.post("/sessions", response_model=SessionResponse)
@limiter.limit(RATE_LIMIT)
async def create_session(request: Request, session_request: SessionRequest):
    """Open an online session; frames are then posted one at a time."""
    compiled = _compile(session_request.query)
    try:
        session = OnlineSession(compiled, session_request.channel, session_request.max_window, metrics)
    except QUERY_ERRORS as e:
        raise HTTPException(status_code=422, detail=str(e))

    session_id = uuid.uuid4().hex
    with sessions_lock:
        sessions[session_id] = session
    logger.info(f"Opened session {session_id} with window {session.bound}")
    return SessionResponse(session_id=session_id, bound=session.bound)


def _session(session_id: str) -> OnlineSession:
    with sessions_lock:
        session = sessions.get(session_id)
    if session is None:
        raise HTTPException(status_code=404, detail=f"unknown session '{session_id}'")
    return session


@app.post("/sessions/{session_id}/frames", response_model=FrameResponse)
async def push_frame(session_id: str, frame: FrameRecord):
    """Push the next frame; returns the longest match ending at it, if any."""
    session = _session(session_id)
    try:
        built = frame_from_record(frame)
        if not validate_key_frame(built):
            raise KeyFrameError(f"frame {frame.index}: channel timestamps are not aligned")
        found = session.push(built)
    except QUERY_ERRORS as e:
        raise HTTPException(status_code=422, detail=str(e))

    if found is None:
        return FrameResponse(match=None)
    return FrameResponse(match=MatchItem(start=found.start, end=found.end, frames=len(found)))


@app.delete("/sessions/{session_id}")
async def close_session(session_id: str):
    """Discard an online session."""
    with sessions_lock:
        removed = sessions.pop(session_id, None)
    if removed is None:
        raise HTTPException(status_code=404, detail=f"unknown session '{session_id}'")
    logger.info(f"Closed session {session_id}")
    return {"status": "session closed"}


@app.get("/metrics")
async def get_metrics():
    """Get current matching metrics."""
    return metrics.get_stats()


@app.post("/metrics/reset")
async def reset_metrics():
    """Reset all metrics to zero."""
    metrics.reset()
    logger.info("Metrics reset")
    return {"status": "metrics reset"}


@app.get("/health")
async def health():
    """Health check endpoint."""
    return {"status": "healthy"}
