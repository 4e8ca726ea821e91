"""
Perception stream ingest from newline-delimited JSON.
Validates records against the wire schema, checks key-frame alignment,
and clips object regions to their channel's environment bounds.
"""

import json
import logging
from dataclasses import dataclass
from typing import IO, Any, Dict, Iterable, Iterator, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from app.config import CLASSIFICATION_KEY, CLIP_TO_ENVIRONMENT, DROP_MISALIGNED, KEYFRAME_EPSILON
from app.stream import (
    AttributeSet,
    BoundingRegionSpec,
    ChannelInfo,
    ChannelSample,
    Frame,
    ObjectAnnotation,
    PerceptionStream,
    StreamError,
)

logger = logging.getLogger(__name__)


class IngestError(Exception):
    """Custom exception for stream ingest errors."""
    pass


class MalformedRecordError(IngestError):
    """A line is not valid JSON."""

    def __init__(self, message: str, line_number: int, offset: int):
        super().__init__(f"line {line_number} (byte {offset}): {message}")
        self.line_number = line_number
        self.offset = offset


class SchemaViolationError(IngestError):
    """A record is valid JSON but does not follow the frame schema."""

    def __init__(self, message: str, field: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.field = field
        self.line_number = line_number


class KeyFrameError(IngestError):
    """Channel timestamps of a frame disagree by more than the threshold."""
    pass


@dataclass(frozen=True)
class IngestConfig:
    keyframe_threshold: float = KEYFRAME_EPSILON
    classification_key: str = CLASSIFICATION_KEY
    clip_to_environment: bool = CLIP_TO_ENVIRONMENT
    drop_misaligned: bool = DROP_MISALIGNED

    def __post_init__(self):
        if self.keyframe_threshold < 0:
            raise IngestError(f"key-frame threshold must be >= 0, got {self.keyframe_threshold}")


# ==================== WIRE SCHEMA ====================


def _check_corners(corners: List[List[float]]) -> List[List[float]]:
    if len(corners) != 2:
        raise ValueError("expected [[min...], [max...]]")
    lower, upper = corners
    if len(lower) != len(upper) or len(lower) not in (2, 3):
        raise ValueError("corners need 2 or 3 coordinates each, of equal length")
    if any(lo > hi for lo, hi in zip(lower, upper)):
        raise ValueError("min corner exceeds max corner")
    return corners


class ObjectRecord(BaseModel):
    model_config = ConfigDict(extra="ignore", populate_by_name=True, coerce_numbers_to_str=True)

    id: str
    class_: str = Field(alias="class")
    attributes: Dict[str, str] = Field(default_factory=dict)
    bbox: List[List[float]]
    rotation: Optional[float] = None
    confidence: Optional[float] = Field(default=None, ge=0.0, le=1.0)

    @field_validator("bbox")
    @classmethod
    def check_bbox(cls, value: List[List[float]]) -> List[List[float]]:
        return _check_corners(value)


class ChannelRecord(BaseModel):
    model_config = ConfigDict(extra="ignore")

    name: str
    timestamp: float
    bounds: List[List[float]]
    objects: List[ObjectRecord] = Field(default_factory=list)

    @field_validator("bounds")
    @classmethod
    def check_bounds(cls, value: List[List[float]]) -> List[List[float]]:
        return _check_corners(value)


class FrameRecord(BaseModel):
    model_config = ConfigDict(extra="ignore")

    index: int = Field(ge=0)
    channels: List[ChannelRecord] = Field(min_length=1)


# ==================== PARSING ====================


def _to_object(record: ObjectRecord, bounds: BoundingRegionSpec, config: IngestConfig) -> Optional[ObjectAnnotation]:
    lower, upper = record.bbox
    if len(lower) != bounds.dims:
        raise StreamError(f"object '{record.id}' has {len(lower)}D bbox in a {bounds.dims}D channel")
    if config.clip_to_environment:
        clipped_lower = [max(v, lo) for v, lo in zip(lower, bounds.min)]
        clipped_upper = [min(v, hi) for v, hi in zip(upper, bounds.max)]
        if any(lo > hi for lo, hi in zip(clipped_lower, clipped_upper)):
            logger.warning(f"Dropped object '{record.id}': bbox lies outside the environment bounds")
            return None
        if clipped_lower != lower or clipped_upper != upper:
            logger.info(f"Clipped bbox of object '{record.id}' to environment bounds")
        lower, upper = clipped_lower, clipped_upper

    attributes = dict(record.attributes)
    attributes[config.classification_key] = record.class_
    return ObjectAnnotation(
        id=record.id,
        attributes=AttributeSet.from_mapping(attributes),
        region=BoundingRegionSpec.from_corners(lower, upper, record.rotation),
        confidence=record.confidence,
    )


def _to_frame(record: FrameRecord, config: IngestConfig) -> Frame:
    samples = []
    for channel in record.channels:
        bounds = BoundingRegionSpec.from_corners(*channel.bounds)
        info = ChannelInfo(name=channel.name, environment_bounds=bounds, timestamp=channel.timestamp)
        objects = tuple(o for o in (_to_object(obj, bounds, config) for obj in channel.objects) if o is not None)
        samples.append(ChannelSample(info, objects))
    return Frame(index=record.index, channels=tuple(samples))


def _field_name(error: Dict[str, Any]) -> str:
    return ".".join(str(part) for part in error.get("loc", ())) or "<record>"


def parse_frame_record(
    line: Union[bytes, str],
    config: Optional[IngestConfig] = None,
    line_number: int = 1,
    offset: int = 0,
) -> Frame:
    """
    Parse one newline-delimited JSON frame record.

    Args:
        line: Raw record bytes (or text)
        config: Ingest settings, defaults from app.config
        line_number: 1-based line number used in error messages
        offset: Byte offset of the line start within its source

    Returns:
        Frame built from the record, unknown fields ignored

    Raises:
        MalformedRecordError: the line is not JSON
        SchemaViolationError: a required field is missing or invalid
    """
    config = config or IngestConfig()
    try:
        payload = json.loads(line)
    except json.JSONDecodeError as e:
        raise MalformedRecordError(e.msg, line_number, offset + e.pos) from e
    except UnicodeDecodeError as e:
        raise MalformedRecordError(f"invalid UTF-8: {e.reason}", line_number, offset + e.start) from e

    try:
        record = FrameRecord.model_validate(payload)
    except ValidationError as e:
        first = e.errors()[0]
        name = _field_name(first)
        if first.get("type") == "missing":
            message = f"missing field '{name}'"
        else:
            message = f"invalid field '{name}': {first.get('msg')}"
        raise SchemaViolationError(message, name, line_number) from e

    return frame_from_record(record, config, line_number)


def frame_from_record(record: FrameRecord, config: Optional[IngestConfig] = None, line_number: int = 1) -> Frame:
    """Build a Frame from an already validated record."""
    config = config or IngestConfig()
    try:
        return _to_frame(record, config)
    except StreamError as e:
        raise SchemaViolationError(str(e), "channels", line_number) from e


def validate_key_frame(frame: Frame, config: Optional[IngestConfig] = None) -> bool:
    """True iff every pair of channel timestamps is within the key-frame threshold."""
    config = config or IngestConfig()
    stamps = [sample.info.timestamp for sample in frame.channels]
    if len(stamps) < 2:
        return True
    return max(stamps) - min(stamps) <= config.keyframe_threshold


def iter_frames(source: Union[IO[bytes], Iterable[bytes]], config: Optional[IngestConfig] = None) -> Iterator[Frame]:
    """
    Yield frames one at a time in arrival order, re-indexed from 0.

    Blank lines are skipped. Misaligned frames raise KeyFrameError unless
    `config.drop_misaligned` is set, in which case they are dropped.
    """
    config = config or IngestConfig()
    return _sequence(_parse_lines(source, config), config)


def _parse_lines(source: Union[IO[bytes], Iterable[bytes]], config: IngestConfig) -> Iterator[Tuple[int, Frame]]:
    offset = 0
    for line_number, raw in enumerate(source, start=1):
        line_start = offset
        offset += len(raw)
        if not raw.strip():
            continue
        yield line_number, parse_frame_record(raw, config, line_number, line_start)


def _sequence(numbered: Iterable[Tuple[int, Frame]], config: IngestConfig) -> Iterator[Frame]:
    next_index = 0
    for line_number, frame in numbered:
        if not validate_key_frame(frame, config):
            if config.drop_misaligned:
                logger.warning(f"Dropping misaligned frame at line {line_number}")
                continue
            raise KeyFrameError(
                f"line {line_number}: channel timestamps differ by more than {config.keyframe_threshold}s"
            )

        if frame.index != next_index:
            logger.warning(f"Frame at line {line_number} declares index {frame.index}, reassigned to {next_index}")
            frame = Frame(index=next_index, channels=frame.channels)
        next_index += 1
        yield frame


def load_stream(source: Union[IO[bytes], Iterable[bytes]], config: Optional[IngestConfig] = None) -> PerceptionStream:
    """Read a whole stream into memory."""
    frames = tuple(iter_frames(source, config))
    logger.info(f"Loaded {len(frames)} frames")
    return PerceptionStream(frames)


def stream_from_records(records: Iterable[FrameRecord], config: Optional[IngestConfig] = None) -> PerceptionStream:
    """Same alignment and re-indexing as `load_stream`, for records validated elsewhere."""
    config = config or IngestConfig()
    numbered = ((n, frame_from_record(record, config, n)) for n, record in enumerate(records, start=1))
    return PerceptionStream(tuple(_sequence(numbered, config)))


# ==================== WRITING ====================


def frame_to_record(frame: Frame, config: Optional[IngestConfig] = None) -> Dict[str, Any]:
    """Inverse of parse_frame_record, used by the synthetic generator."""
    config = config or IngestConfig()
    channels = []
    for sample in frame.channels:
        objects = []
        for obj in sample.objects:
            attributes = obj.attributes.as_dict.copy()
            label = attributes.pop(config.classification_key, "")
            record: Dict[str, Any] = {
                "id": obj.id,
                "class": label,
                "attributes": attributes,
                "bbox": [list(obj.region.min), list(obj.region.max)],
            }
            if obj.region.rotation is not None:
                record["rotation"] = obj.region.rotation
            if obj.confidence is not None:
                record["confidence"] = obj.confidence
            objects.append(record)
        bounds = sample.info.environment_bounds
        channels.append(
            {
                "name": sample.info.name,
                "timestamp": sample.info.timestamp,
                "bounds": [list(bounds.min), list(bounds.max)],
                "objects": objects,
            }
        )
    return {"index": frame.index, "channels": channels}


def write_stream(frames: Iterable[Frame], sink: IO[str], config: Optional[IngestConfig] = None) -> int:
    """Write frames as newline-delimited JSON; returns the number written."""
    count = 0
    for frame in frames:
        sink.write(json.dumps(frame_to_record(frame, config), separators=(",", ":")))
        sink.write("\n")
        count += 1
    return count
