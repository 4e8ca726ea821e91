"""
Tests for newline-delimited JSON ingest.
"""

import io
import json

import pytest

from app.generator import GeneratorConfig, generate_stream
from app.ingest import (
    FrameRecord,
    IngestConfig,
    IngestError,
    KeyFrameError,
    MalformedRecordError,
    SchemaViolationError,
    iter_frames,
    load_stream,
    parse_frame_record,
    stream_from_records,
    validate_key_frame,
    write_stream,
)
from tests.builders import frame_record, object_record, to_jsonl

MINIMAL = '{"index":0,"channels":[{"name":"cam","bounds":[[0,0],[100,100]],"timestamp":1.0,"objects":[]}]}'


def two_channel_record(index, first, second):
    record = frame_record(index, [], timestamp=first)
    lidar = dict(record["channels"][0], name="lidar", timestamp=second)
    record["channels"].append(lidar)
    return record


class TestParseFrameRecord:
    """Tests for single-record parsing."""

    def test_minimal_record(self):
        """One channel without objects."""
        frame = parse_frame_record(MINIMAL)
        assert frame.index == 0
        assert len(frame.channels) == 1
        assert frame.channels[0].info.name == "cam"
        assert frame.channels[0].info.timestamp == 1.0
        assert frame.channels[0].objects == ()

    def test_object_attributes_include_class(self):
        """The class field lands in the attributes under the classification key."""
        record = frame_record(0, [object_record(1, "bus", (10, 10), (20, 20), attributes={"color": "red"})])
        obj = parse_frame_record(json.dumps(record)).channels[0].objects[0]
        assert obj.id == "1"
        assert obj.attributes.get("class") == "bus"
        assert obj.attributes.get("color") == "red"
        assert obj.region.as_box() == ((10.0, 10.0), (20.0, 20.0))

    def test_custom_classification_key(self):
        """The class value can be stored under another key."""
        record = frame_record(0, [object_record(1, "bus", (10, 10), (20, 20))])
        frame = parse_frame_record(json.dumps(record), IngestConfig(classification_key="label"))
        attributes = frame.channels[0].objects[0].attributes
        assert attributes.get("label") == "bus"
        assert attributes.get("class") is None

    def test_numeric_id_becomes_string(self):
        """Object ids are strings even when written as numbers."""
        record = frame_record(0, [dict(object_record(1, "car", (0, 0), (1, 1)), id=7)])
        assert parse_frame_record(json.dumps(record)).channels[0].objects[0].id == "7"

    def test_bbox_clipped_to_bounds(self):
        """Regions sticking out of the environment are clipped."""
        record = frame_record(0, [object_record(1, "car", (90, -5), (130, 20))])
        obj = parse_frame_record(json.dumps(record)).channels[0].objects[0]
        assert obj.region.as_box() == ((90.0, 0.0), (100.0, 20.0))

    def test_bbox_outside_bounds_dropped(self):
        """A bbox with no overlap with the environment leaves no object behind."""
        record = frame_record(
            0,
            [object_record("b", "bus", (200, 200), (300, 300)), object_record("c", "car", (90, 90), (100, 100))],
        )
        objects = parse_frame_record(json.dumps(record)).channels[0].objects
        assert [obj.id for obj in objects] == ["c"]

    def test_bbox_touching_bounds_kept(self):
        """A bbox meeting the boundary clips to a degenerate box on it."""
        record = frame_record(0, [object_record(1, "car", (100, 50), (120, 60))])
        obj = parse_frame_record(json.dumps(record)).channels[0].objects[0]
        assert obj.region.as_box() == ((100.0, 50.0), (100.0, 60.0))

    def test_clipping_can_be_disabled(self):
        """With clipping off the bbox is kept as written."""
        record = frame_record(0, [object_record(1, "car", (90, -5), (130, 20))])
        config = IngestConfig(clip_to_environment=False)
        obj = parse_frame_record(json.dumps(record), config).channels[0].objects[0]
        assert obj.region.as_box() == ((90.0, -5.0), (130.0, 20.0))

    def test_unknown_fields_ignored(self):
        """Extra keys anywhere in the record are ignored."""
        record = frame_record(0, [dict(object_record(1, "car", (0, 0), (1, 1)), velocity=3.0)])
        record["weather"] = "rain"
        frame = parse_frame_record(json.dumps(record))
        assert len(frame.channels[0].objects) == 1

    def test_optional_rotation_and_confidence(self):
        """3D objects may carry yaw and confidence."""
        bounds = ((0, 0, 0), (50, 50, 10))
        obj = object_record(1, "car", (1, 1, 0), (5, 3, 2), rotation=0.25, confidence=0.9)
        frame = parse_frame_record(json.dumps(frame_record(0, [obj], bounds=bounds)))
        parsed = frame.channels[0].objects[0]
        assert parsed.region.kind == "box3d"
        assert parsed.region.rotation == 0.25
        assert parsed.confidence == 0.9

    def test_malformed_json(self):
        """Invalid JSON reports line number and byte offset."""
        with pytest.raises(MalformedRecordError) as exc_info:
            parse_frame_record('{"index": 0,', line_number=4, offset=100)
        assert exc_info.value.line_number == 4
        assert exc_info.value.offset >= 100

    def test_invalid_utf8(self):
        """Undecodable bytes are a malformed record at their byte offset."""
        line = MINIMAL.encode().replace(b'"cam"', b'"\xff\xfe"')
        with pytest.raises(MalformedRecordError) as exc_info:
            parse_frame_record(line, line_number=3, offset=100)
        assert exc_info.value.line_number == 3
        assert exc_info.value.offset == 100 + line.index(b"\xff")

    def test_missing_field_is_named(self):
        """A schema violation names the missing field."""
        with pytest.raises(SchemaViolationError) as exc_info:
            parse_frame_record('{"index": 0}')
        assert exc_info.value.field == "channels"
        assert "channels" in str(exc_info.value)

    def test_missing_nested_field_is_named(self):
        """Nested paths are reported with dots."""
        record = frame_record(0, [{"id": "1", "class": "car"}])
        with pytest.raises(SchemaViolationError) as exc_info:
            parse_frame_record(json.dumps(record))
        assert exc_info.value.field == "channels.0.objects.0.bbox"

    def test_zero_channels_rejected(self):
        """A frame needs at least one channel."""
        with pytest.raises(SchemaViolationError):
            parse_frame_record('{"index": 0, "channels": []}')

    def test_inverted_bbox_rejected(self):
        """bbox min must not exceed max."""
        record = frame_record(0, [object_record(1, "car", (10, 10), (5, 20))])
        with pytest.raises(SchemaViolationError):
            parse_frame_record(json.dumps(record))

    def test_bbox_dimension_must_match_channel(self):
        """A 3D bbox in a 2D channel is a schema violation."""
        record = frame_record(0, [object_record(1, "car", (0, 0, 0), (1, 1, 1))])
        with pytest.raises(SchemaViolationError):
            parse_frame_record(json.dumps(record))

    def test_negative_threshold_rejected(self):
        """The key-frame threshold is nonnegative."""
        with pytest.raises(IngestError):
            IngestConfig(keyframe_threshold=-0.1)


class TestValidateKeyFrame:
    """Tests for key-frame alignment."""

    def test_single_channel_always_aligned(self):
        """No pair of timestamps exists."""
        frame = parse_frame_record(MINIMAL)
        assert validate_key_frame(frame, IngestConfig(keyframe_threshold=0.0))

    def test_within_threshold(self):
        """Half a millisecond apart is a key-frame at 1 ms."""
        frame = parse_frame_record(json.dumps(two_channel_record(0, 1.0, 1.0005)))
        assert validate_key_frame(frame, IngestConfig(keyframe_threshold=0.001))

    def test_outside_threshold(self):
        """Two milliseconds apart is not."""
        frame = parse_frame_record(json.dumps(two_channel_record(0, 1.0, 1.002)))
        assert not validate_key_frame(frame, IngestConfig(keyframe_threshold=0.001))


class TestLoadStream:
    """Tests for whole-stream loading."""

    def test_reindexes_in_arrival_order(self):
        """Declared indices are replaced by arrival positions."""
        data = to_jsonl([frame_record(5, []), frame_record(9, []), frame_record(2, [])])
        stream = load_stream(io.BytesIO(data))
        assert [frame.index for frame in stream] == [0, 1, 2]

    def test_blank_lines_skipped(self):
        """Empty lines do not produce frames."""
        data = b"\n" + to_jsonl([frame_record(0, [])]) + b"\n  \n" + to_jsonl([frame_record(1, [])])
        assert len(load_stream(io.BytesIO(data))) == 2

    def test_error_reports_line_number(self):
        """Parse errors carry the line they occurred on."""
        good = to_jsonl([frame_record(0, [])])
        data = good + b"not json\n"
        with pytest.raises(MalformedRecordError) as exc_info:
            load_stream(io.BytesIO(data))
        assert exc_info.value.line_number == 2
        assert exc_info.value.offset == len(good)

    def test_invalid_utf8_is_an_ingest_error(self):
        """Bad bytes in a later line name that line."""
        good = to_jsonl([frame_record(0, [])])
        bad = MINIMAL.encode().replace(b'"cam"', b'"\xff"') + b"\n"
        with pytest.raises(IngestError) as exc_info:
            load_stream(io.BytesIO(good + bad))
        assert exc_info.value.line_number == 2
        assert exc_info.value.offset == len(good) + bad.index(b"\xff")

    def test_misaligned_frame_rejected(self):
        """By default a non-key-frame aborts loading."""
        data = to_jsonl([frame_record(0, []), two_channel_record(1, 1.0, 1.5)])
        with pytest.raises(KeyFrameError):
            load_stream(io.BytesIO(data))

    def test_misaligned_frame_dropped(self):
        """With drop_misaligned the frame is skipped and the rest re-indexed."""
        data = to_jsonl([frame_record(0, []), two_channel_record(1, 1.0, 1.5), frame_record(2, [])])
        stream = load_stream(io.BytesIO(data), IngestConfig(drop_misaligned=True))
        assert len(stream) == 2
        assert [frame.index for frame in stream] == [0, 1]

    def test_iter_frames_is_incremental(self):
        """Frames before a bad line are delivered before the error."""
        lines = [to_jsonl([frame_record(0, [])]), b"{oops\n"]
        frames = iter_frames(iter(lines))
        assert next(frames).index == 0
        with pytest.raises(MalformedRecordError):
            next(frames)

    def test_records_go_through_same_checks(self):
        """Pre-validated records are re-indexed and alignment-checked too."""
        records = [FrameRecord.model_validate(frame_record(3, [])), FrameRecord.model_validate(frame_record(8, []))]
        stream = stream_from_records(records)
        assert [frame.index for frame in stream] == [0, 1]

        bad = [FrameRecord.model_validate(two_channel_record(0, 0.0, 1.0))]
        with pytest.raises(KeyFrameError):
            stream_from_records(bad)


class TestWriteStream:
    """Tests for the writer used by the generator."""

    def test_generated_stream_round_trips(self):
        """Writing then loading gives back the same stream."""
        stream = generate_stream(GeneratorConfig(frames=25, seed=3))
        sink = io.StringIO()
        assert write_stream(stream, sink) == 25
        loaded = load_stream(io.BytesIO(sink.getvalue().encode()))
        assert loaded == stream

    def test_one_record_per_line(self):
        """Each frame is a single compact JSON line."""
        stream = generate_stream(GeneratorConfig(frames=3, seed=1))
        sink = io.StringIO()
        write_stream(stream, sink)
        lines = sink.getvalue().splitlines()
        assert len(lines) == 3
        assert all(json.loads(line)["channels"][0]["name"] == "camera" for line in lines)
