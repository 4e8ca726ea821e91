"""
Immutable domain types for perception streams.
Frames, channels, annotated objects and their bounding regions.
"""

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Collection, Dict, FrozenSet, Iterator, List, Mapping, Optional, Sequence, Tuple

from app.regions import Box, Region


class StreamError(Exception):
    """Custom exception for malformed stream-model values."""
    pass


@dataclass(frozen=True)
class AttributeSet:
    """Attribute key -> value pairs of one object. Lookups are case-sensitive."""

    entries: Tuple[Tuple[str, str], ...] = ()

    def __post_init__(self):
        for key, _ in self.entries:
            if not key:
                raise StreamError("attribute keys must be non-empty strings")

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, str]) -> "AttributeSet":
        return cls(tuple(sorted((str(k), str(v)) for k, v in mapping.items())))

    def get(self, key: str) -> Optional[str]:
        return self.as_dict.get(key)

    @cached_property
    def as_dict(self) -> Dict[str, str]:
        return dict(self.entries)

    @cached_property
    def values(self) -> FrozenSet[str]:
        return frozenset(value for _, value in self.entries)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class BoundingRegionSpec:
    """Axis-aligned box with an optional yaw; 2D in pixels, 3D in meters."""

    kind: str  # "box2d" or "box3d"
    min: Tuple[float, ...]
    max: Tuple[float, ...]
    rotation: Optional[float] = None

    def __post_init__(self):
        expected = {"box2d": 2, "box3d": 3}.get(self.kind)
        if expected is None:
            raise StreamError(f"unknown bounding region kind '{self.kind}'")
        if len(self.min) != expected or len(self.max) != expected:
            raise StreamError(f"{self.kind} needs {expected} coordinates per corner")
        if any(lo > hi for lo, hi in zip(self.min, self.max)):
            raise StreamError(f"bounding region min exceeds max: {self.min} > {self.max}")
        if self.rotation is not None and self.kind != "box3d":
            raise StreamError("rotation is only supported on box3d regions")

    @classmethod
    def from_corners(cls, mins: Sequence[float], maxs: Sequence[float], rotation: Optional[float] = None) -> "BoundingRegionSpec":
        kind = "box3d" if len(mins) == 3 else "box2d"
        return cls(kind, tuple(float(v) for v in mins), tuple(float(v) for v in maxs), rotation)

    @property
    def dims(self) -> int:
        return len(self.min)

    def as_box(self) -> Box:
        return (self.min, self.max)

    def hull(self) -> Box:
        """Axis-aligned hull, rotating the footprint about the box center."""
        if not self.rotation:
            return self.as_box()
        cx = (self.min[0] + self.max[0]) / 2.0
        cy = (self.min[1] + self.max[1]) / 2.0
        cos_r = math.cos(self.rotation)
        sin_r = math.sin(self.rotation)
        xs, ys = [], []
        for x in (self.min[0], self.max[0]):
            for y in (self.min[1], self.max[1]):
                dx, dy = x - cx, y - cy
                xs.append(cx + dx * cos_r - dy * sin_r)
                ys.append(cy + dx * sin_r + dy * cos_r)
        mins = (min(xs), min(ys)) + self.min[2:]
        maxs = (max(xs), max(ys)) + self.max[2:]
        return (mins, maxs)


@dataclass(frozen=True)
class ObjectAnnotation:
    id: str
    attributes: AttributeSet
    region: BoundingRegionSpec
    confidence: Optional[float] = None

    def __post_init__(self):
        if len(self.attributes) == 0:
            raise StreamError(f"object '{self.id}' carries no attributes")
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise StreamError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class ChannelInfo:
    name: str
    environment_bounds: BoundingRegionSpec
    timestamp: float

    def __post_init__(self):
        bounds = self.environment_bounds
        if any(hi <= lo for lo, hi in zip(bounds.min, bounds.max)):
            raise StreamError(f"channel '{self.name}' bounds need positive extent")

    @property
    def universe(self) -> Box:
        return self.environment_bounds.as_box()


@dataclass(frozen=True)
class ChannelSample:
    """One channel of a frame: its info plus the objects annotated on it."""

    info: ChannelInfo
    objects: Tuple[ObjectAnnotation, ...] = ()


@dataclass(frozen=True)
class Frame:
    index: int
    channels: Tuple[ChannelSample, ...]

    def __post_init__(self):
        if self.index < 0:
            raise StreamError(f"frame index must be nonnegative, got {self.index}")
        names = [sample.info.name for sample in self.channels]
        if len(names) != len(set(names)):
            raise StreamError(f"duplicate channel names in frame {self.index}: {names}")

    def channel(self, name: Optional[str] = None) -> Optional[ChannelSample]:
        """Return the named channel, or the first one when no name is given."""
        if name is None:
            return self.channels[0] if self.channels else None
        for sample in self.channels:
            if sample.info.name == name:
                return sample
        return None


@dataclass(frozen=True)
class PerceptionStream:
    frames: Tuple[Frame, ...] = ()

    def __post_init__(self):
        for position, frame in enumerate(self.frames):
            if frame.index != position:
                raise StreamError(
                    f"frame indices must be contiguous from 0; position {position} has index {frame.index}"
                )

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self) -> Iterator[Frame]:
        return iter(self.frames)

    def __getitem__(self, index: int) -> Frame:
        return self.frames[index]

    def subsequence(self, start: int, end: int) -> Tuple[Frame, ...]:
        """Frames with indices in [start, end)."""
        return self.frames[start:end]


@dataclass(frozen=True, order=True)
class MatchRange:
    """Half-open interval [start, end) of frame indices."""

    start: int
    end: int

    def __post_init__(self):
        if not self.start < self.end:
            raise StreamError(f"empty match range [{self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start

    def __str__(self) -> str:
        return f"{self.start}:{self.end}"


def objects_with_attributes(objects: Sequence[ObjectAnnotation], required: Collection[str]) -> List[ObjectAnnotation]:
    """
    Objects whose attribute values include every required value.

    Values are matched under any key, so `{bus, red}` selects a red bus
    without naming the keys holding those values.
    """
    if not required:
        return list(objects)
    return [obj for obj in objects if obj.attributes.values.issuperset(required)]


def region_of(obj: ObjectAnnotation, channel: ChannelInfo) -> Region:
    """Closed region of an object's axis-aligned hull, clipped to the channel universe."""
    mins, maxs = obj.region.hull()
    return Region.from_box(mins, maxs, channel.universe)
