"""
Deterministic synthetic perception streams for benchmarks and tests.

Pedestrians and bicycles only overlap on designated overlap frames; on
every other frame pedestrians stay in the left half of the image and
bicycles in the right half. The number of pedestrian/bicycle overlap runs
in a generated stream is therefore known up front.
"""

import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from app.config import (
    GENERATOR_CLASSES,
    GENERATOR_FRAMES,
    GENERATOR_HEIGHT,
    GENERATOR_OBJECTS_PER_FRAME,
    GENERATOR_OVERLAP_PROBABILITY,
    GENERATOR_SEED,
    GENERATOR_WIDTH,
)
from app.stream import (
    AttributeSet,
    BoundingRegionSpec,
    ChannelInfo,
    ChannelSample,
    Frame,
    ObjectAnnotation,
    PerceptionStream,
)

logger = logging.getLogger(__name__)

COLORS = ("red", "white", "black", "blue")
MIN_SIZE = 20.0
MAX_SIZE = 200.0


class GeneratorError(Exception):
    """Custom exception for invalid generator settings."""
    pass


@dataclass(frozen=True)
class GeneratorConfig:
    frames: int = GENERATOR_FRAMES
    objects_per_frame: int = GENERATOR_OBJECTS_PER_FRAME
    classes: Tuple[str, ...] = GENERATOR_CLASSES
    overlap_probability: float = GENERATOR_OVERLAP_PROBABILITY
    overlap_runs: int = 0  # when > 0, plant exactly this many runs instead of random overlaps
    run_length: int = 3
    width: float = GENERATOR_WIDTH
    height: float = GENERATOR_HEIGHT
    seed: int = GENERATOR_SEED
    frame_interval: float = 0.1  # seconds between frames
    channel: str = "camera"
    classification_key: str = "class"

    def __post_init__(self):
        if self.frames < 0:
            raise GeneratorError(f"frame count must be >= 0, got {self.frames}")
        if not self.classes:
            raise GeneratorError("at least one class is required")
        if not 0.0 <= self.overlap_probability <= 1.0:
            raise GeneratorError(f"overlap probability must be in [0, 1], got {self.overlap_probability}")
        if self.overlap_runs < 0 or self.run_length < 1:
            raise GeneratorError("overlap runs must be >= 0 and run length >= 1")
        if self.overlap_runs * (self.run_length + 1) > self.frames + 1:
            raise GeneratorError(
                f"{self.overlap_runs} runs of {self.run_length} frames do not fit in {self.frames} frames"
            )
        if self.plants_overlaps and self.objects_per_frame < 2:
            raise GeneratorError("overlap frames need at least 2 objects per frame")
        if self.width <= 2 * MAX_SIZE + 2 or self.height <= MAX_SIZE:
            raise GeneratorError(f"image {self.width}x{self.height} is too small for generated boxes")

    @property
    def plants_overlaps(self) -> bool:
        return self.overlap_runs > 0 or self.overlap_probability > 0.0


def _overlap_flags(config: GeneratorConfig, rng: np.random.Generator) -> np.ndarray:
    if config.overlap_runs > 0:
        flags = np.zeros(config.frames, dtype=bool)
        spacing = max(config.frames // config.overlap_runs, config.run_length + 1)
        for run in range(config.overlap_runs):
            start = run * spacing
            flags[start:start + config.run_length] = True
        return flags
    return rng.random(config.frames) < config.overlap_probability


def overlap_mask(config: GeneratorConfig) -> np.ndarray:
    """Boolean array marking the frames that carry a pedestrian/bicycle overlap."""
    return _overlap_flags(config, np.random.default_rng(config.seed))


def count_runs(flags: np.ndarray) -> int:
    """Number of maximal runs of consecutive True values."""
    if flags.size == 0:
        return 0
    padded = np.concatenate(([False], flags.astype(bool)))
    return int(np.count_nonzero(padded[1:] & ~padded[:-1]))


def _object(
    ident: str,
    label: str,
    color: str,
    box: Tuple[float, float, float, float],
    confidence: float,
    config: GeneratorConfig,
) -> ObjectAnnotation:
    x0, y0, x1, y1 = (round(float(v), 2) for v in box)
    attributes = AttributeSet.from_mapping({config.classification_key: label, "color": color})
    return ObjectAnnotation(ident, attributes, BoundingRegionSpec.from_corners((x0, y0), (x1, y1)), round(confidence, 3))


def _x_range(label: str, width: float, size: float) -> Tuple[float, float]:
    half = width / 2.0
    if label == "pedestrian":
        return 0.0, half - 1.0 - size
    if label == "bicycle":
        return half + 1.0, width - size
    return 0.0, width - size


def generate_stream(config: GeneratorConfig = GeneratorConfig()) -> PerceptionStream:
    """
    Build a seeded stream with a single channel.

    The same config always yields the same stream, and writing it with
    `ingest.write_stream` round-trips through `ingest.load_stream`.
    """
    rng = np.random.default_rng(config.seed)
    flags = _overlap_flags(config, rng)

    n, k = config.frames, config.objects_per_frame
    labels = rng.integers(0, len(config.classes), size=(n, k))
    colors = rng.integers(0, len(COLORS), size=(n, k))
    sizes = rng.uniform(MIN_SIZE, MAX_SIZE, size=(n, k, 2))
    offsets = rng.random((n, k, 2))
    confidences = rng.uniform(0.5, 1.0, size=(n, k))

    bounds = BoundingRegionSpec.from_corners((0.0, 0.0), (config.width, config.height))
    frames: List[Frame] = []
    for index in range(n):
        objects = []
        for slot in range(k):
            label = config.classes[labels[index, slot]]
            w, h = sizes[index, slot]
            if flags[index] and slot < 2:
                # forced pedestrian/bicycle pair that overlaps by half a box
                label = "pedestrian" if slot == 0 else "bicycle"
                x = offsets[index, 0, 0] * (config.width - 2 * MAX_SIZE)
                y = offsets[index, 0, 1] * (config.height - 2 * MAX_SIZE) if config.height > 2 * MAX_SIZE else 0.0
                w, h = sizes[index, 0]
                if slot == 1:
                    x, y = x + w / 2.0, y + h / 4.0
            else:
                lo, hi = _x_range(label, config.width, w)
                x = lo + offsets[index, slot, 0] * (hi - lo)
                y = offsets[index, slot, 1] * (config.height - h)
            box = (x, y, min(x + w, config.width), min(y + h, config.height))
            objects.append(
                _object(f"{index}-{slot}", label, COLORS[colors[index, slot]], box, float(confidences[index, slot]), config)
            )
        info = ChannelInfo(config.channel, bounds, round(index * config.frame_interval, 6))
        frames.append(Frame(index, (ChannelSample(info, tuple(objects)),)))

    logger.info(f"Generated {n} frames with {count_runs(flags)} overlap runs")
    return PerceptionStream(tuple(frames))
