"""
Region algebra over finite unions of axis-aligned boxes.
Provides exact set operations, topology flags, and the metric-function registry.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

logger = logging.getLogger(__name__)

Point = Tuple[float, ...]
Box = Tuple[Point, Point]  # (mins, maxs), closed representation


class RegionError(Exception):
    """Custom exception for region algebra errors."""
    pass


class DimensionMismatchError(RegionError):
    """Operands live in different universes or dimensions."""
    pass


class EmptyRegionError(RegionError):
    """A metric function needs a non-empty region."""
    pass


class UnknownMetricError(RegionError):
    """Metric function name missing from the registry or called with wrong arity."""
    pass


@dataclass(frozen=True, slots=True)
class Region:
    """
    Finite union of axis-aligned boxes inside a bounded universe.

    `open` applies to the whole region: an open region denotes the interior
    of its boxes, so boxes with zero extent in some dimension carry no points.
    """

    boxes: Tuple[Box, ...]
    universe: Box
    open: bool = False

    @property
    def dims(self) -> int:
        return len(self.universe[0])

    @classmethod
    def from_box(cls, mins: Sequence[float], maxs: Sequence[float], universe: Box) -> "Region":
        box = (tuple(float(v) for v in mins), tuple(float(v) for v in maxs))
        if len(box[0]) != len(universe[0]) or len(box[1]) != len(universe[0]):
            raise DimensionMismatchError(
                f"box has {len(box[0])} dims, universe has {len(universe[0])}"
            )
        if any(lo > hi for lo, hi in zip(*box)):
            raise RegionError(f"box min exceeds max: {box}")
        clipped = _box_intersection(box, universe)
        if clipped is None:
            return cls((), universe)
        return cls((clipped,), universe)

    @classmethod
    def empty(cls, universe: Box, open: bool = False) -> "Region":
        return cls((), universe, open)

    @classmethod
    def full(cls, universe: Box) -> "Region":
        return cls((universe,), universe)


# ==================== BOX PRIMITIVES ====================


def _box_intersection(a: Box, b: Box) -> Optional[Box]:
    mins = tuple(x if x > y else y for x, y in zip(a[0], b[0]))
    maxs = tuple(x if x < y else y for x, y in zip(a[1], b[1]))
    for lo, hi in zip(mins, maxs):
        if lo > hi:
            return None
    return (mins, maxs)


def _is_degenerate(box: Box) -> bool:
    return any(lo == hi for lo, hi in zip(box[0], box[1]))


def _contains(outer: Box, inner: Box) -> bool:
    return all(o <= i for o, i in zip(outer[0], inner[0])) and all(
        i <= o for o, i in zip(outer[1], inner[1])
    )


def _box_measure(box: Box) -> float:
    return math.prod(hi - lo for lo, hi in zip(box[0], box[1]))


def _subtract(a: Box, b: Box) -> List[Box]:
    """Split `a` minus `b` into at most 2*d boxes by sweeping one axis at a time."""
    inter = _box_intersection(a, b)
    if inter is None:
        return [a]
    pieces: List[Box] = []
    mins = list(a[0])
    maxs = list(a[1])
    for d in range(len(mins)):
        if mins[d] < inter[0][d]:
            upper = list(maxs)
            upper[d] = inter[0][d]
            pieces.append((tuple(mins), tuple(upper)))
        if inter[1][d] < maxs[d]:
            lower = list(mins)
            lower[d] = inter[1][d]
            pieces.append((tuple(lower), tuple(maxs)))
        mins[d] = inter[0][d]
        maxs[d] = inter[1][d]
    return pieces


def _subtract_all(pieces: Iterable[Box], cutters: Iterable[Box]) -> List[Box]:
    remaining = list(pieces)
    for cutter in cutters:
        if not remaining:
            break
        next_pieces: List[Box] = []
        for piece in remaining:
            next_pieces.extend(_subtract(piece, cutter))
        remaining = next_pieces
    return remaining


def _try_merge(a: Box, b: Box) -> Optional[Box]:
    """Merge two boxes that differ along exactly one axis and touch or overlap there."""
    axis = -1
    for d in range(len(a[0])):
        if a[0][d] != b[0][d] or a[1][d] != b[1][d]:
            if axis != -1:
                return None
            axis = d
    if axis == -1:
        return a
    if a[1][axis] < b[0][axis] or b[1][axis] < a[0][axis]:
        return None
    mins = list(a[0])
    maxs = list(a[1])
    mins[axis] = min(a[0][axis], b[0][axis])
    maxs[axis] = max(a[1][axis], b[1][axis])
    return (tuple(mins), tuple(maxs))


def _normalize(boxes: Iterable[Box], open: bool) -> Tuple[Box, ...]:
    items = [box for box in boxes if not (open and _is_degenerate(box))]
    if len(items) <= 1:
        return tuple(items)

    merged = True
    while merged:
        merged = False
        # Drop contained boxes (this also deduplicates)
        kept: List[Box] = []
        for i, box in enumerate(items):
            covered = False
            for j, other in enumerate(items):
                if i == j:
                    continue
                if _contains(other, box) and (other != box or j < i):
                    covered = True
                    break
            if not covered:
                kept.append(box)
        items = kept

        for i in range(len(items)):
            for j in range(i + 1, len(items)):
                joined = _try_merge(items[i], items[j])
                if joined is not None:
                    items = [b for k, b in enumerate(items) if k not in (i, j)] + [joined]
                    merged = True
                    break
            if merged:
                break

    return tuple(sorted(items))


def _check_compatible(a: Region, b: Region) -> None:
    if a.universe != b.universe:
        raise DimensionMismatchError(
            f"regions live in different universes: {a.universe} vs {b.universe}"
        )


# ==================== SET OPERATIONS ====================


def intersect(a: Region, b: Region) -> Region:
    """Exact pointwise intersection; open if either operand is open."""
    _check_compatible(a, b)
    open_ = a.open or b.open
    boxes = []
    for x in a.boxes:
        for y in b.boxes:
            inter = _box_intersection(x, y)
            if inter is not None:
                boxes.append(inter)
    return Region(_normalize(boxes, open_), a.universe, open_)


def union(a: Region, b: Region) -> Region:
    """Exact union; the result is open only when both operands are open."""
    _check_compatible(a, b)
    open_ = a.open and b.open
    return Region(_normalize(a.boxes + b.boxes, open_), a.universe, open_)


def complement(a: Region) -> Region:
    """Universe minus `a`, with the topology flipped."""
    pieces = _subtract_all([a.universe], a.boxes)
    open_ = not a.open
    return Region(_normalize(pieces, open_), a.universe, open_)


def interior(a: Region) -> Region:
    return Region(_normalize(a.boxes, True), a.universe, True)


def closure(a: Region) -> Region:
    return Region(a.boxes, a.universe, False)


def is_non_empty(a: Region) -> bool:
    if not a.open:
        return bool(a.boxes)
    return any(not _is_degenerate(box) for box in a.boxes)


def is_subset(a: Region, b: Region) -> bool:
    """Closure-level inclusion: every point of closure(a) lies in closure(b)."""
    _check_compatible(a, b)
    candidates = a.boxes
    if a.open:
        candidates = tuple(box for box in candidates if not _is_degenerate(box))
    return not _subtract_all(candidates, b.boxes)


def measure(a: Region) -> float:
    """Lebesgue measure over a disjoint decomposition of the boxes."""
    disjoint: List[Box] = []
    for box in a.boxes:
        disjoint.extend(_subtract_all([box], disjoint))
    return float(sum(_box_measure(box) for box in disjoint))


# ==================== METRIC FUNCTIONS ====================


def _hull(a: Region) -> Box:
    if not a.boxes:
        raise EmptyRegionError("centroid of an empty region is undefined")
    mins = tuple(min(box[0][d] for box in a.boxes) for d in range(a.dims))
    maxs = tuple(max(box[1][d] for box in a.boxes) for d in range(a.dims))
    return (mins, maxs)


def centroid(a: Region) -> Point:
    mins, maxs = _hull(a)
    return tuple((lo + hi) / 2.0 for lo, hi in zip(mins, maxs))


def _coordinate(axis: int) -> Callable[[Region], float]:
    def fn(a: Region) -> float:
        if axis >= a.dims:
            raise EmptyRegionError(f"axis {axis} undefined for a {a.dims}D region")
        return centroid(a)[axis]

    return fn


def _dist(a: Region, b: Region) -> float:
    return math.dist(centroid(a), centroid(b))


def _iou(a: Region, b: Region) -> float:
    total = measure(union(a, b))
    if total == 0.0:
        return 0.0
    return measure(intersect(a, b)) / total


# name -> (arity, function)
METRIC_FUNCTIONS: Dict[str, Tuple[int, Callable[..., float]]] = {
    "area": (1, measure),
    "volume": (1, measure),
    "x": (1, _coordinate(0)),
    "y": (1, _coordinate(1)),
    "z": (1, _coordinate(2)),
    "dist": (2, _dist),
    "iou": (2, _iou),
}


def metric_arity(name: str) -> int:
    if name not in METRIC_FUNCTIONS:
        raise UnknownMetricError(f"unknown metric function '{name}'")
    return METRIC_FUNCTIONS[name][0]


def metric_fn(name: str, args: Sequence[Region]) -> float:
    """
    Evaluate a registered metric function.

    Raises:
        UnknownMetricError: name not registered or wrong number of arguments
        EmptyRegionError: centroid-based function applied to an empty region
    """
    arity = metric_arity(name)
    if len(args) != arity:
        raise UnknownMetricError(f"'{name}' expects {arity} argument(s), got {len(args)}")
    return float(METRIC_FUNCTIONS[name][1](*args))
