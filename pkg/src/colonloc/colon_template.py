"""Colon-segment template, frame classification and the two baselines.

Segments are ordered in withdrawal order, cecum first.  A template holds the
relative length of each segment along the location index; its prefix sums
are the segment boundaries.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .errors import DegenerateError, DomainError

logger = logging.getLogger(__name__)

BIOPSY_WINDOW_S = 1.0
BOUNDARY_TOL = 1e-12

#: Motion-based location index template of the second validation set.
SET2_TEMPLATE = (0.061, 0.146, 0.224, 0.223, 0.258, 0.088)


class SegmentLabel(enum.IntEnum):
    CECUM = 1
    ASCENDING = 2
    TRANSVERSE = 3
    DESCENDING = 4
    SIGMOID = 5
    RECTUM = 6


@dataclass(frozen=True)
class SegmentAnnotation:
    """Entry times (s) of the six segments in withdrawal order, then the stop time."""

    times: Tuple[float, ...]

    def __post_init__(self):
        t = tuple(float(x) for x in self.times)
        object.__setattr__(self, "times", t)
        if len(t) != 7:
            raise DomainError(f"annotation needs exactly 7 timestamps, got {len(t)}")
        if not np.all(np.isfinite(t)) or np.any(np.diff(t) <= 0):
            raise DomainError("annotation timestamps must be finite and strictly increasing")


@dataclass(frozen=True)
class ColonTemplate:
    fractions: Tuple[float, ...]

    def __post_init__(self):
        f = tuple(float(x) for x in self.fractions)
        object.__setattr__(self, "fractions", f)
        if len(f) != 6:
            raise DomainError(f"template needs 6 entries, got {len(f)}")
        if min(f) <= 0:
            raise DomainError("template entries must be positive")
        if abs(sum(f) - 1.0) > 1e-9:
            raise DomainError(f"template entries must sum to 1, got {sum(f)!r}")

    @property
    def boundaries(self) -> np.ndarray:
        """``c_0 = 0 < c_1 < ... < c_6 = 1``."""
        c = np.concatenate([[0.0], np.cumsum(self.fractions)])
        c[-1] = 1.0
        return c

    @classmethod
    def uniform(cls) -> "ColonTemplate":
        return cls((1.0 / 6.0,) * 6)


def filter_frames(non_informative: Sequence[bool], biopsy: Sequence[bool], fps: float) -> np.ndarray:
    """Indices of frames kept for localization.

    Non-informative frames are dropped, as is every frame within one second
    (inclusive) of a frame showing biopsy forceps.
    """
    if not fps > 0:
        raise DomainError("fps must be positive")
    ni = np.asarray(non_informative, dtype=bool)
    bx = np.asarray(biopsy, dtype=bool)
    if ni.shape != bx.shape:
        raise DomainError("label arrays differ in length")
    n = ni.size
    drop = ni.copy()
    half = int(np.floor(BIOPSY_WINDOW_S * fps + 1e-9))
    for k in np.flatnonzero(bx):
        drop[max(0, k - half) : min(n, k + half + 1)] = True
    keep = np.flatnonzero(~drop)
    if keep.size == 0:
        raise DegenerateError("every frame was removed by filtering")
    return keep


def _nearest(times: np.ndarray, t: float) -> int:
    i = int(np.searchsorted(times, t))
    if i == 0:
        return 0
    if i >= len(times):
        return len(times) - 1
    return i - 1 if (t - times[i - 1]) <= (times[i] - t) else i


def relative_lengths(annotation: SegmentAnnotation, index: Sequence[float], frame_times: Sequence[float]) -> np.ndarray:
    """Six segment lengths measured along the location index.

    Each annotation time is mapped to the nearest retained frame (earlier
    frame on ties).  Negative differences are clamped to zero with a warning
    and the vector renormalized.
    """
    f = np.asarray(index, dtype=float)
    ft = np.asarray(frame_times, dtype=float)
    if f.shape != ft.shape or f.size < 2:
        raise DomainError("index and frame times must be equal-length with >= 2 entries")
    vals = np.array([f[_nearest(ft, t)] for t in annotation.times])
    q = np.diff(vals)
    if np.any(q < 0):
        logger.warning("non-monotone location index at annotation times; clamping %d negative lengths", int(np.sum(q < 0)))
        q = np.maximum(q, 0.0)
    total = q.sum()
    if not total > 0:
        raise DegenerateError("annotated segments have zero total length")
    return q / total


def build_template(per_video: Sequence[Sequence[float]]) -> ColonTemplate:
    """Average per-video relative lengths and rescale to sum to one."""
    if len(per_video) == 0:
        raise DomainError("need at least one video")
    a = np.asarray(per_video, dtype=float)
    if a.ndim != 2 or a.shape[1] != 6:
        raise DomainError("each video needs six relative lengths")
    mean = a.mean(axis=0)
    w = 1.0 / mean.sum()
    q = mean * w
    q[-1] = 1.0 - q[:-1].sum()
    return ColonTemplate(tuple(q))


def classify(index: Sequence[float], template: ColonTemplate) -> np.ndarray:
    """Segment label per frame using half-open intervals ``[c_{i-1}, c_i)``.

    An index of exactly 1 is assigned to the rectum.  Indices within
    ``BOUNDARY_TOL`` below a boundary count as on it, so boundaries rebuilt
    from prefix sums classify their own frames consistently.
    """
    x = np.asarray(index, dtype=float)
    c = template.boundaries
    lab = np.searchsorted(c[1:-1], x + BOUNDARY_TOL, side="right") + 1
    return np.clip(lab, 1, 6).astype(int)


def time_index_baseline(annotation: SegmentAnnotation, frame_times: Sequence[float]) -> Tuple[ColonTemplate, np.ndarray]:
    """Relative-time template and per-frame time index of one video."""
    t = np.asarray(annotation.times)
    span = t[-1] - t[0]
    if not span > 0:
        raise DegenerateError("annotation start and stop coincide")
    q = np.diff(t) / span
    q[-1] = 1.0 - q[:-1].sum()
    idx = np.clip((np.asarray(frame_times, dtype=float) - t[0]) / span, 0.0, 1.0)
    return ColonTemplate(tuple(q)), idx


def time_index(frame_times: Sequence[float], start: float, stop: float) -> np.ndarray:
    span = stop - start
    if not span > 0:
        raise DegenerateError("start and stop coincide")
    return np.clip((np.asarray(frame_times, dtype=float) - start) / span, 0.0, 1.0)


def scopeguide_index(lengths_cm: Sequence[float]) -> np.ndarray:
    """Index from inserted tube length; spikes are deliberately left in."""
    L = np.asarray(lengths_cm, dtype=float)
    if L.size < 2:
        raise DomainError("need at least two length samples")
    span = L[0] - L[-1]
    if span == 0:
        raise DegenerateError("first and last inserted lengths are equal")
    idx = np.clip((L[0] - L) / span, 0.0, 1.0)
    idx[0], idx[-1] = 0.0, 1.0
    return idx


def annotation_from_labels(labels: Sequence[int], frame_times: Sequence[float]) -> SegmentAnnotation:
    """Entry times read off a per-frame label sequence (self-consistency checks).

    Each segment's entry time is the time of its first frame; the stop time
    is the last frame's time.
    """
    lab = np.asarray(labels, dtype=int)
    t = np.asarray(frame_times, dtype=float)
    times = [t[0]]
    for s in range(2, 7):
        hits = np.flatnonzero(lab >= s)
        if hits.size == 0 or hits[0] == 0:
            raise DegenerateError(f"segment {s} is empty or starts at the first frame")
        k = hits[0]
        times.append(t[k])
    times.append(t[-1])
    return SegmentAnnotation(tuple(times))
