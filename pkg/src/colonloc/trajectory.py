"""Camera trajectory, smoothed major traveling path and location index.

The location index of a frame is the arc length along the smoothed path
from the start point ``a`` to the closest path point ``c`` of the frame's
camera position, divided by the arc length from ``a`` to the end point
``b``.  ``a`` and ``b`` are the path points closest to the first and last
trajectory positions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import splev, splprep

from .errors import DegenerateError, DomainError
from .se3 import Pose6DoF, TransformSE3, compose, invert, pose_to_transform

DEFAULT_GAMMA = 100.0
COARSE_SAMPLES = 2048
TABLE_INTERVALS = 4096
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)
_INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class Trajectory:
    frame_indices: np.ndarray
    positions: np.ndarray  # (N, 3)

    def __post_init__(self):
        idx = np.asarray(self.frame_indices, dtype=int)
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        if idx.shape[0] != pos.shape[0]:
            raise DomainError("frame_indices and positions differ in length")
        object.__setattr__(self, "frame_indices", idx)
        object.__setattr__(self, "positions", pos)

    def __len__(self):
        return self.positions.shape[0]


def integrate(poses: Sequence[Pose6DoF], frame_indices: Optional[Sequence[int]] = None, invert_poses: bool = False) -> Trajectory:
    """Cumulative product of relative transforms applied to the origin.

    ``position_k = (Q_1 @ ... @ Q_k) (0, 0, 0)`` with ``position_0`` at the
    origin, so ``N`` poses give ``N + 1`` positions.

    Args:
        poses: Relative poses in frame order.
        frame_indices: Frame index of every position (``N + 1`` values);
            defaults to ``0..N``.
        invert_poses: Compose ``Q_k^-1`` instead.  Poses that map camera-t
            points into camera-(t+1) coordinates need this to yield camera
            centres expressed in the first camera's frame.
    """
    if len(poses) < 1:
        raise DomainError("integrate needs at least one pose")
    if frame_indices is None:
        frame_indices = np.arange(len(poses) + 1)
    if len(frame_indices) != len(poses) + 1:
        raise DomainError("need one frame index per position (len(poses) + 1)")
    acc = TransformSE3.identity()
    pos = [np.zeros(3)]
    for p in poses:
        q = pose_to_transform(p)
        acc = compose(acc, invert(q) if invert_poses else q)
        pos.append(acc.T.copy())
    return Trajectory(np.asarray(frame_indices), np.array(pos))


def _dedupe(points: np.ndarray) -> np.ndarray:
    keep = np.ones(len(points), dtype=bool)
    keep[1:] = np.any(np.diff(points, axis=0) != 0, axis=1)
    return points[keep]


@dataclass(frozen=True)
class MajorPath:
    """Smoothing cubic B-spline with an arc-length lookup table."""

    tck: tuple
    gamma: float
    u_table: np.ndarray
    s_table: np.ndarray
    residual_ss: float

    @property
    def length(self) -> float:
        return float(self.s_table[-1])

    def point(self, u) -> np.ndarray:
        return np.stack(splev(np.asarray(u, dtype=float), self.tck), axis=-1)

    def _speed(self, u) -> np.ndarray:
        d = np.stack(splev(np.asarray(u, dtype=float), self.tck, der=1), axis=-1)
        return np.linalg.norm(d, axis=-1)

    def arclength(self, u) -> np.ndarray:
        """Arc length from ``u = 0`` to ``u`` (vectorised)."""
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        k = np.clip(np.searchsorted(self.u_table, u, side="right") - 1, 0, len(self.u_table) - 2)
        u0 = self.u_table[k]
        half = 0.5 * (u - u0)
        nodes = u0[..., None] + half[..., None] * (_GL_NODES + 1.0)
        return self.s_table[k] + half * np.sum(_GL_WEIGHTS * self._speed(nodes), axis=-1)

    def parameter_at(self, s) -> np.ndarray:
        """Approximate inverse of :meth:`arclength` by table interpolation."""
        return np.interp(s, self.s_table, self.u_table)


def fit_major_path(traj: Trajectory, gamma: float = DEFAULT_GAMMA) -> MajorPath:
    """Fit the smoothed major traveling path.

    ``gamma`` bounds the sum of squared residuals of the smoothing spline;
    ``gamma = 0`` interpolates every (de-duplicated) point.
    """
    if gamma < 0:
        raise DomainError("gamma must be >= 0")
    pts = _dedupe(traj.positions)
    if len(pts) < 4:
        raise DegenerateError(f"major path needs at least 4 distinct points, got {len(pts)}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tck, u = splprep(pts.T, s=float(gamma), k=3)
    fitted = np.stack(splev(u, tck), axis=-1)
    rss = float(np.sum((fitted - pts) ** 2))
    u_table = np.linspace(0.0, 1.0, TABLE_INTERVALS + 1)
    half = 0.5 * (u_table[1] - u_table[0])
    nodes = u_table[:-1, None] + half * (_GL_NODES + 1.0)
    speed = np.linalg.norm(np.stack(splev(nodes, tck, der=1), axis=-1), axis=-1)
    seg = half * np.sum(_GL_WEIGHTS * speed, axis=-1)
    s_table = np.concatenate([[0.0], np.cumsum(seg)])
    if not s_table[-1] > 0:
        raise DegenerateError("major path has zero length")
    return MajorPath(tck=tck, gamma=float(gamma), u_table=u_table, s_table=s_table, residual_ss=rss)


def _golden(f, lo: float, hi: float, tol: float = 1e-12, max_iter: int = 200) -> float:
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def closest_parameter(path: MajorPath, point: np.ndarray, samples: int = COARSE_SAMPLES) -> float:
    """Spline parameter of the path point closest to ``point``.

    Coarse scan over ``samples`` points equally spaced in arc length (ties go
    to the smallest parameter), then golden-section refinement between the
    neighbouring samples.
    """
    s = np.linspace(0.0, path.length, samples)
    u = path.parameter_at(s)
    d2 = np.sum((path.point(u) - point) ** 2, axis=1)
    i = int(np.argmin(d2))
    lo = u[max(i - 1, 0)]
    hi = u[min(i + 1, samples - 1)]

    def f(t):
        return float(np.sum((path.point(t) - point) ** 2))

    t = _golden(f, lo, hi)
    # keep the scan sample if refinement did not improve on it
    return t if f(t) <= d2[i] else float(u[i])


def location_index(traj: Trajectory, path: MajorPath, samples: int = COARSE_SAMPLES) -> np.ndarray:
    """Per-frame relative location index in ``[0, 1]``.

    The first and last frames are pinned to exactly 0 and 1.
    """
    pos = traj.positions
    u = np.array([closest_parameter(path, p, samples) for p in pos])
    s = path.arclength(u)
    sa, sb = s[0], s[-1]
    span = sb - sa
    if abs(span) <= 1e-12 * max(path.length, 1e-300):
        raise DegenerateError("start and end of the trajectory map to the same path point")
    idx = np.clip((s - sa) / span, 0.0, 1.0)
    idx[0] = 0.0
    idx[-1] = 1.0
    return idx
