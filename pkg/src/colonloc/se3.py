"""6-DoF poses, Euler rotations and homogeneous rigid transforms.

A :class:`Pose6DoF` ``(tx, ty, tz, rx, ry, rz)`` describes how a point
expressed in the camera frame at time ``t`` maps into the camera frame at
``t+1``::

    X_{t+1} = R X_t + T,   R = R_x(rx) R_y(ry) R_z(rz)

The rotation order is fixed; no other Euler convention is exposed.  Near
``ry = +-pi/2`` the angle extraction is gimbal-locked, which is accepted
because inter-frame rotations are small.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, NumericalError

ORTHO_TOL = 1e-9
DRIFT_TOL = 1e-6


@dataclass(frozen=True)
class Pose6DoF:
    tx: float = 0.0
    ty: float = 0.0
    tz: float = 0.0
    rx: float = 0.0
    ry: float = 0.0
    rz: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.as_array())):
            raise DomainError(f"pose fields must be finite: {self}")

    @classmethod
    def from_array(cls, v: Sequence[float]) -> "Pose6DoF":
        v = np.asarray(v, dtype=float).ravel()
        if v.shape != (6,):
            raise DomainError(f"pose vector must have 6 entries, got {v.shape}")
        return cls(*(float(x) for x in v))

    def as_array(self) -> np.ndarray:
        return np.array([self.tx, self.ty, self.tz, self.rx, self.ry, self.rz], dtype=float)

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.tx, self.ty, self.tz])

    @property
    def angles(self) -> np.ndarray:
        return np.array([self.rx, self.ry, self.rz])


def _rx(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _ry(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rz(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _drx(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[0.0, 0.0, 0.0], [0.0, -s, -c], [0.0, c, -s]])


def _dry(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[-s, 0.0, c], [0.0, 0.0, 0.0], [-c, 0.0, -s]])


def _drz(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]])


def euler_to_rotation(rx: float, ry: float, rz: float) -> np.ndarray:
    """Rotation ``R_x(rx) @ R_y(ry) @ R_z(rz)`` (angles in radians)."""
    if not np.all(np.isfinite([rx, ry, rz])):
        raise DomainError("Euler angles must be finite")
    return _rx(rx) @ _ry(ry) @ _rz(rz)


def euler_rotation_derivatives(rx: float, ry: float, rz: float) -> np.ndarray:
    """Partial derivatives of :func:`euler_to_rotation`, shape ``(3, 3, 3)``.

    Entry ``k`` is ``dR / d(angle_k)``.
    """
    Rx, Ry, Rz = _rx(rx), _ry(ry), _rz(rz)
    return np.stack([_drx(rx) @ Ry @ Rz, Rx @ _dry(ry) @ Rz, Rx @ Ry @ _drz(rz)])


def rotation_to_euler(R: np.ndarray) -> np.ndarray:
    """Inverse of :func:`euler_to_rotation` for ``|ry| < pi/2``."""
    R = np.asarray(R, dtype=float)
    ry = np.arcsin(np.clip(R[0, 2], -1.0, 1.0))
    rz = np.arctan2(-R[0, 1], R[0, 0])
    rx = np.arctan2(-R[1, 2], R[2, 2])
    return np.array([rx, ry, rz])


def orthonormality_error(R: np.ndarray) -> float:
    return float(np.max(np.abs(R.T @ R - np.eye(3))))


def orthonormalize(R: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix in the Frobenius sense."""
    U, _, Vt = np.linalg.svd(R)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


class TransformSE3:
    """Immutable 4x4 homogeneous rigid transform.

    Construction validates ``R^T R = I``, ``det R = 1`` and the bottom row.
    """

    __slots__ = ("_m",)

    def __init__(self, matrix: np.ndarray, tol: float = ORTHO_TOL):
        m = np.array(matrix, dtype=float)
        if m.shape != (4, 4):
            raise DomainError(f"expected 4x4 matrix, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise DomainError("transform entries must be finite")
        R = m[:3, :3]
        if orthonormality_error(R) > tol or abs(np.linalg.det(R) - 1.0) > tol:
            raise DomainError("rotation block is not a proper rotation")
        if not np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]):
            raise DomainError("bottom row must be (0, 0, 0, 1)")
        m.setflags(write=False)
        self._m = m

    @classmethod
    def from_rt(cls, R: np.ndarray, T: Iterable[float]) -> "TransformSE3":
        m = np.eye(4)
        m[:3, :3] = R
        m[:3, 3] = np.asarray(T, dtype=float).ravel()
        return cls(m)

    @classmethod
    def identity(cls) -> "TransformSE3":
        return cls(np.eye(4))

    @property
    def matrix(self) -> np.ndarray:
        return self._m

    @property
    def R(self) -> np.ndarray:
        return self._m[:3, :3]

    @property
    def T(self) -> np.ndarray:
        return self._m[:3, 3]

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform ``(..., 3)`` points."""
        return np.asarray(points) @ self.R.T + self.T

    def __matmul__(self, other: "TransformSE3") -> "TransformSE3":
        return compose(self, other)

    def __repr__(self):
        return f"TransformSE3(\n{self._m!r})"


def pose_to_transform(p: Pose6DoF) -> TransformSE3:
    return TransformSE3.from_rt(euler_to_rotation(p.rx, p.ry, p.rz), p.translation)


def transform_to_pose(q: TransformSE3) -> Pose6DoF:
    return Pose6DoF.from_array(np.concatenate([q.T, rotation_to_euler(q.R)]))


def invert(q: TransformSE3) -> TransformSE3:
    """Closed-form inverse ``(R^T, -R^T T)``."""
    Rt = q.R.T
    return TransformSE3.from_rt(Rt, -Rt @ q.T)


def compose(a: TransformSE3, b: TransformSE3) -> TransformSE3:
    """Matrix product ``a @ b``, re-validated as a rigid transform.

    Drift up to ``DRIFT_TOL`` is projected back onto SO(3); larger drift
    raises :class:`NumericalError` so the caller can re-orthonormalize.
    """
    m = a.matrix @ b.matrix
    m[3] = (0.0, 0.0, 0.0, 1.0)
    err = orthonormality_error(m[:3, :3])
    if err > DRIFT_TOL:
        raise NumericalError(f"orthonormality drift {err:.3g} exceeds {DRIFT_TOL}")
    if err > ORTHO_TOL:
        m[:3, :3] = orthonormalize(m[:3, :3])
    return TransformSE3(m)


def rotation_angle(R: np.ndarray) -> float:
    """Geodesic angle of a rotation matrix in radians.

    Uses ``atan2(|axis|, cos)`` rather than ``arccos`` so that small angles
    keep full precision.
    """
    R = np.asarray(R, dtype=float)
    s = 0.5 * np.linalg.norm([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    c = 0.5 * (np.trace(R) - 1.0)
    return float(np.arctan2(s, c))
