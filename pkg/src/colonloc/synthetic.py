"""Ray-cast ground-truth renderer for a textured tube.

The tube is the set of points whose horizontal slice offset from a smooth
centreline is exactly ``radius``::

    |(x, y) - c(z)| = radius,   c(z) = (cx(z), cy(z))  cubic spline in z

and is closed by flat caps at ``z_min`` and ``z_max``.  A camera inside the
tube sees Lambertian tissue lit by a point light at the camera centre with a
softened inverse-square falloff, plus wet "specular spots" whose brightness
depends on the viewing angle.  Rendering is deterministic given the scene.

Camera frames follow the usual vision convention: ``+z`` forward, ``+x``
right (image columns), ``+y`` down (image rows).  Camera poses are stored as
camera-to-world transforms; relative motion between frames is expressed as
the point map ``X_{t+1} = R X_t + T`` used throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from .camera_model import PinholeIntrinsics, pixel_grid
from .errors import DomainError, GeometryError
from .se3 import Pose6DoF, TransformSE3, euler_to_rotation, orthonormalize, rotation_to_euler
from .warping import DISPARITY_MAX

TISSUE_TINT = np.array([0.92, 0.45, 0.36])
CAP_ALBEDO = 0.5


@dataclass(frozen=True)
class SpecularSpot:
    z: float
    phi: float
    size_z: float = 0.25
    size_phi: float = 0.25


@dataclass
class TubeScene:
    """Tube geometry, procedural texture and specular spots.

    ``control_z`` / ``control_x`` / ``control_y`` are centreline knots; a
    clamped cubic spline through them gives a C2 centreline.
    """

    control_z: Sequence[float]
    control_x: Sequence[float]
    control_y: Sequence[float]
    radius: float = 1.0
    seed: int = 0
    texture_cell: float = 0.18
    texture_octaves: int = 3
    vessel_strength: float = 0.35
    spots: Tuple[SpecularSpot, ...] = ()
    spot_strength: float = 1.6
    light_gain: float = 1.1
    light_scale: float = 2.5
    shininess: float = 3.0

    def __post_init__(self):
        z = np.asarray(self.control_z, dtype=float)
        if not self.radius > 0:
            raise DomainError("tube radius must be positive")
        if z.size < 2 or np.any(np.diff(z) <= 0):
            raise DomainError("centreline knots must be strictly increasing in z")
        self.z_min, self.z_max = float(z[0]), float(z[-1])
        self._cx = CubicSpline(z, np.asarray(self.control_x, dtype=float), bc_type="clamped")
        self._cy = CubicSpline(z, np.asarray(self.control_y, dtype=float), bc_type="clamped")
        self._texture = _ValueNoise(self.seed, self.texture_cell, self.radius, self.texture_octaves)
        self._vessels = _ValueNoise(self.seed + 7919, self.texture_cell * 2.5, self.radius, 1)
        self.spots = tuple(self.spots)

    # -- geometry -----------------------------------------------------------
    def center(self, z) -> np.ndarray:
        z = np.clip(z, self.z_min, self.z_max)
        return np.stack([self._cx(z), self._cy(z)], axis=-1)

    def center_slope(self, z) -> np.ndarray:
        z = np.clip(z, self.z_min, self.z_max)
        return np.stack([self._cx(z, 1), self._cy(z, 1)], axis=-1)

    def centerline_point(self, z) -> np.ndarray:
        c = self.center(z)
        return np.concatenate([c, np.asarray(z, dtype=float)[..., None]], axis=-1)

    def tangent(self, z) -> np.ndarray:
        s = self.center_slope(z)
        t = np.concatenate([s, np.ones_like(s[..., :1])], axis=-1)
        return t / np.linalg.norm(t, axis=-1, keepdims=True)

    def offset(self, points: np.ndarray) -> np.ndarray:
        """Horizontal-slice offset from the centreline, ``(..., 2)``."""
        return points[..., :2] - self.center(points[..., 2])

    def inside(self, point, margin: float = 0.0) -> bool:
        p = np.asarray(point, dtype=float)
        r = np.linalg.norm(self.offset(p))
        return bool(r < self.radius - margin and self.z_min < p[2] < self.z_max)

    # -- appearance ---------------------------------------------------------
    def albedo(self, z, phi) -> np.ndarray:
        n = self._texture(z, phi)
        v = self._vessels(z, phi)
        ridge = 1.0 - np.abs(2.0 * v - 1.0)
        vessel = np.clip((ridge - 0.75) / 0.25, 0.0, 1.0) ** 2
        return (0.45 + 0.55 * n) * (1.0 - self.vessel_strength * vessel)

    def spot_weight(self, z, phi) -> np.ndarray:
        w = np.zeros(np.shape(z))
        for s in self.spots:
            dphi = np.angle(np.exp(1j * (phi - s.phi)))
            w = np.maximum(w, np.exp(-((z - s.z) / s.size_z) ** 2 - (dphi / s.size_phi) ** 2))
        return np.where(w > 0.05, w, 0.0)


class _ValueNoise:
    """Seeded periodic-in-angle value noise on the tube surface."""

    def __init__(self, seed: int, cell: float, radius: float, octaves: int):
        rng = np.random.default_rng(seed)
        self.cell = cell
        self.n_phi = max(8, int(round(2 * np.pi * radius / cell)))
        self.octaves = octaves
        self.tables = [rng.random((4096, self.n_phi * (2**o))) for o in range(octaves)]

    @staticmethod
    def _fade(t):
        return t * t * t * (t * (t * 6 - 15) + 10)

    def __call__(self, z, phi) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        phi = np.asarray(phi, dtype=float)
        total = np.zeros(z.shape)
        norm = 0.0
        for o, table in enumerate(self.tables):
            scale = 2**o
            amp = 0.5**o
            nz, nphi = table.shape
            gz = z / self.cell * scale + 2048.0
            gp = (phi / (2 * np.pi)) % 1.0 * nphi
            iz = np.clip(np.floor(gz).astype(int), 0, nz - 2)
            ip = np.floor(gp).astype(int) % nphi
            fz = self._fade(gz - np.floor(gz))
            fp = self._fade(gp - np.floor(gp))
            ip1 = (ip + 1) % nphi
            a = table[iz, ip] + fp * (table[iz, ip1] - table[iz, ip])
            b = table[iz + 1, ip] + fp * (table[iz + 1, ip1] - table[iz + 1, ip])
            total += amp * (a + fz * (b - a))
            norm += amp
        if norm == 0:  # zero octaves: untextured
            return np.full(z.shape, 0.5)
        return total / norm


def look_rotation(forward: np.ndarray, up_hint=(0.0, -1.0, 0.0)) -> np.ndarray:
    """Camera-to-world rotation whose optical axis is ``forward``.

    Image ``-y`` (up) is aligned as closely as possible with ``up_hint``.
    """
    f = np.asarray(forward, dtype=float)
    f = f / np.linalg.norm(f)
    up = np.asarray(up_hint, dtype=float)
    x = np.cross(-up, f)
    if np.linalg.norm(x) < 1e-9:
        x = np.cross([1.0, 0.0, 0.0], f)
    x = x / np.linalg.norm(x)
    y = np.cross(f, x)
    return orthonormalize(np.stack([x, y, f], axis=1))


@dataclass
class RenderOutput:
    frame: np.ndarray  # HxWx3 in [0, 1]
    disparity: np.ndarray  # HxW in (0, 10]
    specular: np.ndarray  # HxW, 0 on specular spots, 1 elsewhere


def _ray_hits(scene: TubeScene, origin: np.ndarray, dirs: np.ndarray, n_grid: int = 160, n_bisect: int = 32):
    """Depth parameter of the first wall or cap hit for each ray.

    Rays are ``origin + tau * dirs`` with the camera-frame z component of
    ``dirs`` equal to 1, so ``tau`` is the z-depth.
    """
    n = dirs.shape[0]
    dz = dirs[:, 2]
    with np.errstate(divide="ignore"):
        t_cap = np.where(dz > 1e-12, (scene.z_max - origin[2]) / dz, np.inf)
        t_cap = np.minimum(t_cap, np.where(dz < -1e-12, (scene.z_min - origin[2]) / dz, np.inf))
    t_far = np.minimum(t_cap, 1e3 * scene.radius)
    t_grid = np.geomspace(1e-3 * scene.radius, 1e3 * scene.radius, n_grid)
    R2 = scene.radius**2

    def g(tau, idx):
        p = origin + tau[:, None] * dirs[idx]
        q = scene.offset(p)
        return np.sum(q * q, axis=-1) - R2

    hit_t = np.array(t_far, dtype=float)
    is_wall = np.zeros(n, dtype=bool)
    lo = np.zeros(n)
    hi = np.full(n, np.nan)
    found = np.zeros(n, dtype=bool)
    prev = np.zeros(n)
    idx_all = np.arange(n)
    for t in t_grid:
        active = ~found & (t <= t_far * (1 + 1e-9) + t_grid[0])
        if not np.any(active):
            break
        idx = idx_all[active]
        tt = np.minimum(np.full(idx.size, t), t_far[idx])
        crossed = g(tt, idx) > 0
        sel = idx[crossed]
        lo[sel] = prev[sel]
        hi[sel] = tt[crossed]
        found[sel] = True
        prev[idx] = tt
        done_far = idx[~crossed & (tt >= t_far[idx])]
        found[done_far] = True  # reached the cap without crossing
    wall = np.isfinite(hi)
    idx = idx_all[wall]
    a, b = lo[idx], hi[idx]
    for _ in range(n_bisect):
        m = 0.5 * (a + b)
        pos = g(m, idx) > 0
        b = np.where(pos, m, b)
        a = np.where(pos, a, m)
    hit_t[idx] = 0.5 * (a + b)
    is_wall[idx] = True
    return hit_t, is_wall


def render(scene: TubeScene, camera_to_world: TransformSE3, K: PinholeIntrinsics, size: Tuple[int, int]) -> RenderOutput:
    """Ray-cast one view of ``scene``.

    Raises :class:`GeometryError` when the camera centre is not inside the
    tube.
    """
    H, W = size
    C = camera_to_world.T
    if not scene.inside(C, margin=1e-6):
        raise GeometryError(f"camera centre {C} is outside the tube")
    gx, gy = pixel_grid(H, W)
    pix = np.stack([gx, gy, np.ones_like(gx)], axis=-1).reshape(-1, 3)
    d_cam = pix @ K.inverse.T
    d_w = d_cam @ camera_to_world.R.T
    tau, wall = _ray_hits(scene, C, d_w)
    P = C + tau[:, None] * d_w
    ray_len = tau * np.linalg.norm(d_cam, axis=1)
    view = -d_w / np.linalg.norm(d_w, axis=1, keepdims=True)

    q = scene.offset(P)
    slope = scene.center_slope(P[:, 2])
    grad = np.concatenate([q, -np.sum(q * slope, axis=1, keepdims=True)], axis=1)
    normal = -grad / np.linalg.norm(grad, axis=1, keepdims=True)
    cap_normal = np.where(d_w[:, 2:3] > 0, [[0.0, 0.0, -1.0]], [[0.0, 0.0, 1.0]])
    normal = np.where(wall[:, None], normal, cap_normal)
    cos_t = np.clip(np.sum(normal * view, axis=1), 0.0, 1.0)

    phi = np.arctan2(q[:, 1], q[:, 0])
    alb = np.where(wall, scene.albedo(P[:, 2], phi), CAP_ALBEDO)
    falloff = scene.light_gain / (1.0 + (ray_len / scene.light_scale) ** 2)
    shade = cos_t * falloff
    rgb = alb[:, None] * TISSUE_TINT[None, :] * shade[:, None]
    spot = np.where(wall, scene.spot_weight(P[:, 2], phi), 0.0)
    if scene.spots:
        spec = spot * scene.spot_strength * cos_t**scene.shininess * falloff
        rgb = rgb + spec[:, None]
    frame = np.clip(rgb, 0.0, 1.0).reshape(H, W, 3)
    disparity = np.clip(1.0 / tau, 0.0, DISPARITY_MAX).reshape(H, W)
    specular = (spot <= 0).astype(float).reshape(H, W)
    return RenderOutput(frame=frame, disparity=disparity, specular=specular)


# ---------------------------------------------------------------------------
# Scenes and trajectories
# ---------------------------------------------------------------------------


def make_tube(
    length: float = 30.0,
    radius: float = 1.0,
    curvature: float = 0.0,
    seed: int = 0,
    n_spots: int = 0,
    spot_strength: float = 1.6,
    **kwargs,
) -> TubeScene:
    """A tube along ``+z`` from 0 to ``length``.

    ``curvature`` is the amplitude (in radii) of a gentle seeded wiggle of
    the centreline; ``n_spots`` specular spots are scattered on the wall.
    """
    rng = np.random.default_rng(seed)
    z = np.linspace(0.0, length, max(4, int(length / 5.0) + 2))
    if curvature > 0:
        amp = curvature * radius
        x = amp * rng.uniform(-1, 1, z.size)
        y = amp * rng.uniform(-1, 1, z.size)
        x[0] = y[0] = 0.0
    else:
        x = np.zeros_like(z)
        y = np.zeros_like(z)
    spots = tuple(
        SpecularSpot(
            z=float(rng.uniform(0.0, length)),
            phi=float(rng.uniform(-np.pi, np.pi)),
            size_z=float(rng.uniform(0.12, 0.3)) * radius,
            size_phi=float(rng.uniform(0.12, 0.3)),
        )
        for _ in range(n_spots)
    )
    return TubeScene(
        control_z=z, control_x=x, control_y=y, radius=radius, seed=seed, spots=spots, spot_strength=spot_strength, **kwargs
    )


@dataclass(frozen=True)
class TrajectorySpec:
    """Withdrawal motion: steady backward speed plus back-and-forth inspection.

    Speeds and amplitudes are in scene units; angles in radians.
    """

    frame_count: int = 30
    frame_interval: float = 1.0 / 15.0
    speed: float = 0.15
    zigzag_amplitude: float = 0.0
    zigzag_frequency: float = 0.5
    lateral_amplitude: float = 0.0
    angular_amplitude: float = 0.0
    start_margin: float = 8.0

    def __post_init__(self):
        if self.frame_count < 2:
            raise DomainError("frame_count must be >= 2")
        if self.speed < 0:
            raise DomainError("speed must be >= 0")
        if not self.frame_interval > 0:
            raise DomainError("frame_interval must be positive")


@dataclass
class SyntheticSequence:
    frames: List[np.ndarray]
    disparities: List[np.ndarray]
    speculars: List[np.ndarray]
    camera_poses: List[TransformSE3]  # camera-to-world
    relative_poses: List[Pose6DoF]
    times: np.ndarray


def relative_pose(cam_t: TransformSE3, cam_t1: TransformSE3) -> Pose6DoF:
    """Point map from camera ``t`` coordinates to camera ``t+1`` coordinates."""
    Rt, Ct = cam_t.R, cam_t.T
    R1, C1 = cam_t1.R, cam_t1.T
    R = R1.T @ Rt
    T = R1.T @ (Ct - C1)
    return Pose6DoF.from_array(np.concatenate([T, rotation_to_euler(R)]))


def camera_path(scene: TubeScene, spec: TrajectorySpec) -> List[TransformSE3]:
    """Camera-to-world poses for every frame of ``spec``."""
    t = np.arange(spec.frame_count) * spec.frame_interval
    z0 = scene.z_max - spec.start_margin * scene.radius
    w = 2 * np.pi * spec.zigzag_frequency
    z = z0 - spec.speed * t + spec.zigzag_amplitude * np.sin(w * t)
    lat = spec.lateral_amplitude * scene.radius
    ox = lat * np.sin(0.7 * w * t)
    oy = lat * (np.cos(0.45 * w * t) - 1.0)
    poses = []
    for k in range(spec.frame_count):
        c = scene.center(z[k])
        pos = np.array([c[0] + ox[k], c[1] + oy[k], z[k]])
        R = look_rotation(scene.tangent(z[k]))
        if spec.angular_amplitude:
            a = spec.angular_amplitude
            wob = euler_to_rotation(a * np.sin(0.9 * w * t[k]), a * np.sin(0.55 * w * t[k] + 1.0), 0.5 * a * np.sin(0.3 * w * t[k]))
            R = R @ wob
        poses.append(TransformSE3.from_rt(R, pos))
    return poses


def generate_sequence(scene: TubeScene, spec: TrajectorySpec, K: PinholeIntrinsics, size: Tuple[int, int]) -> SyntheticSequence:
    poses = camera_path(scene, spec)
    renders = [render(scene, p, K, size) for p in poses]
    rel = [relative_pose(poses[k], poses[k + 1]) for k in range(len(poses) - 1)]
    return SyntheticSequence(
        frames=[r.frame for r in renders],
        disparities=[r.disparity for r in renders],
        speculars=[r.specular for r in renders],
        camera_poses=poses,
        relative_poses=rel,
        times=np.arange(spec.frame_count) * spec.frame_interval,
    )


def random_camera(scene: TubeScene, rng: np.random.Generator, z_range: Tuple[float, float], max_offset: float = 0.3, max_tilt: float = 0.15) -> TransformSE3:
    """Random camera roughly looking down the tube."""
    z = rng.uniform(*z_range)
    c = scene.center(z)
    r = max_offset * scene.radius * np.sqrt(rng.uniform())
    a = rng.uniform(-np.pi, np.pi)
    pos = np.array([c[0] + r * np.cos(a), c[1] + r * np.sin(a), z])
    R = look_rotation(scene.tangent(z)) @ euler_to_rotation(*rng.uniform(-max_tilt, max_tilt, 3))
    return TransformSE3.from_rt(R, pos)


def perturb_camera(cam: TransformSE3, rng: np.random.Generator, max_translation: float, max_rotation: float, min_translation: float = 0.0) -> TransformSE3:
    """Move a camera by a random small rigid motion (scene units / radians)."""
    d = rng.normal(size=3)
    d /= np.linalg.norm(d)
    mag = rng.uniform(min_translation, max_translation)
    ang = rng.uniform(-max_rotation, max_rotation, 3) / np.sqrt(3)
    R = cam.R @ euler_to_rotation(*ang)
    return TransformSE3.from_rt(R, cam.T + mag * d)
