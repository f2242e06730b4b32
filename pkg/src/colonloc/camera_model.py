"""Pinhole and polynomial fisheye camera models.

Pixel coordinates are ``(x, y)`` with ``x`` the column and ``y`` the row,
zero-based, pixel centres on integers.  Homogeneous pixels are ``(x, y, 1)``.

The fisheye model relates a distorted pixel ``(x, y)`` at radius
``l = |(x - cx, y - cy)|`` from the distortion centre to the camera ray
``beta * (x - cx, y - cy, d(l))`` with ``d(l) = sum_i a_i l^i``.  A corrected
(pinhole-equivalent) pixel is obtained by projecting that ray with ``K`` and
shifting to the output centre ``(out_cx, out_cy)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError, GeometryError, ShapeError

SENTINEL = -1.0


@dataclass(frozen=True)
class PinholeIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    skew: float = 0.0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise DomainError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not np.all(np.isfinite([self.fx, self.fy, self.cx, self.cy, self.skew])):
            raise DomainError("intrinsics must be finite")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, self.skew, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @property
    def inverse(self) -> np.ndarray:
        fx, fy, e, cx, cy = self.fx, self.fy, self.skew, self.cx, self.cy
        return np.array(
            [
                [1.0 / fx, -e / (fx * fy), (e * cy - cx * fy) / (fx * fy)],
                [0.0, 1.0 / fy, -cy / fy],
                [0.0, 0.0, 1.0],
            ]
        )

    def downscaled(self, factor: int = 2) -> "PinholeIntrinsics":
        """Intrinsics for an image block-averaged by ``factor``."""
        f = float(factor)
        return PinholeIntrinsics(
            fx=self.fx / f,
            fy=self.fy / f,
            cx=(self.cx + 0.5) / f - 0.5,
            cy=(self.cy + 0.5) / f - 0.5,
            skew=self.skew / f,
        )

    @classmethod
    def from_fov(cls, width: int, height: int, hfov_deg: float) -> "PinholeIntrinsics":
        f = (width / 2.0) / np.tan(np.radians(hfov_deg) / 2.0)
        return cls(fx=f, fy=f, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0)


@dataclass(frozen=True)
class FisheyePolynomial:
    """Distortion polynomial ``d(l) = sum a_i l^i`` with its centres.

    ``max_radius`` is the largest distorted radius the model must support
    (normally the image diagonal); ``d`` is checked to be root-free on
    ``[0, max_radius]``.
    """

    coeffs: Tuple[float, ...]
    cx: float
    cy: float
    max_radius: float
    out_cx: Optional[float] = None
    out_cy: Optional[float] = None

    def __post_init__(self):
        coeffs = tuple(float(a) for a in self.coeffs)
        object.__setattr__(self, "coeffs", coeffs)
        if len(coeffs) == 0:
            raise DomainError("fisheye polynomial needs at least a_0")
        if self.out_cx is None:
            object.__setattr__(self, "out_cx", float(self.cx))
        if self.out_cy is None:
            object.__setattr__(self, "out_cy", float(self.cy))
        if not self.max_radius > 0:
            raise DomainError("max_radius must be positive")
        if coeffs[0] == 0.0:
            raise DomainError("d(0) = a_0 must be nonzero")
        roots = np.roots(coeffs[::-1]) if len(coeffs) > 1 else np.array([])
        real = roots[np.abs(roots.imag) < 1e-9].real
        if np.any((real >= 0) & (real <= self.max_radius)):
            raise DomainError("d(l) has a root inside [0, max_radius]")

    def d(self, l):
        return np.polynomial.polynomial.polyval(l, self.coeffs)

    def d_prime(self, l):
        return np.polynomial.polynomial.polyval(l, np.polynomial.polynomial.polyder(self.coeffs))

    @classmethod
    def identity(cls, cx: float, cy: float, max_radius: float) -> "FisheyePolynomial":
        return cls(coeffs=(1.0,), cx=cx, cy=cy, max_radius=max_radius)


@dataclass
class Frame:
    """Image raster in ``[0, 1]`` with optional ``-1`` sentinel pixels."""

    pixels: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=float)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or min(px.shape) < 1:
            raise ShapeError(f"frame must be HxWxC, got {px.shape}")
        ok = ((px >= 0.0) & (px <= 1.0)) | (px == SENTINEL)
        if not np.all(ok):
            raise DomainError("frame values must lie in [0, 1] or equal the -1 sentinel")
        self.pixels = px

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def valid(self) -> np.ndarray:
        return np.all(self.pixels != SENTINEL, axis=2)


def backproject(p, disparity, K: PinholeIntrinsics, image_size: Optional[Tuple[int, int]] = None):
    """Lift homogeneous pixel(s) to 3D points ``K^-1 p / disparity``.

    ``p`` is ``(3,)`` or ``(N, 3)``; the returned point has depth
    ``1 / disparity``.  ``image_size`` is ``(H, W)`` and enables a bounds
    check.
    """
    p = np.asarray(p, dtype=float)
    disp = np.asarray(disparity, dtype=float)
    if np.any(~(disp > 0)):
        raise DomainError("disparity must be strictly positive")
    if image_size is not None:
        H, W = image_size
        x, y = p[..., 0], p[..., 1]
        if np.any((x < 0) | (x > W - 1) | (y < 0) | (y > H - 1)):
            raise DomainError("pixel outside image bounds")
    rays = p @ K.inverse.T
    return rays / disp[..., None] if disp.ndim else rays / disp


def project(points, K: PinholeIntrinsics):
    """Project camera-frame point(s) to homogeneous pixels ``(x, y, 1)``."""
    P = np.asarray(points, dtype=float)
    Z = P[..., 2]
    if np.any(Z == 0):
        raise GeometryError("cannot project a point with zero depth")
    q = P @ K.matrix.T
    return q / Z[..., None]


def undistort_coords(p_dist, fisheye: FisheyePolynomial, K: PinholeIntrinsics) -> np.ndarray:
    """Map distorted pixel(s) ``(..., 2)`` to corrected pinhole pixels."""
    p = np.asarray(p_dist, dtype=float)
    u = p[..., 0] - fisheye.cx
    v = p[..., 1] - fisheye.cy
    dl = fisheye.d(np.hypot(u, v))
    if np.any(dl == 0):
        raise DomainError("d(l) vanishes at the requested radius")
    x = K.fx / dl * u + K.skew / dl * v + fisheye.out_cx
    y = K.fy / dl * v + fisheye.out_cy
    return np.stack([x, y], axis=-1)


def _radius_lut(fisheye: FisheyePolynomial, samples: int = 4097):
    """Tabulate ``rho(l) = l / d(l)`` up to its first non-increasing point."""
    l = np.linspace(0.0, fisheye.max_radius, samples)
    rho = l / fisheye.d(l)
    inc = np.diff(rho) > 0
    stop = samples if np.all(inc) else int(np.argmin(inc)) + 1
    return l[:stop], rho[:stop]


def distort_coords(p_corr, fisheye: FisheyePolynomial, K: PinholeIntrinsics) -> np.ndarray:
    """Forward fisheye model: corrected pixel(s) to distorted pixel(s).

    Inverts :func:`undistort_coords` by solving ``l = rho * d(l)`` for the
    smallest admissible radius.  Pixels the model cannot reach come back as
    NaN.
    """
    p = np.asarray(p_corr, dtype=float)
    b = p[..., 1] - fisheye.out_cy
    a = p[..., 0] - fisheye.out_cx
    beta = b / K.fy
    alpha = (a - K.skew * beta) / K.fx
    rho = np.hypot(alpha, beta)
    l_tab, rho_tab = _radius_lut(fisheye)
    inside = rho <= rho_tab[-1]
    l = np.interp(rho, rho_tab, l_tab)
    for _ in range(3):
        h = l - rho * fisheye.d(l)
        hp = 1.0 - rho * fisheye.d_prime(l)
        l = np.where(hp != 0, l - h / np.where(hp != 0, hp, 1.0), l)
    dl = fisheye.d(l)
    x = fisheye.cx + dl * alpha
    y = fisheye.cy + dl * beta
    out = np.stack([x, y], axis=-1)
    out[~inside] = np.nan
    return out


def bilinear_sample(image: np.ndarray, x, y, fill: float = SENTINEL, with_grad: bool = False):
    """Sample ``image`` (HxW or HxWxC) at sub-pixel ``(x, y)``.

    Returns ``(values, valid)``; ``valid`` is False where the sample point
    lies outside ``[0, W-1] x [0, H-1]`` and those values are ``fill``.
    With ``with_grad`` the within-cell derivatives ``(d/dx, d/dy)`` are
    returned as well.
    """
    img = np.asarray(image, dtype=float)
    H, W = img.shape[:2]
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    valid = (x >= 0) & (x <= W - 1) & (y >= 0) & (y <= H - 1)
    xs = np.where(valid, x, 0.0)
    ys = np.where(valid, y, 0.0)
    x0 = np.minimum(np.floor(xs).astype(int), max(W - 2, 0))
    y0 = np.minimum(np.floor(ys).astype(int), max(H - 2, 0))
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    fx = xs - x0
    fy = ys - y0
    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
        vmask = valid[..., None]
    else:
        vmask = valid
    i00, i01 = img[y0, x0], img[y0, x1]
    i10, i11 = img[y1, x0], img[y1, x1]
    # convex-combination form is exact at integer sample points
    top = (1 - fx) * i00 + fx * i01
    bot = (1 - fx) * i10 + fx * i11
    vals = np.where(vmask, (1 - fy) * top + fy * bot, fill)
    if not with_grad:
        return vals, valid
    gx = (1 - fy) * (i01 - i00) + fy * (i11 - i10)
    gy = bot - top
    return vals, valid, np.where(vmask, gx, 0.0), np.where(vmask, gy, 0.0)


def pixel_grid(height: int, width: int) -> Tuple[np.ndarray, np.ndarray]:
    """``(x, y)`` coordinate arrays of shape ``(H, W)``."""
    y, x = np.mgrid[0:height, 0:width].astype(float)
    return x, y


def undistort_image(
    frame: Frame,
    fisheye: FisheyePolynomial,
    K: PinholeIntrinsics,
    out_size: Optional[Tuple[int, int]] = None,
) -> Frame:
    """Resample a distorted frame into its pinhole-equivalent image.

    Every output pixel is mapped back through the forward model and the
    source is sampled bilinearly.  Output pixels whose source falls outside
    the frame, or touches a sentinel pixel, are set to ``-1``.
    """
    H, W = out_size if out_size is not None else (frame.height, frame.width)
    if H <= 0 or W <= 0:
        raise DomainError("out_size must be positive")
    x, y = pixel_grid(H, W)
    src = distort_coords(np.stack([x, y], axis=-1), fisheye, K)
    sx, sy = src[..., 0], src[..., 1]
    finite = np.isfinite(sx) & np.isfinite(sy)
    sx = np.where(finite, sx, -1.0)
    sy = np.where(finite, sy, -1.0)
    px = frame.pixels
    vals, valid = bilinear_sample(px, sx, sy)
    # any sentinel neighbour contaminates the interpolated value
    bad = (px == SENTINEL).any(axis=2).astype(float)
    touched, _ = bilinear_sample(bad, sx, sy, fill=1.0)
    ok = valid & finite & (touched == 0)
    out = np.where(ok[..., None], np.clip(vals, 0.0, 1.0), SENTINEL)
    return Frame(out)


def corrected_intrinsics(K: PinholeIntrinsics, fisheye: FisheyePolynomial) -> PinholeIntrinsics:
    """Pinhole intrinsics of the undistorted image (principal point = output centre)."""
    return PinholeIntrinsics(fx=K.fx, fy=K.fy, cx=fisheye.out_cx, cy=fisheye.out_cy, skew=K.skew)


def to_pixels(frame) -> np.ndarray:
    """Accept a :class:`Frame` or an array and return an ``HxWxC`` float array."""
    px = frame.pixels if isinstance(frame, Frame) else np.asarray(frame, dtype=float)
    if px.ndim == 2:
        px = px[:, :, None]
    return px


def line_residual(points: Sequence[Sequence[float]]) -> float:
    """Max orthogonal distance of 2D points from their total-least-squares line."""
    pts = np.asarray(points, dtype=float)
    c = pts - pts.mean(axis=0)
    _, _, vt = np.linalg.svd(c, full_matrices=False)
    normal = vt[-1]
    return float(np.max(np.abs(c @ normal)))
