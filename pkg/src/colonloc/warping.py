"""View synthesis by inverse warping and the self-supervised loss family.

Warping convention: ``warp_frame(src, disp_target, pose, K)`` synthesizes the
*target* view from ``src`` where ``pose`` maps source-frame points into the
target frame.  Each target pixel is lifted with the target disparity, moved
back into the source frame with the inverse motion, projected, and ``src`` is
sampled bilinearly there.  Target pixels whose source location falls outside
the source image get intensity ``-1`` and out-of-frame flag 1.

Loss functions take *validity weights* (1 = pixel counts, 0 = excluded);
these are ``1 - outside`` of the warp.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .camera_model import SENTINEL, PinholeIntrinsics, bilinear_sample, pixel_grid, to_pixels
from .errors import DegenerateError, DomainError, ShapeError
from .se3 import Pose6DoF, euler_rotation_derivatives, euler_to_rotation, invert, pose_to_transform

DISPARITY_MAX = 10.0
CE_EPS = 1e-7
SPECULAR_THRESHOLD = 0.1
FRAME_INTERVAL_S = 1.0 / 15.0


@dataclass(frozen=True)
class LossWeights:
    ce: float = 0.01
    mc: float = 100.0
    smo: float = 0.02

    def __post_init__(self):
        if min(self.ce, self.mc, self.smo) < 0:
            raise DomainError("loss weights must be nonnegative")


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    cp: float
    ce: float
    mc: float
    smo: float

    def as_dict(self) -> dict:
        return {"total": self.total, "cp": self.cp, "ce": self.ce, "mc": self.mc, "smo": self.smo}


def _check_disparity(disp: np.ndarray):
    if np.any(~(disp > 0)):
        raise DomainError("disparity must be strictly positive for back-projection")


def source_coords(disp_target, pose: Pose6DoF, K: PinholeIntrinsics, jacobian: bool = False):
    """Source-image coordinates of every target pixel.

    Returns ``(x, y)`` arrays of shape ``(H, W)``; points that land behind the
    source camera get ``-1`` (never valid).  With ``jacobian=True`` also
    returns ``(dx, dy)`` of shape ``(H, W, 6)`` w.r.t. the pose vector.
    """
    d = np.asarray(disp_target, dtype=float)
    if d.ndim == 3:
        d = d[..., 0]
    _check_disparity(d)
    H, W = d.shape
    gx, gy = pixel_grid(H, W)
    pix = np.stack([gx, gy, np.ones_like(gx)], axis=-1)
    P = (pix @ K.inverse.T) / d[..., None]
    R = euler_to_rotation(pose.rx, pose.ry, pose.rz)
    PmT = P - pose.translation
    X = PmT @ R  # R^T (P - T) row-wise
    Z = X[..., 2]
    front = Z > 1e-12
    Zs = np.where(front, Z, 1.0)
    # written as grid + displacement so the zero pose maps pixels exactly
    da = X[..., 0] / Zs - P[..., 0] / P[..., 2]
    db = X[..., 1] / Zs - P[..., 1] / P[..., 2]
    x = gx + K.fx * da + K.skew * db
    y = gy + K.fy * db
    x = np.where(front, x, -1.0)
    y = np.where(front, y, -1.0)
    if not jacobian:
        return x, y
    dR = euler_rotation_derivatives(pose.rx, pose.ry, pose.rz)
    dX = np.empty((H, W, 3, 6))
    dX[..., :3] = np.broadcast_to(-R.T, (H, W, 3, 3))
    for k in range(3):
        dX[..., 3 + k] = PmT @ dR[k]
    inv_z = 1.0 / Zs
    ddx = np.stack(
        [K.fx * inv_z, K.skew * inv_z, -(K.fx * X[..., 0] + K.skew * X[..., 1]) * inv_z**2], axis=-1
    )
    ddy = np.stack([np.zeros_like(Zs), K.fy * inv_z, -K.fy * X[..., 1] * inv_z**2], axis=-1)
    jx = np.einsum("hwi,hwij->hwj", ddx, dX)
    jy = np.einsum("hwi,hwij->hwj", ddy, dX)
    jx[~front] = 0.0
    jy[~front] = 0.0
    return x, y, jx, jy


def warp_frame(src, disparity_of_target, pose: Pose6DoF, K: PinholeIntrinsics) -> Tuple[np.ndarray, np.ndarray]:
    """Synthesize the target view from ``src``.

    Returns ``(warped, outside)`` where ``warped`` has the shape of ``src``
    with ``-1`` at out-of-frame pixels and ``outside`` is the ``HxW`` 0/1
    out-of-frame flag.
    """
    img = np.asarray(src, dtype=float)
    d = np.asarray(disparity_of_target, dtype=float)
    if img.shape[:2] != d.shape[:2]:
        raise ShapeError(f"frame {img.shape[:2]} and disparity {d.shape[:2]} differ")
    x, y = source_coords(d, pose, K)
    vals, valid = bilinear_sample(img, x, y, fill=SENTINEL)
    return vals, (~valid).astype(float)


def warp_with_jacobian(src, disparity_of_target, pose: Pose6DoF, K: PinholeIntrinsics):
    """Like :func:`warp_frame` plus ``d warped / d pose`` of shape ``(H, W, C, 6)``."""
    img = to_pixels(src)
    x, y, jx, jy = source_coords(disparity_of_target, pose, K, jacobian=True)
    vals, valid, gx, gy = bilinear_sample(img, x, y, fill=SENTINEL, with_grad=True)
    J = gx[..., None] * jx[:, :, None, :] + gy[..., None] * jy[:, :, None, :]
    return vals, (~valid).astype(float), J


def warp_mask(mask, disparity_of_target, pose: Pose6DoF, K: PinholeIntrinsics) -> np.ndarray:
    """Warp a probability mask; out-of-frame entries become 0."""
    vals, outside = warp_frame(np.asarray(mask, dtype=float), disparity_of_target, pose, K)
    return np.where(outside > 0, 0.0, vals)


def rgb_to_saturation(rgb: np.ndarray) -> np.ndarray:
    """HSV saturation ``(max - min) / max`` (0 where max is 0)."""
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    return np.where(mx > 0, (mx - mn) / np.where(mx > 0, mx, 1.0), 0.0)


def threshold_specular_mask(frame, threshold: float = SPECULAR_THRESHOLD) -> np.ndarray:
    """0 where HSV saturation is below ``threshold`` (specular), 1 elsewhere."""
    px = to_pixels(frame)
    if px.shape[2] != 3:
        raise ShapeError(f"specular thresholding needs an RGB frame, got {px.shape[2]} channels")
    return (rgb_to_saturation(np.clip(px, 0.0, 1.0)) >= threshold).astype(float)


def _as_hwc(a, ref_shape=None):
    a = np.asarray(a, dtype=float)
    if a.ndim == 2:
        a = a[:, :, None]
    if ref_shape is not None and a.shape[:2] != tuple(ref_shape[:2]):
        raise ShapeError(f"raster shape {a.shape[:2]} does not match {tuple(ref_shape[:2])}")
    return a


def photometric_loss(frame_t, frame_t1, synth_t, synth_t1) -> float:
    """Mean squared difference of real and synthesized frames, both directions."""
    it, it1 = _as_hwc(frame_t), _as_hwc(frame_t1)
    st, st1 = _as_hwc(synth_t), _as_hwc(synth_t1)
    if not (it.shape == it1.shape == st.shape == st1.shape):
        raise ShapeError("all frames must share H x W x C")
    Z = it.size
    return float(np.sum((it - st) ** 2) / Z + np.sum((it1 - st1) ** 2) / Z)


def corrected_photometric_loss(
    frame_t,
    frame_t1,
    synth_t,
    synth_t1,
    spec_t,
    spec_t1,
    warped_spec_t1,
    warped_spec_t,
    valid_t,
    valid_t1,
) -> float:
    """Validity-gated, specular-weighted photometric loss.

    ``warped_spec_t1`` is the mask of frame ``t+1`` warped into view ``t``
    (paired with ``synth_t``); ``warped_spec_t`` is the mask of ``t`` warped
    into view ``t+1``.  Masks are ``HxW`` and broadcast over channels.
    """
    it = _as_hwc(frame_t)
    shape = it.shape
    it1 = _as_hwc(frame_t1, shape)
    st, st1 = _as_hwc(synth_t, shape), _as_hwc(synth_t1, shape)
    pt, pt1 = _as_hwc(spec_t, shape), _as_hwc(spec_t1, shape)
    wt1, wt = _as_hwc(warped_spec_t1, shape), _as_hwc(warped_spec_t, shape)
    mt, mt1 = _as_hwc(valid_t, shape), _as_hwc(valid_t1, shape)
    if not (it.shape == it1.shape == st.shape == st1.shape):
        raise ShapeError("all frames must share H x W x C")
    Z = it.size
    a = np.sum(mt * (pt * it - wt1 * st) ** 2)
    b = np.sum(mt1 * (pt1 * it1 - wt * st1) ** 2)
    return float(a / Z + b / Z)


def cpe(frame_t, frame_t1, synth_t, synth_t1, thr_t, thr_t1, warped_thr_t1, warped_thr_t, valid_t, valid_t1) -> float:
    """Corrected photometric error with threshold-based specular masks."""
    return corrected_photometric_loss(
        frame_t, frame_t1, synth_t, synth_t1, thr_t, thr_t1, warped_thr_t1, warped_thr_t, valid_t, valid_t1
    )


def _bce(target, prob, eps):
    p = np.clip(np.asarray(prob, dtype=float), eps, 1.0 - eps)
    t = np.asarray(target, dtype=float)
    return float(np.mean(-(t * np.log(p) + (1.0 - t) * np.log(1.0 - p))))


def mask_cross_entropy_loss(est_t, est_t1, thr_t, thr_t1, eps: float = CE_EPS) -> float:
    """Binary cross-entropy of estimated masks against threshold masks, summed over both frames."""
    if np.shape(est_t) != np.shape(thr_t) or np.shape(est_t1) != np.shape(thr_t1):
        raise ShapeError("estimated and threshold masks must match")
    return _bce(thr_t, est_t, eps) + _bce(thr_t1, est_t1, eps)


def consistency_loss(forward: Pose6DoF, backward: Pose6DoF) -> float:
    """Frobenius distance between the forward transform and the inverted backward one."""
    qf = pose_to_transform(forward).matrix
    qb_inv = invert(pose_to_transform(backward)).matrix
    return float(np.linalg.norm(qf - qb_inv))


def smoothness_loss(disparity) -> float:
    """Mean absolute first-order gradient of the mean-normalized disparity.

    Horizontal and vertical terms are averaged separately and summed.
    """
    d = np.asarray(disparity, dtype=float)
    if d.ndim == 3:
        d = d[..., 0]
    if d.shape[0] < 2 or d.shape[1] < 2:
        raise DegenerateError("smoothness needs at least a 2x2 disparity map")
    m = d.mean()
    if m == 0:
        raise DegenerateError("disparity has zero mean")
    n = d / m
    return float(np.mean(np.abs(np.diff(n, axis=1))) + np.mean(np.abs(np.diff(n, axis=0))))


def combine_losses(cp: float, ce: float, mc: float, smo: float, weights: LossWeights = LossWeights()) -> LossBreakdown:
    total = cp + weights.ce * ce + weights.mc * mc + weights.smo * smo
    return LossBreakdown(total=float(total), cp=float(cp), ce=float(ce), mc=float(mc), smo=float(smo))


@dataclass
class FramePair:
    """Everything known about two consecutive frames.

    ``spec_est_*`` are the probabilistic "not specular" masks used in the
    corrected loss; ``spec_thr_*`` are threshold masks (computed from the
    frames when omitted).
    """

    frame_t: np.ndarray
    frame_t1: np.ndarray
    disp_t: np.ndarray
    disp_t1: np.ndarray
    spec_est_t: Optional[np.ndarray] = None
    spec_est_t1: Optional[np.ndarray] = None
    spec_thr_t: Optional[np.ndarray] = None
    spec_thr_t1: Optional[np.ndarray] = None

    def __post_init__(self):
        self.frame_t = to_pixels(self.frame_t)
        self.frame_t1 = to_pixels(self.frame_t1)
        if self.frame_t.shape != self.frame_t1.shape:
            raise ShapeError("frames of a pair must share H x W x C")
        hw = self.frame_t.shape[:2]
        self.disp_t = _plane(self.disp_t, hw)
        self.disp_t1 = _plane(self.disp_t1, hw)
        _check_disparity(self.disp_t)
        _check_disparity(self.disp_t1)
        if self.spec_thr_t is None:
            self.spec_thr_t = _thr_or_ones(self.frame_t)
        if self.spec_thr_t1 is None:
            self.spec_thr_t1 = _thr_or_ones(self.frame_t1)
        if self.spec_est_t is None:
            self.spec_est_t = self.spec_thr_t
        if self.spec_est_t1 is None:
            self.spec_est_t1 = self.spec_thr_t1
        for name in ("spec_est_t", "spec_est_t1", "spec_thr_t", "spec_thr_t1"):
            setattr(self, name, _plane(getattr(self, name), hw))

    @property
    def shape(self):
        return self.frame_t.shape


def _plane(a, hw):
    a = np.asarray(a, dtype=float)
    if a.ndim == 3:
        a = a[..., 0]
    if a.shape != tuple(hw):
        raise ShapeError(f"raster {a.shape} does not match frame {tuple(hw)}")
    return a


def _thr_or_ones(px):
    if px.shape[2] == 3:
        return threshold_specular_mask(px)
    return np.ones(px.shape[:2])


@dataclass
class Synthesis:
    synth_t: np.ndarray
    synth_t1: np.ndarray
    warped_spec_t1: np.ndarray  # mask of t+1 seen from view t
    warped_spec_t: np.ndarray  # mask of t seen from view t+1
    valid_t: np.ndarray
    valid_t1: np.ndarray


def synthesize(pair: FramePair, forward: Pose6DoF, backward: Pose6DoF, K: PinholeIntrinsics, masks: str = "est") -> Synthesis:
    """Warp both frames (and the chosen specular masks) into each other's view."""
    mt, mt1 = (pair.spec_est_t, pair.spec_est_t1) if masks == "est" else (pair.spec_thr_t, pair.spec_thr_t1)
    st1, out_t1 = warp_frame(pair.frame_t, pair.disp_t1, forward, K)
    st, out_t = warp_frame(pair.frame_t1, pair.disp_t, backward, K)
    return Synthesis(
        synth_t=st,
        synth_t1=st1,
        warped_spec_t1=warp_mask(mt1, pair.disp_t, backward, K),
        warped_spec_t=warp_mask(mt, pair.disp_t1, forward, K),
        valid_t=1.0 - out_t,
        valid_t1=1.0 - out_t1,
    )


def pair_corrected_loss(pair: FramePair, forward: Pose6DoF, backward: Pose6DoF, K: PinholeIntrinsics, masks: str = "est") -> float:
    s = synthesize(pair, forward, backward, K, masks)
    mt, mt1 = (pair.spec_est_t, pair.spec_est_t1) if masks == "est" else (pair.spec_thr_t, pair.spec_thr_t1)
    return corrected_photometric_loss(
        pair.frame_t, pair.frame_t1, s.synth_t, s.synth_t1, mt, mt1, s.warped_spec_t1, s.warped_spec_t, s.valid_t, s.valid_t1
    )


def pair_photometric_loss(pair: FramePair, forward: Pose6DoF, backward: Pose6DoF, K: PinholeIntrinsics) -> float:
    """Plain photometric loss; out-of-frame pixels keep their ``-1`` value."""
    s = synthesize(pair, forward, backward, K)
    return photometric_loss(pair.frame_t, pair.frame_t1, s.synth_t, s.synth_t1)


def pair_cpe(pair: FramePair, forward: Pose6DoF, backward: Pose6DoF, K: PinholeIntrinsics) -> float:
    return pair_corrected_loss(pair, forward, backward, K, masks="thr")


def final_loss(
    pair: FramePair,
    forward: Pose6DoF,
    backward: Pose6DoF,
    K: PinholeIntrinsics,
    weights: LossWeights = LossWeights(),
) -> LossBreakdown:
    cp = pair_corrected_loss(pair, forward, backward, K)
    ce = mask_cross_entropy_loss(pair.spec_est_t, pair.spec_est_t1, pair.spec_thr_t, pair.spec_thr_t1)
    mc = consistency_loss(forward, backward)
    smo = smoothness_loss(pair.disp_t) + smoothness_loss(pair.disp_t1)
    return combine_losses(cp, ce, mc, smo, weights)
