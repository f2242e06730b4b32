"""Per-pair 6-DoF pose estimation.

Poses come either from a pose CSV (stand-in for a trained motion network) or
from direct minimization of the self-supervised objective::

    corrected_photometric_loss(fwd, bwd) + lambda_mc * consistency_loss(fwd, bwd)

over the forward and backward 6-vectors, starting from the zero pose, coarse
to fine over an image pyramid.  Disparity is an input.

The consistency term is a plain Frobenius norm, which is not differentiable
where it vanishes.  Optimization therefore runs in two phases.  First the
backward pose is tied to the exact inverse of the forward pose, which zeroes
the consistency term, and only the six forward parameters are refined
through the pyramid.  A joint 12-parameter polish follows at full
resolution, where each Gauss-Newton step majorizes the norm by the quadratic
``lambda * (|r|^2 / |r0| + |r0|) / 2`` around the current residual ``r0``.
Every step goes through a backtracking line search on the true objective
that only accepts decreases, so the loss history is non-increasing.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .camera_model import PinholeIntrinsics, bilinear_sample
from .errors import DivergenceError, DomainError, ManifestError
from .se3 import Pose6DoF, euler_rotation_derivatives, euler_to_rotation, invert, pose_to_transform, transform_to_pose
from .warping import FramePair, LossWeights, final_loss, source_coords

logger = logging.getLogger(__name__)

MC_EPS = 1e-8


@dataclass(frozen=True)
class OptimizerSettings:
    max_iters: int = 40
    step_scheme: str = "gauss_newton"  # or "gradient"
    gradient_mode: str = "analytic"  # or "finite_difference"
    fd_step_translation: float = 1e-4
    fd_step_rotation: float = 1e-4
    tol: float = 1e-10
    pyramid_levels: int = 3
    damping: float = 1e-6
    line_search_steps: int = 20
    weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if self.max_iters < 1:
            raise DomainError("max_iters must be >= 1")
        if self.pyramid_levels < 1:
            raise DomainError("pyramid_levels must be >= 1")
        if min(self.tol, self.fd_step_translation, self.fd_step_rotation) <= 0:
            raise DomainError("tolerances and finite-difference steps must be positive")
        if self.step_scheme not in ("gauss_newton", "gradient"):
            raise DomainError(f"unknown step scheme {self.step_scheme!r}")
        if self.gradient_mode not in ("analytic", "finite_difference"):
            raise DomainError(f"unknown gradient mode {self.gradient_mode!r}")


@dataclass
class PairDiagnostics:
    initial_loss: float
    final_loss: float
    iters: int
    loss_history: List[float] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"initial_loss": self.initial_loss, "final_loss": self.final_loss, "iters": self.iters}


@dataclass
class PairEstimate:
    forward: Pose6DoF
    backward: Pose6DoF
    diagnostics: PairDiagnostics


# ---------------------------------------------------------------------------
# Objective
# ---------------------------------------------------------------------------


def _consistency_residual(theta: np.ndarray, jacobian: bool = False):
    """Top three rows of ``Q_fwd - Q_bwd^{-1}`` flattened, with d/dtheta."""
    f, b = theta[:6], theta[6:]
    Rf = euler_to_rotation(*f[3:])
    Rb = euler_to_rotation(*b[3:])
    Tb = b[:3]
    qf = np.hstack([Rf, f[:3, None]])
    qbi = np.hstack([Rb.T, (-Rb.T @ Tb)[:, None]])
    r = (qf - qbi).ravel()
    if not jacobian:
        return r
    J = np.zeros((12, 12))
    dRf = euler_rotation_derivatives(*f[3:])
    dRb = euler_rotation_derivatives(*b[3:])
    for k in range(3):
        e = np.zeros((3, 4))
        e[k, 3] = 1.0
        J[:, k] = e.ravel()
        e = np.zeros((3, 4))
        e[:, :3] = dRf[k]
        J[:, 3 + k] = e.ravel()
        e = np.zeros((3, 4))
        e[:, 3] = Rb.T[:, k]
        J[:, 6 + k] = e.ravel()
        e = np.zeros((3, 4))
        e[:, :3] = -dRb[k].T
        e[:, 3] = dRb[k].T @ Tb
        J[:, 9 + k] = e.ravel()
    return r, J


class PoseObjective:
    """Pose-dependent part of the training loss for one frame pair at one scale."""

    def __init__(self, pair: FramePair, K: PinholeIntrinsics, weights: LossWeights = LossWeights()):
        self.pair = pair
        self.K = K
        self.lam = weights.mc
        self.Z = pair.frame_t.size
        self._scale = 1.0 / np.sqrt(self.Z)
        # fixed parts: target-side specular-weighted frames
        self._a_t = pair.spec_est_t[..., None] * pair.frame_t
        self._a_t1 = pair.spec_est_t1[..., None] * pair.frame_t1

    def _side(self, src, src_mask, target_weighted, disp_target, pose_vec, jacobian):
        pose = Pose6DoF.from_array(pose_vec)
        if jacobian:
            x, y, jx, jy = source_coords(disp_target, pose, self.K, jacobian=True)
            c, valid, cgx, cgy = bilinear_sample(src, x, y, fill=0.0, with_grad=True)
            b, _, bgx, bgy = bilinear_sample(src_mask, x, y, fill=0.0, with_grad=True)
        else:
            x, y = source_coords(disp_target, pose, self.K)
            c, valid = bilinear_sample(src, x, y, fill=0.0)
            b, _ = bilinear_sample(src_mask, x, y, fill=0.0)
        v = valid[..., None] * self._scale
        r = (v * (target_weighted - b[..., None] * c)).ravel()
        if not jacobian:
            return r
        dc = cgx[..., None] * jx[:, :, None, :] + cgy[..., None] * jy[:, :, None, :]
        db = bgx[..., None] * jx + bgy[..., None] * jy
        J = -v[..., None] * (db[:, :, None, :] * c[..., None] + b[..., None, None] * dc)
        return r, J.reshape(-1, 6)

    def side_residuals(self, theta: np.ndarray, jacobian: bool = False):
        """Residual vectors whose squared norms sum to the corrected loss.

        Returns ``(r_t, r_t1)`` (and their 6-column Jacobians w.r.t. the
        backward / forward pose respectively).
        """
        p = self.pair
        rt = self._side(p.frame_t1, p.spec_est_t1, self._a_t, p.disp_t, theta[6:], jacobian)
        rt1 = self._side(p.frame_t, p.spec_est_t, self._a_t1, p.disp_t1, theta[:6], jacobian)
        return rt, rt1

    def value(self, theta: np.ndarray) -> float:
        rt, rt1 = self.side_residuals(theta)
        mc = np.linalg.norm(_consistency_residual(theta))
        return float(rt @ rt + rt1 @ rt1 + self.lam * mc)

    def fd_jacobians(self, theta: np.ndarray, h_t: float, h_r: float):
        steps = np.array([h_t] * 3 + [h_r] * 3)
        out = []
        for side, off in ((0, 6), (1, 0)):
            cols = []
            for k in range(6):
                e = np.zeros(12)
                e[off + k] = steps[k]
                rp = self.side_residuals(theta + e)[side]
                rm = self.side_residuals(theta - e)[side]
                cols.append((rp - rm) / (2 * steps[k]))
            out.append(np.stack(cols, axis=1))
        return out

    def linearize(self, theta: np.ndarray, mode: str = "analytic", h_t: float = 1e-4, h_r: float = 1e-4):
        """Residuals and Jacobians: ``(r_t, J_t, r_t1, J_t1, r_mc, J_mc)``."""
        if mode == "analytic":
            (rt, Jt), (rt1, Jt1) = self.side_residuals(theta, jacobian=True)
        else:
            rt, rt1 = self.side_residuals(theta)
            Jt, Jt1 = self.fd_jacobians(theta, h_t, h_r)
        rmc, Jmc = _consistency_residual(theta, jacobian=True)
        return rt, Jt, rt1, Jt1, rmc, Jmc

    def gradient(self, theta: np.ndarray, mode: str = "analytic", h_t: float = 1e-4, h_r: float = 1e-4) -> np.ndarray:
        rt, Jt, rt1, Jt1, rmc, Jmc = self.linearize(theta, mode, h_t, h_r)
        g = np.zeros(12)
        g[6:] += 2 * Jt.T @ rt
        g[:6] += 2 * Jt1.T @ rt1
        n = np.linalg.norm(rmc)
        if n > 0:
            g += self.lam * Jmc.T @ rmc / n
        return g


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------


def _downsample(a: np.ndarray) -> np.ndarray:
    H, W = a.shape[:2]
    a = a[: H - H % 2, : W - W % 2]
    return 0.25 * (a[0::2, 0::2] + a[1::2, 0::2] + a[0::2, 1::2] + a[1::2, 1::2])


def build_pyramid(pair: FramePair, K: PinholeIntrinsics, levels: int) -> List[Tuple[FramePair, PinholeIntrinsics]]:
    """Coarsest level first; levels smaller than 8 px are skipped."""
    pyr = [(pair, K)]
    for _ in range(levels - 1):
        p, k = pyr[-1]
        if min(p.frame_t.shape[:2]) < 16:
            break
        pyr.append(
            (
                FramePair(
                    frame_t=_downsample(p.frame_t),
                    frame_t1=_downsample(p.frame_t1),
                    disp_t=_downsample(p.disp_t),
                    disp_t1=_downsample(p.disp_t1),
                    spec_est_t=_downsample(p.spec_est_t),
                    spec_est_t1=_downsample(p.spec_est_t1),
                    spec_thr_t=_downsample(p.spec_thr_t),
                    spec_thr_t1=_downsample(p.spec_thr_t1),
                ),
                k.downscaled(2),
            )
        )
    return pyr[::-1]


def _inverse_vec(f: np.ndarray) -> np.ndarray:
    return inverse_pose(Pose6DoF.from_array(f)).as_array()


def _tie(f: np.ndarray) -> np.ndarray:
    """Full parameter vector with the backward pose pinned to the inverse of ``f``."""
    return np.concatenate([f, _inverse_vec(f)])


def _inverse_jacobian(f: np.ndarray, h: float = 1e-7) -> np.ndarray:
    cols = []
    for k in range(6):
        e = np.zeros(6)
        e[k] = h
        cols.append((_inverse_vec(f + e) - _inverse_vec(f - e)) / (2 * h))
    return np.stack(cols, axis=1)


def _step_direction(obj: "PoseObjective", params: np.ndarray, settings: OptimizerSettings, mu: float, tied: bool):
    mode = settings.gradient_mode
    h_t, h_r = settings.fd_step_translation, settings.fd_step_rotation
    if tied:
        rt, Jt, rt1, Jt1, _, _ = obj.linearize(_tie(params), mode, h_t, h_r)
        Jb = Jt @ _inverse_jacobian(params)
        g = Jt1.T @ rt1 + Jb.T @ rt
        H = Jt1.T @ Jt1 + Jb.T @ Jb
    else:
        rt, Jt, rt1, Jt1, rmc, Jmc = obj.linearize(params, mode, h_t, h_r)
        w = obj.lam / (2.0 * max(np.linalg.norm(rmc), MC_EPS))
        g = np.zeros(12)
        g[6:] += Jt.T @ rt
        g[:6] += Jt1.T @ rt1
        g += w * Jmc.T @ rmc
        H = w * Jmc.T @ Jmc
        H[6:, 6:] += Jt.T @ Jt
        H[:6, :6] += Jt1.T @ Jt1
    if settings.step_scheme == "gradient":
        return -g
    D = np.diag(np.maximum(np.diag(H), 1e-12))
    try:
        return np.linalg.solve(H + mu * D, -g)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(H + mu * D, -g, rcond=None)[0]


def _optimize_level(obj: "PoseObjective", theta: np.ndarray, settings: OptimizerSettings, history: List[float], tied: bool):
    """Descend from ``theta``; ``tied`` optimizes the forward pose only.

    Returns the new 12-vector and the iteration count.  Only strictly
    decreasing objective values are accepted and appended to ``history``.
    """
    params = theta[:6].copy() if tied else theta.copy()
    expand = _tie if tied else (lambda p: p)
    f = obj.value(expand(params))
    if not np.isfinite(f):
        raise DivergenceError("non-finite loss at level start", last_params=theta)
    iters = 0
    for _ in range(settings.max_iters):
        iters += 1
        d = _step_direction(obj, params, settings, settings.damping, tied)
        if not np.all(np.isfinite(d)):
            raise DivergenceError("non-finite step direction", last_params=expand(params))
        alpha = 1.0
        if settings.step_scheme == "gradient":
            alpha = 1e-2 / max(np.linalg.norm(d), 1e-12)
        accepted = False
        for _ in range(settings.line_search_steps):
            cand = params + alpha * d
            fc = obj.value(expand(cand))
            if np.isfinite(fc) and fc < f:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        rel = (f - fc) / max(abs(f), 1e-300)
        params, f = cand, fc
        history.append(f)
        if rel < settings.tol or np.linalg.norm(alpha * d) < 1e-12:
            break
    return expand(params), iters


def estimate_pair(
    frame_t,
    frame_t1,
    disp_t,
    disp_t1,
    K: PinholeIntrinsics,
    settings: OptimizerSettings = OptimizerSettings(),
    spec_est_t=None,
    spec_est_t1=None,
    spec_thr_t=None,
    spec_thr_t1=None,
) -> PairEstimate:
    """Estimate forward (t -> t+1) and backward (t+1 -> t) motion of one pair."""
    pair = FramePair(frame_t, frame_t1, disp_t, disp_t1, spec_est_t, spec_est_t1, spec_thr_t, spec_thr_t1)
    return estimate_frame_pair(pair, K, settings)


def estimate_frame_pair(pair: FramePair, K: PinholeIntrinsics, settings: OptimizerSettings = OptimizerSettings()) -> PairEstimate:
    theta = np.zeros(12)
    full = PoseObjective(pair, K, settings.weights)
    initial = full.value(theta)
    history = [initial]
    iters = 0
    levels = build_pyramid(pair, K, settings.pyramid_levels)
    for level_pair, level_K in levels[:-1]:
        theta, n = _optimize_level(PoseObjective(level_pair, level_K, settings.weights), theta, settings, [], tied=True)
        iters += n
    if len(levels) > 1:
        f_coarse = full.value(theta)
        if not np.isfinite(f_coarse):
            raise DivergenceError("non-finite loss after coarse levels", last_params=theta)
        if f_coarse > initial:
            # coarse solution is worse at full resolution; restart from zero
            theta = np.zeros(12)
        else:
            history.append(f_coarse)
    theta, n = _optimize_level(full, theta, settings, history, tied=True)
    iters += n
    # joint polish: only moves if the consistency penalty can pay for itself
    theta, n = _optimize_level(full, theta, settings, history, tied=False)
    iters += n
    final = history[-1]
    fwd = Pose6DoF.from_array(theta[:6])
    bwd = Pose6DoF.from_array(theta[6:])
    return PairEstimate(fwd, bwd, PairDiagnostics(initial_loss=initial, final_loss=final, iters=iters, loss_history=history))


# ---------------------------------------------------------------------------
# Pose sources
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FileStreamSource:
    """Forward poses read from a pose CSV; backward poses are their inverses."""

    path: Union[str, Path]


@dataclass(frozen=True)
class DirectOptimizerSource:
    settings: OptimizerSettings = field(default_factory=OptimizerSettings)


PoseSource = Union[FileStreamSource, DirectOptimizerSource]


def inverse_pose(p: Pose6DoF) -> Pose6DoF:
    return transform_to_pose(invert(pose_to_transform(p)))


def estimate_sequence(
    frames: Sequence[np.ndarray],
    pose_source: PoseSource,
    disparities: Optional[Sequence[np.ndarray]] = None,
    K: Optional[PinholeIntrinsics] = None,
    spec_est: Optional[Sequence[np.ndarray]] = None,
    frame_indices: Optional[Sequence[int]] = None,
    diagnostics: Optional[list] = None,
) -> List[Tuple[Pose6DoF, Pose6DoF]]:
    """One ``(forward, backward)`` pose per consecutive retained-frame pair."""
    n = len(frames)
    if n < 2:
        raise DomainError("need at least two frames")
    idx = list(frame_indices) if frame_indices is not None else list(range(n))
    if len(idx) != n:
        raise DomainError("frame_indices must match frames")
    if isinstance(pose_source, FileStreamSource):
        from .io import read_pose_csv

        rows, poses = read_pose_csv(pose_source.path)
        expected = idx[:-1]
        if len(rows) != len(expected) or list(rows) != list(expected):
            raise ManifestError(
                f"pose stream {pose_source.path} has {len(rows)} rows for {len(expected)} frame pairs "
                "or does not match the retained frame indices"
            )
        return [(p, inverse_pose(p)) for p in poses]
    if disparities is None or K is None:
        raise DomainError("direct optimization needs disparities and intrinsics")
    out = []
    for k in range(n - 1):
        est = estimate_pair(
            frames[k],
            frames[k + 1],
            disparities[k],
            disparities[k + 1],
            K,
            pose_source.settings,
            spec_est_t=None if spec_est is None else spec_est[k],
            spec_est_t1=None if spec_est is None else spec_est[k + 1],
        )
        logger.debug("pair %d: loss %.4g -> %.4g", idx[k], est.diagnostics.initial_loss, est.diagnostics.final_loss)
        if diagnostics is not None:
            diagnostics.append({"frame_index": idx[k], **est.diagnostics.as_dict()})
        out.append((est.forward, est.backward))
    return out


def pair_final_loss(pair: FramePair, est: PairEstimate, K: PinholeIntrinsics, weights: LossWeights = LossWeights()):
    return final_loss(pair, est.forward, est.backward, K, weights)
