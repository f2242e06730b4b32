"""Synthetic withdrawal cohort for comparing location indices.

No images are rendered.  Each video is a camera moving along a procedural
colon centreline (lengths in cm) from the cecum to the rectum with a
segment-dependent, video-dependent speed, back-and-forth inspection motion
and lateral wobble.  The simulator emits noisy relative poses (as a pose
network would), annotated segment entry times, per-frame ground-truth labels
and an inserted-tube-length signal with loop slack and spikes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .colon_template import (
    SET2_TEMPLATE,
    SegmentAnnotation,
    build_template,
    classify,
    relative_lengths,
    scopeguide_index,
    time_index,
)
from .se3 import Pose6DoF, TransformSE3
from .synthetic import look_rotation, relative_pose
from .trajectory import DEFAULT_GAMMA, fit_major_path, integrate, location_index


@dataclass(frozen=True)
class CohortSpec:
    n_videos: int = 10
    fps: float = 5.0
    colon_length_cm: float = 150.0
    mean_speed_cm_s: float = 1.0
    base_template: Tuple[float, ...] = SET2_TEMPLATE
    #: Dirichlet concentration of per-video segment proportions.
    concentration: float = 400.0
    #: Log-normal spread of per-segment withdrawal speed.
    speed_sigma: float = 0.3
    zigzag_cm: float = 1.5
    zigzag_hz: float = 0.15
    lateral_cm: float = 0.3
    pose_noise_rot: float = 5e-4
    pose_noise_trans: float = 0.01
    loop_slack_cm: Tuple[float, float] = (40.0, 80.0)
    spikes: Tuple[int, int] = (4, 8)
    spike_cm: Tuple[float, float] = (20.0, 50.0)
    spike_s: Tuple[float, float] = (3.0, 10.0)
    scope_noise_cm: float = 0.5
    #: Length of one pose-translation unit in cm.  Self-supervised pose
    #: networks have arbitrary scale; the unit fixes what gamma means.
    pose_unit_cm: float = 10.0


@dataclass
class SimulatedVideo:
    times: np.ndarray
    camera_poses: List[TransformSE3]
    relative_poses: List[Pose6DoF]
    annotation: SegmentAnnotation
    true_labels: np.ndarray
    scope_lengths: np.ndarray
    fractions: np.ndarray


def _smooth_random(rng, s, n_terms=4, amp=1.0, wl=(25.0, 80.0)):
    out = np.zeros_like(s)
    for _ in range(n_terms):
        out += amp / n_terms * np.sin(2 * np.pi * s / rng.uniform(*wl) + rng.uniform(0, 2 * np.pi))
    return out


class Centerline:
    """Unit-speed 3-D curve built by integrating a smoothly turning tangent."""

    def __init__(self, rng: np.random.Generator, length: float, ds: float = 0.05):
        self.s = np.arange(0.0, length + ds, ds)
        yaw = _smooth_random(rng, self.s, amp=1.2, wl=(60.0, 150.0))
        pitch = 0.3 * _smooth_random(rng, self.s, amp=1.0, wl=(60.0, 150.0))
        tang = np.stack([np.cos(pitch) * np.cos(yaw), np.cos(pitch) * np.sin(yaw), np.sin(pitch)], axis=1)
        mid = 0.5 * (tang[1:] + tang[:-1])
        self.p = np.concatenate([[np.zeros(3)], np.cumsum(mid * ds, axis=0)])
        self.t = tang

    def point(self, s):
        return np.stack([np.interp(s, self.s, self.p[:, k]) for k in range(3)], axis=-1)

    def tangent(self, s):
        v = np.stack([np.interp(s, self.s, self.t[:, k]) for k in range(3)], axis=-1)
        return v / np.linalg.norm(v, axis=-1, keepdims=True)


def simulate_video(spec: CohortSpec, rng: np.random.Generator) -> SimulatedVideo:
    L = spec.colon_length_cm
    frac = rng.dirichlet(spec.concentration * np.asarray(spec.base_template))
    bounds = np.concatenate([[0.0], np.cumsum(frac)]) * L
    bounds[-1] = L
    speeds = spec.mean_speed_cm_s * np.exp(spec.speed_sigma * rng.normal(size=6))
    seg_t = np.diff(bounds) / speeds
    knots_t = np.concatenate([[0.0], np.cumsum(seg_t)])
    dt = 1.0 / spec.fps
    times = np.arange(0.0, knots_t[-1], dt)
    times = np.append(times, knots_t[-1]) if knots_t[-1] - times[-1] > 0.5 * dt else times
    base = np.interp(times, knots_t, bounds)
    env = np.clip(np.minimum(base, L - base) / 5.0, 0.0, 1.0)
    phase = rng.uniform(0, 2 * np.pi)
    p = base + spec.zigzag_cm * env * np.sin(2 * np.pi * spec.zigzag_hz * times + phase)
    p = np.clip(p, 0.0, L)
    p[0], p[-1] = 0.0, L

    line = Centerline(rng, L)
    c = line.point(p)
    tan = line.tangent(p)
    helper = np.where(np.abs(tan[:, 2:3]) < 0.9, [[0.0, 0.0, 1.0]], [[1.0, 0.0, 0.0]])
    n1 = np.cross(tan, helper)
    n1 /= np.linalg.norm(n1, axis=1, keepdims=True)
    n2 = np.cross(tan, n1)
    wob = spec.lateral_cm * env[:, None]
    off = wob * (np.sin(0.9 * times + 1.0)[:, None] * n1 + np.cos(0.6 * times)[:, None] * n2)
    pos = c + off
    cams = [TransformSE3.from_rt(look_rotation(-tan[k]), pos[k]) for k in range(len(times))]

    rel = []
    for k in range(len(cams) - 1):
        q = relative_pose(cams[k], cams[k + 1]).as_array()
        q[:3] += spec.pose_noise_trans * rng.normal(size=3)
        q[:3] /= spec.pose_unit_cm
        q[3:] += spec.pose_noise_rot * rng.normal(size=3)
        rel.append(Pose6DoF.from_array(q))

    entry = [times[0]]
    for b in bounds[1:-1]:
        entry.append(times[int(np.argmax(p >= b))])
    entry.append(times[-1])
    ann = SegmentAnnotation(tuple(entry))
    labels = np.searchsorted(np.asarray(entry[1:-1]), times, side="right") + 1

    # inserted length: remaining path, loop slack removed mid-withdrawal, spikes
    lo, hi = sorted(rng.uniform(0.2, 0.7, 2) * L)
    slack = rng.uniform(*spec.loop_slack_cm) * np.clip((hi - p) / max(hi - lo, 1e-6), 0.0, 1.0)
    spikes = np.zeros_like(times)
    for _ in range(rng.integers(spec.spikes[0], spec.spikes[1] + 1)):
        t0 = rng.uniform(0.05, 0.95) * times[-1]
        w = rng.uniform(*spec.spike_s)
        spikes += rng.uniform(*spec.spike_cm) * np.exp(-0.5 * ((times - t0) / (0.3 * w)) ** 2)
    scope = 10.0 + (L - p) + slack + spikes + spec.scope_noise_cm * rng.normal(size=times.size)
    return SimulatedVideo(
        times=times,
        camera_poses=cams,
        relative_poses=rel,
        annotation=ann,
        true_labels=labels.astype(int),
        scope_lengths=scope,
        fractions=frac,
    )


def simulate_cohort(spec: CohortSpec = CohortSpec(), seed: int = 0) -> List[SimulatedVideo]:
    rng = np.random.default_rng(seed)
    return [simulate_video(spec, rng) for _ in range(spec.n_videos)]


def motion_index(video: SimulatedVideo, gamma: float = DEFAULT_GAMMA) -> np.ndarray:
    traj = integrate(video.relative_poses, invert_poses=True)
    return location_index(traj, fit_major_path(traj, gamma))


def compare_indices(videos: Sequence[SimulatedVideo], gamma: float = DEFAULT_GAMMA) -> Dict[str, np.ndarray]:
    """Leave-one-out classification accuracy per video for each index.

    For every video the template is built from the other videos' relative
    lengths measured with the same index, then used to classify it.
    """
    idx = {
        "motion": [motion_index(v, gamma) for v in videos],
        "time": [time_index(v.times, v.annotation.times[0], v.annotation.times[-1]) for v in videos],
        "scopeguide": [scopeguide_index(v.scope_lengths) for v in videos],
    }
    out = {}
    for name, series in idx.items():
        q = [relative_lengths(v.annotation, f, v.times) for v, f in zip(videos, series)]
        acc = []
        for i, v in enumerate(videos):
            tmpl = build_template([q[j] for j in range(len(videos)) if j != i])
            acc.append(float(np.mean(classify(series[i], tmpl) == v.true_labels)))
        out[name] = np.array(acc)
    return out
