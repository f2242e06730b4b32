"""Trajectory and classification metrics.

Trajectories are compared after a least-squares similarity alignment
(Umeyama).  Classification metrics are computed per video and then averaged
without weighting, matching how per-video confusion matrices are pooled.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .errors import DegenerateError, DomainError
from .se3 import Pose6DoF, TransformSE3, pose_to_transform, rotation_angle

N_SEGMENTS = 6
SEGMENT_NAMES = ("cecum", "ascending", "transverse", "descending", "sigmoid", "rectum")


@dataclass(frozen=True)
class Similarity:
    scale: float
    R: np.ndarray
    t: np.ndarray

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.scale * np.asarray(points, dtype=float) @ self.R.T + self.t


def umeyama_align(est: np.ndarray, gt: np.ndarray) -> Similarity:
    """Similarity ``(s, R, t)`` minimizing ``sum |gt - (s R est + t)|^2``.

    For collinear data the rotation about the common line is not unique;
    one minimizer is returned, which leaves the residuals (and ATE)
    unaffected.

    Raises:
        DegenerateError: if either point set collapses to a single point.
    """
    x = np.asarray(est, dtype=float).reshape(-1, 3)
    y = np.asarray(gt, dtype=float).reshape(-1, 3)
    if x.shape != y.shape:
        raise DomainError(f"trajectory lengths differ: {len(x)} vs {len(y)}")
    if len(x) < 3:
        raise DomainError("alignment needs at least 3 points")
    mx, my = x.mean(axis=0), y.mean(axis=0)
    xc, yc = x - mx, y - my
    var_x = np.mean(np.sum(xc**2, axis=1))
    cov = yc.T @ xc / len(x)
    U, D, Vt = np.linalg.svd(cov)
    var_y = np.mean(np.sum(yc**2, axis=1))
    if var_x <= 0 or var_y <= 0 or D[0] <= 1e-15 * np.sqrt(var_x * var_y):
        raise DegenerateError("point set collapses to a single point; alignment is undefined")
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    s = float(np.trace(np.diag(D) @ S) / var_x)
    t = my - s * R @ mx
    return Similarity(scale=s, R=R, t=t)


def ate(est: np.ndarray, gt: np.ndarray, align: bool = True):
    """Absolute trajectory error: ``(mean, std, per_point)`` after alignment."""
    x = np.asarray(est, dtype=float).reshape(-1, 3)
    y = np.asarray(gt, dtype=float).reshape(-1, 3)
    if x.shape != y.shape:
        raise DomainError(f"trajectory lengths differ: {len(x)} vs {len(y)}")
    if align:
        x = umeyama_align(x, y).apply(x)
    err = np.linalg.norm(x - y, axis=1)
    return float(err.mean()), float(err.std()), err


def _as_matrix(p: Union[Pose6DoF, TransformSE3, np.ndarray]) -> np.ndarray:
    if isinstance(p, Pose6DoF):
        return pose_to_transform(p).matrix
    if isinstance(p, TransformSE3):
        return p.matrix
    return np.asarray(p, dtype=float)


def relative_errors(est_poses: Sequence, gt_poses: Sequence, scale: float = 1.0):
    """Per-pair translation error and rotation error in degrees."""
    if len(est_poses) != len(gt_poses):
        raise DomainError(f"pose counts differ: {len(est_poses)} vs {len(gt_poses)}")
    te, re = [], []
    for e, g in zip(est_poses, gt_poses):
        E = _as_matrix(e).copy()
        E[:3, 3] *= scale
        G = _as_matrix(g)
        Gi = np.eye(4)
        Gi[:3, :3] = G[:3, :3].T
        Gi[:3, 3] = -G[:3, :3].T @ G[:3, 3]
        D = Gi @ E
        te.append(np.linalg.norm(D[:3, 3]))
        re.append(np.degrees(rotation_angle(D[:3, :3])))
    return np.array(te), np.array(re)


def rpe(est_poses: Sequence, gt_poses: Sequence, scale: float = 1.0) -> Dict[str, float]:
    """Relative pose error over consecutive pairs.

    ``scale`` multiplies the estimated translations first (normally the
    scale of the trajectory similarity alignment).
    """
    te, re = relative_errors(est_poses, gt_poses, scale)
    return {
        "rpe_trans_mean": float(te.mean()),
        "rpe_trans_std": float(te.std()),
        "rpe_rot_mean": float(re.mean()),
        "rpe_rot_std": float(re.std()),
    }


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------


def confusion_counts(pred: Sequence[int], true: Sequence[int]) -> np.ndarray:
    p = np.asarray(pred, dtype=int)
    t = np.asarray(true, dtype=int)
    C = np.zeros((N_SEGMENTS, N_SEGMENTS), dtype=int)
    np.add.at(C, (t - 1, p - 1), 1)
    return C


def row_normalize(C: np.ndarray) -> np.ndarray:
    """Row fractions; rows without support are NaN (reported as absent)."""
    C = np.asarray(C, dtype=float)
    rows = C.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(rows > 0, C / np.where(rows > 0, rows, 1.0), np.nan)


def _ratio(a, b):
    return a / b if b > 0 else np.nan


def segment_metrics(C: np.ndarray) -> Dict[str, np.ndarray]:
    """One-vs-rest metrics per segment from a count matrix (rows = truth)."""
    C = np.asarray(C, dtype=float)
    n = C.sum()
    out = {k: np.full(N_SEGMENTS, np.nan) for k in ("f1", "sensitivity", "specificity", "precision", "accuracy")}
    for k in range(N_SEGMENTS):
        tp = C[k, k]
        fn = C[k].sum() - tp
        fp = C[:, k].sum() - tp
        tn = n - tp - fn - fp
        out["sensitivity"][k] = _ratio(tp, tp + fn)
        out["specificity"][k] = _ratio(tn, tn + fp)
        out["precision"][k] = _ratio(tp, tp + fp)
        out["f1"][k] = _ratio(2 * tp, 2 * tp + fp + fn)
        out["accuracy"][k] = _ratio(tp + tn, n)
    return out


@dataclass
class VideoClassification:
    accuracy: float
    avg_segment_error: float
    max_segment_error: float
    confusion: np.ndarray  # row fractions, NaN rows absent
    per_segment: Dict[str, np.ndarray]


def classify_video(pred: Sequence[int], true: Sequence[int]) -> VideoClassification:
    p = np.asarray(pred, dtype=int)
    t = np.asarray(true, dtype=int)
    if p.shape != t.shape:
        raise DomainError("prediction and annotation lengths differ")
    if p.size == 0:
        raise DomainError("empty video")
    if p.min() < 1 or p.max() > N_SEGMENTS or t.min() < 1 or t.max() > N_SEGMENTS:
        raise DomainError("segment labels must be in 1..6")
    err = np.abs(p - t)
    C = confusion_counts(p, t)
    return VideoClassification(
        accuracy=float(np.mean(p == t)),
        avg_segment_error=float(err.mean()),
        max_segment_error=float(err.max()),
        confusion=row_normalize(C),
        per_segment=segment_metrics(C),
    )


def _nanmean_stack(arrs):
    a = np.stack(arrs)
    out = np.full(a.shape[1:], np.nan)
    ok = ~np.all(np.isnan(a), axis=0)
    out[ok] = np.nanmean(a[:, ok], axis=0)
    return out


@dataclass
class EvalReport:
    accuracy: Optional[float] = None
    avg_segment_error: Optional[float] = None
    max_segment_error: Optional[float] = None
    confusion: Optional[np.ndarray] = None
    per_segment: Optional[Dict[str, np.ndarray]] = None
    per_video: List[Dict[str, float]] = field(default_factory=list)
    ate_mean: Optional[float] = None
    ate_std: Optional[float] = None
    rpe_trans_mean: Optional[float] = None
    rpe_trans_std: Optional[float] = None
    rpe_rot_mean: Optional[float] = None
    rpe_rot_std: Optional[float] = None
    cpe_mean: Optional[float] = None
    cpe_std: Optional[float] = None

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, np.ndarray):
                return clean(v.tolist())
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [clean(x) for x in v]
            if isinstance(v, (float, np.floating)):
                return None if not np.isfinite(v) else float(v)
            return v

        d = asdict(self)
        if self.per_segment is not None:
            d["per_segment"] = {
                k: dict(zip(SEGMENT_NAMES, clean(v))) for k, v in self.per_segment.items()
            }
        return clean(d)

    def to_json(self, path, provenance: Optional[str] = None):
        d = self.to_dict()
        if provenance:
            d["_provenance"] = provenance.lstrip("# ")
        Path(path).write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")

    def confusion_csv(self, path, provenance: Optional[str] = None):
        if self.confusion is None:
            raise DomainError("report has no confusion matrix")
        with open(path, "w", newline="") as fh:
            if provenance:
                fh.write(provenance + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["true\\pred", *SEGMENT_NAMES])
            for name, row in zip(SEGMENT_NAMES, self.confusion):
                w.writerow([name, *("" if np.isnan(v) else "%.9g" % (100.0 * v) for v in row)])


def classification_report(predicted: Sequence[Sequence[int]], annotated: Sequence[Sequence[int]]) -> EvalReport:
    """Per-video classification metrics averaged across videos.

    The confusion matrix is the element-wise mean of the per-video row
    fractions, skipping rows a video does not contain.
    """
    if len(predicted) != len(annotated):
        raise DomainError("prediction and annotation video counts differ")
    if len(predicted) == 0:
        raise DomainError("no videos")
    vids = [classify_video(p, t) for p, t in zip(predicted, annotated)]
    return EvalReport(
        accuracy=float(np.mean([v.accuracy for v in vids])),
        avg_segment_error=float(np.mean([v.avg_segment_error for v in vids])),
        max_segment_error=float(np.mean([v.max_segment_error for v in vids])),
        confusion=_nanmean_stack([v.confusion for v in vids]),
        per_segment={k: _nanmean_stack([v.per_segment[k] for v in vids]) for k in vids[0].per_segment},
        per_video=[
            {"accuracy": v.accuracy, "avg_segment_error": v.avg_segment_error, "max_segment_error": v.max_segment_error}
            for v in vids
        ],
    )
