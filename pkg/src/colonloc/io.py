"""File formats used by the pipeline.

All text outputs are deterministic: fixed float formatting, sorted JSON keys
and an optional leading ``#`` provenance line that readers skip.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import yaml
from PIL import Image

from .camera_model import FisheyePolynomial, PinholeIntrinsics
from .errors import DomainError, ManifestError
from .se3 import Pose6DoF

__version__ = "0.1.0"

POSE_COLUMNS = ("frame_index", "tx", "ty", "tz", "rx", "ry", "rz")
FLO_MAGIC = b"PIEH"
FLOAT_FMT = "%.9g"


def fmt(x: float) -> str:
    return FLOAT_FMT % (float(x) + 0.0)  # no negative zero


def provenance(manifest_hash: Optional[str] = None) -> str:
    """Single comment line identifying the producing tool and inputs."""
    line = f"# colonloc {__version__}"
    if manifest_hash:
        line += f" manifest_sha256={manifest_hash}"
    return line


def hash_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def hash_json(obj) -> str:
    return hash_bytes(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode())


# ---------------------------------------------------------------------------
# generic CSV helpers
# ---------------------------------------------------------------------------


def _write_csv(path, header: Sequence[str], rows: Iterable[Sequence], comment: Optional[str] = None):
    path = Path(path)
    with path.open("w", newline="") as fh:
        if comment:
            fh.write(comment.rstrip("\n") + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


def _read_csv(path, required: Sequence[str]) -> List[Dict[str, str]]:
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"missing file: {path}")
    with path.open(newline="") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if reader.fieldnames is None:
        raise ManifestError(f"{path}: no header row")
    missing = [c for c in required if c not in reader.fieldnames]
    if missing:
        raise ManifestError(f"{path}: missing columns {missing}")
    return list(reader)


# ---------------------------------------------------------------------------
# poses
# ---------------------------------------------------------------------------


def write_pose_csv(path, frame_indices: Sequence[int], poses: Sequence[Pose6DoF], comment: Optional[str] = None):
    """One row per consecutive-frame pair, keyed by the first frame's index."""
    if len(frame_indices) != len(poses):
        raise DomainError("frame_indices and poses differ in length")
    rows = [[int(i), *map(float, p.as_array())] for i, p in zip(frame_indices, poses)]
    _write_csv(path, POSE_COLUMNS, rows, comment)


def read_pose_csv(path) -> Tuple[List[int], List[Pose6DoF]]:
    rows = _read_csv(path, POSE_COLUMNS)
    try:
        idx = [int(r["frame_index"]) for r in rows]
        poses = [Pose6DoF.from_array([float(r[c]) for c in POSE_COLUMNS[1:]]) for r in rows]
    except (ValueError, DomainError) as exc:
        raise ManifestError(f"{path}: malformed pose row ({exc})") from exc
    return idx, poses


# ---------------------------------------------------------------------------
# rasters
# ---------------------------------------------------------------------------


def read_frame(path) -> np.ndarray:
    """8- or 16-bit PNG as float in ``[0, 1]``; ``(H, W)`` or ``(H, W, 3)``."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"missing frame: {path}")
    with Image.open(path) as im:
        mode = im.mode
        if mode in ("I;16", "I;16B", "I;16L", "I"):
            arr = np.asarray(im, dtype=np.float64)
            return arr / 65535.0
        if mode not in ("L", "RGB"):
            im = im.convert("RGB")
        arr = np.asarray(im, dtype=np.float64)
    return arr / 255.0


def write_frame(path, image: np.ndarray, bits: int = 8):
    """Write a ``[0, 1]`` image; sentinel pixels are stored as 0.

    RGB output is 8-bit only (Pillow has no 16-bit RGB PNG writer).
    """
    a = np.clip(np.asarray(image, dtype=float), 0.0, 1.0)
    if bits == 16:
        if a.ndim != 2:
            raise DomainError("16-bit frames must be single-channel")
        Image.fromarray(np.round(a * 65535).astype(np.uint16)).save(path)
    elif bits == 8:
        Image.fromarray(np.round(a * 255).astype(np.uint8)).save(path)
    else:
        raise DomainError("bits must be 8 or 16")


def write_scalar_png(path, values: np.ndarray, scale: float):
    """Single-channel 16-bit PNG storing ``round(values * scale)``."""
    q = np.round(np.asarray(values, dtype=float) * scale)
    if q.min() < 0 or q.max() > 65535:
        raise DomainError(f"values out of range for scale {scale}")
    Image.fromarray(q.astype(np.uint16)).save(path)


def read_scalar_png(path, scale: float) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"missing raster: {path}")
    with Image.open(path) as im:
        return np.asarray(im, dtype=np.float64) / scale


def read_flo(path) -> np.ndarray:
    """Two-channel optical flow ``(H, W, 2)`` in the Middlebury layout."""
    with open(path, "rb") as fh:
        if fh.read(4) != FLO_MAGIC:
            raise ManifestError(f"{path}: bad flow magic")
        w, h = np.frombuffer(fh.read(8), dtype="<i4")
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != 2 * w * h:
        raise ManifestError(f"{path}: truncated flow data")
    return data.reshape(h, w, 2).astype(np.float64)


def write_flo(path, flow: np.ndarray):
    flow = np.asarray(flow, dtype="<f4")
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise DomainError("flow must be (H, W, 2)")
    h, w = flow.shape[:2]
    with open(path, "wb") as fh:
        fh.write(FLO_MAGIC)
        fh.write(np.array([w, h], dtype="<i4").tobytes())
        fh.write(flow.tobytes())


# ---------------------------------------------------------------------------
# camera config
# ---------------------------------------------------------------------------


def load_camera_config(path) -> Tuple[PinholeIntrinsics, Optional[FisheyePolynomial], Optional[Tuple[int, int]]]:
    """Read a YAML key-value camera file.

    Keys: ``fx, fy, cx, cy`` (required), ``skew``, ``coeffs``, ``out_cx``,
    ``out_cy``, ``width``, ``height``.  The fisheye model is returned only
    when ``coeffs`` is present.
    """
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"missing camera config: {path}")
    cfg = yaml.safe_load(path.read_text()) or {}
    try:
        K = PinholeIntrinsics(
            fx=float(cfg["fx"]), fy=float(cfg["fy"]), cx=float(cfg["cx"]), cy=float(cfg["cy"]), skew=float(cfg.get("skew", 0.0))
        )
    except KeyError as exc:
        raise ManifestError(f"{path}: missing key {exc}") from exc
    size = None
    if "width" in cfg and "height" in cfg:
        size = (int(cfg["height"]), int(cfg["width"]))
    fisheye = None
    if cfg.get("coeffs"):
        if size is not None:
            max_r = float(np.hypot(*size))
        else:
            max_r = float(np.hypot(2 * K.cx + 1, 2 * K.cy + 1))
        fisheye = FisheyePolynomial(
            coeffs=tuple(float(c) for c in cfg["coeffs"]),
            cx=K.cx,
            cy=K.cy,
            max_radius=max_r,
            out_cx=cfg.get("out_cx"),
            out_cy=cfg.get("out_cy"),
        )
    return K, fisheye, size


def save_camera_config(path, K: PinholeIntrinsics, fisheye: Optional[FisheyePolynomial] = None, size: Optional[Tuple[int, int]] = None):
    cfg = {"fx": float(K.fx), "fy": float(K.fy), "skew": float(K.skew), "cx": float(K.cx), "cy": float(K.cy)}
    if size is not None:
        cfg["height"], cfg["width"] = int(size[0]), int(size[1])
    if fisheye is not None:
        cfg["coeffs"] = [float(c) for c in fisheye.coeffs]
        cfg["out_cx"] = float(fisheye.out_cx)
        cfg["out_cy"] = float(fisheye.out_cy)
    Path(path).write_text(yaml.safe_dump(cfg, sort_keys=True))


# ---------------------------------------------------------------------------
# annotations, labels, lengths, templates
# ---------------------------------------------------------------------------


def read_annotations(path) -> List[Tuple[str, List[float]]]:
    """Annotation JSON: one ``{video_id, entry_times_s}`` object or a list of them."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"missing annotations: {path}")
    data = json.loads(path.read_text())
    items = data if isinstance(data, list) else [data]
    out = []
    for it in items:
        try:
            out.append((str(it["video_id"]), [float(t) for t in it["entry_times_s"]]))
        except (KeyError, TypeError) as exc:
            raise ManifestError(f"{path}: malformed annotation ({exc})") from exc
    return out


def write_annotations(path, items: Sequence[Tuple[str, Sequence[float]]]):
    data = [{"video_id": v, "entry_times_s": [float(t) for t in ts]} for v, ts in items]
    payload = data[0] if len(data) == 1 else data
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_frame_labels(path) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns ``(frame_index, non_informative, biopsy)`` arrays."""
    rows = _read_csv(path, ("frame_index", "non_informative", "biopsy"))
    try:
        idx = np.array([int(r["frame_index"]) for r in rows], dtype=int)
        ni = np.array([int(r["non_informative"]) != 0 for r in rows], dtype=bool)
        bx = np.array([int(r["biopsy"]) != 0 for r in rows], dtype=bool)
    except ValueError as exc:
        raise ManifestError(f"{path}: malformed label row ({exc})") from exc
    return idx, ni, bx


def write_frame_labels(path, non_informative: Sequence[bool], biopsy: Sequence[bool], comment: Optional[str] = None):
    rows = [[i, int(bool(a)), int(bool(b))] for i, (a, b) in enumerate(zip(non_informative, biopsy))]
    _write_csv(path, ("frame_index", "non_informative", "biopsy"), rows, comment)


def read_scopeguide(path) -> Tuple[np.ndarray, np.ndarray]:
    rows = _read_csv(path, ("frame_index", "length_cm"))
    return (
        np.array([int(r["frame_index"]) for r in rows], dtype=int),
        np.array([float(r["length_cm"]) for r in rows], dtype=float),
    )


def write_scopeguide(path, frame_indices: Sequence[int], lengths: Sequence[float], comment: Optional[str] = None):
    _write_csv(path, ("frame_index", "length_cm"), [[int(i), float(v)] for i, v in zip(frame_indices, lengths)], comment)


def write_template(path, template, comment: Optional[str] = None):
    from .colon_template import SegmentLabel

    data = {lab.name.lower(): float(v) for lab, v in zip(SegmentLabel, template.fractions)}
    if comment:
        data["_provenance"] = comment.lstrip("# ")
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def read_template(path):
    from .colon_template import ColonTemplate, SegmentLabel

    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"missing template: {path}")
    data = json.loads(path.read_text())
    try:
        return ColonTemplate(tuple(float(data[lab.name.lower()]) for lab in SegmentLabel))
    except KeyError as exc:
        raise ManifestError(f"{path}: missing segment {exc}") from exc


# ---------------------------------------------------------------------------
# trajectories and per-frame series
# ---------------------------------------------------------------------------


def write_trajectory_csv(path, frame_indices: Sequence[int], positions: np.ndarray, comment: Optional[str] = None):
    rows = [[int(i), *map(float, p)] for i, p in zip(frame_indices, np.asarray(positions))]
    _write_csv(path, ("frame_index", "x", "y", "z"), rows, comment)


def read_trajectory_csv(path) -> Tuple[np.ndarray, np.ndarray]:
    rows = _read_csv(path, ("frame_index", "x", "y", "z"))
    idx = np.array([int(r["frame_index"]) for r in rows], dtype=int)
    pos = np.array([[float(r[c]) for c in "xyz"] for r in rows], dtype=float).reshape(-1, 3)
    return idx, pos


def write_series_csv(path, column: str, frame_indices: Sequence[int], values: Sequence, comment: Optional[str] = None):
    rows = [[int(i), v if isinstance(v, (int, np.integer)) else float(v)] for i, v in zip(frame_indices, values)]
    _write_csv(path, ("frame_index", column), rows, comment)


def read_series_csv(path, column: str, dtype=float) -> Tuple[np.ndarray, np.ndarray]:
    rows = _read_csv(path, ("frame_index", column))
    idx = np.array([int(r["frame_index"]) for r in rows], dtype=int)
    vals = np.array([dtype(float(r[column])) if dtype is int else dtype(r[column]) for r in rows])
    return idx, vals
