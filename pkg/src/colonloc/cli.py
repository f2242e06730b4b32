"""Command-line pipeline.

Subcommands::

    synth          render a synthetic withdrawal dataset
    undistort      fisheye frames -> pinhole-equivalent frames
    filter         frame labels -> retained frame indices
    estimate-pose  frames + disparities -> relative pose CSV
    localize       pose CSV -> trajectory, location index, SVG plot
    template       location indices + annotations -> colon template
    classify       location index + template -> per-frame segments
    eval           predicted vs annotated segments (and trajectories)

Every flag can also be given in a JSON manifest (``--manifest``); manifest
values override flags.  ``COLONLOC_OUTPUT_ROOT`` sets the default output
directory (``<root>/<subcommand>``).  Outputs are staged and only moved into
place after the whole command succeeds, so a failing command leaves no
partial outputs.  Exit status is ``exc.exit_code`` for library errors and
64 for usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import tempfile
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import io
from .camera_model import Frame, PinholeIntrinsics, corrected_intrinsics, undistort_image
from .colon_template import (
    SET2_TEMPLATE,
    ColonTemplate,
    SegmentAnnotation,
    build_template,
    classify,
    filter_frames,
    relative_lengths,
    scopeguide_index,
    time_index,
)
from .errors import ColonLocError, DomainError, ManifestError
from .metrics import EvalReport, ate, classification_report, rpe, umeyama_align
from .plotting import localization_svg
from .pose_estimator import DirectOptimizerSource, FileStreamSource, OptimizerSettings, estimate_sequence
from .synthetic import TrajectorySpec, generate_sequence, make_tube
from .trajectory import DEFAULT_GAMMA, fit_major_path, integrate, location_index
from .warping import DISPARITY_MAX, LossWeights

logger = logging.getLogger("colonloc")

ENV_OUTPUT_ROOT = "COLONLOC_OUTPUT_ROOT"
EXIT_USAGE = 64
DISPARITY_SCALE = 65535.0 / DISPARITY_MAX
MASK_SCALE = 65535.0
DEFAULT_FPS = 15.0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# manifest, provenance, staging
# ---------------------------------------------------------------------------

PATH_KEYS = {
    "frames", "disparity", "masks", "valid", "camera", "labels", "retained", "poses", "gt_poses",
    "index", "annotations", "scopeguide", "template", "pred", "truth", "trajectory", "scene",
}


def _apply_manifest(args: argparse.Namespace) -> argparse.Namespace:
    if not getattr(args, "manifest", None):
        return args
    path = Path(args.manifest)
    if not path.is_file():
        raise ManifestError(f"missing manifest: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ManifestError(f"{path}: manifest must be a JSON object")
    base = path.parent
    for key, val in data.items():
        key = key.replace("-", "_")
        if key in ("command", "func", "manifest"):
            continue
        if not hasattr(args, key):
            raise ManifestError(f"{path}: unknown field {key!r} for this subcommand")
        if key in PATH_KEYS or key == "out":
            if isinstance(val, list):
                val = [str(base / v) for v in val]
            elif val is not None:
                val = str(base / val)
        setattr(args, key, val)
    return args


def _content_hash(p: Path) -> str:
    if p.is_dir():
        parts = [f"{q.relative_to(p)}:{_content_hash(q)}" for q in sorted(p.rglob("*")) if q.is_file()]
        return io.hash_bytes("\n".join(parts).encode())
    return io.hash_bytes(p.read_bytes())


def _run_hash(args: argparse.Namespace) -> str:
    """Hash of parameters and input *contents* (output location excluded)."""
    cfg = {}
    for k, v in sorted(vars(args).items()):
        if k in ("func", "manifest", "out", "verbose"):
            continue
        if k in PATH_KEYS and v is not None:
            vals = v if isinstance(v, list) else [v]
            v = [_content_hash(Path(x)) if Path(x).exists() else None for x in vals]
        cfg[k] = v
    return io.hash_json(cfg)[:16]


def _check_paths(args: argparse.Namespace, required: Sequence[str]):
    for key in PATH_KEYS:
        val = getattr(args, key, None)
        if val is None:
            if key in required:
                raise ManifestError(f"--{key.replace('_', '-')} is required")
            continue
        for v in val if isinstance(val, list) else [val]:
            if key == "template" and v == "set2":
                continue
            if not Path(v).exists():
                raise ManifestError(f"missing input for --{key.replace('_', '-')}: {v}")


def _out_dir(args: argparse.Namespace) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    root = os.environ.get(ENV_OUTPUT_ROOT)
    if not root:
        raise ManifestError(f"no --out given and {ENV_OUTPUT_ROOT} is not set")
    return Path(root) / args.command


class Staging:
    """Write outputs into a scratch directory; publish them on success."""

    def __init__(self, out: Path):
        self.out = out
        self.dir: Optional[Path] = None

    def __enter__(self) -> Path:
        self.out.parent.mkdir(parents=True, exist_ok=True)
        self.dir = Path(tempfile.mkdtemp(prefix=".colonloc-", dir=self.out.parent))
        return self.dir

    def __exit__(self, exc_type, exc, tb):
        try:
            if exc_type is None:
                self.out.mkdir(parents=True, exist_ok=True)
                for src in sorted(self.dir.rglob("*")):
                    dst = self.out / src.relative_to(self.dir)
                    if src.is_dir():
                        dst.mkdir(parents=True, exist_ok=True)
                    else:
                        dst.parent.mkdir(parents=True, exist_ok=True)
                        os.replace(src, dst)
        finally:
            shutil.rmtree(self.dir, ignore_errors=True)
        return False


def _list_pngs(d: Path) -> List[Path]:
    files = sorted(Path(d).glob("*.png"))
    if not files:
        raise ManifestError(f"no PNG files in {d}")
    return files


def _read_index_column(path) -> np.ndarray:
    rows = io._read_csv(path, ("frame_index",))
    return np.array([int(r["frame_index"]) for r in rows], dtype=int)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _synth_annotation(progress: np.ndarray, times: np.ndarray, template: Sequence[float]) -> List[float]:
    c = np.cumsum(template)[:-1]
    entry = [float(times[0])]
    for b in c:
        hit = np.flatnonzero(progress >= b)
        entry.append(float(times[hit[0]]) if hit.size else float(times[-1]))
    entry.append(float(times[-1]))
    return entry


def cmd_synth(args) -> int:
    if args.frames_count < 2:
        raise DomainError("--frames-count must be >= 2")
    scene_kw = {}
    if args.scene:
        import yaml

        scene_kw = yaml.safe_load(Path(args.scene).read_text()) or {}
    traj_kw = scene_kw.pop("trajectory", {})
    scene = make_tube(
        length=args.length, curvature=args.curvature, seed=args.seed, n_spots=args.spots, **scene_kw
    )
    spec = TrajectorySpec(
        frame_count=args.frames_count,
        frame_interval=1.0 / args.fps,
        speed=args.speed,
        zigzag_amplitude=args.zigzag_amplitude,
        zigzag_frequency=args.zigzag_frequency,
        lateral_amplitude=args.lateral,
        angular_amplitude=args.angular,
        **traj_kw,
    )
    H, W = args.size
    K = PinholeIntrinsics.from_fov(W, H, args.hfov)
    seq = generate_sequence(scene, spec, K, (H, W))
    prov = io.provenance(_run_hash(args))
    z = np.array([p.T[2] for p in seq.camera_poses])
    progress = np.clip((z[0] - z) / max(z[0] - z.min(), 1e-12), 0.0, 1.0)
    n = spec.frame_count
    with Staging(_out_dir(args)) as st:
        for sub in ("frames", "disparity", "masks"):
            (st / sub).mkdir()
        for k in range(n):
            io.write_frame(st / "frames" / f"frame_{k:05d}.png", seq.frames[k])
            io.write_scalar_png(st / "disparity" / f"disp_{k:05d}.png", seq.disparities[k], DISPARITY_SCALE)
            io.write_scalar_png(st / "masks" / f"spec_{k:05d}.png", seq.speculars[k], MASK_SCALE)
        io.write_pose_csv(st / "gt_poses.csv", list(range(n - 1)), seq.relative_poses, prov)
        io.save_camera_config(st / "camera.yaml", K, size=(H, W))
        io.write_frame_labels(st / "labels.csv", [False] * n, [False] * n, prov)
        io.write_scopeguide(st / "scopeguide.csv", list(range(n)), 20.0 + 10.0 * z, prov)
        entry = _synth_annotation(progress, seq.times, SET2_TEMPLATE)
        try:
            SegmentAnnotation(tuple(entry))
            io.write_annotations(st / "annotations.json", [(f"synth-{args.seed}", entry)])
        except DomainError:
            logger.warning("sequence too short for six annotated segments; annotations.json skipped")
        manifest = {
            "frame_count": n,
            "fps": args.fps,
            "size": [H, W],
            "seed": args.seed,
            "disparity_scale": DISPARITY_SCALE,
            "mask_scale": MASK_SCALE,
            "provenance": prov.lstrip("# "),
        }
        (st / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_undistort(args) -> int:
    _check_paths(args, ("frames", "camera"))
    K, fisheye, size = io.load_camera_config(args.camera)
    if fisheye is None:
        raise ManifestError(f"{args.camera}: no fisheye coefficients")
    files = _list_pngs(args.frames)
    out_size = tuple(args.out_size) if args.out_size else size
    frames = [undistort_image(Frame(io.read_frame(f)), fisheye, K, out_size) for f in files]
    with Staging(_out_dir(args)) as st:
        (st / "frames").mkdir()
        (st / "valid").mkdir()
        for f, fr in zip(files, frames):
            px = fr.pixels if fr.channels > 1 else fr.pixels[..., 0]
            io.write_frame(st / "frames" / f.name, np.where(px < 0, 0.0, px))
            io.write_scalar_png(st / "valid" / f.name, fr.valid.astype(float), MASK_SCALE)
        io.save_camera_config(st / "camera.yaml", corrected_intrinsics(K, fisheye), size=frames[0].pixels.shape[:2])
    return 0


def cmd_filter(args) -> int:
    _check_paths(args, ("labels",))
    idx, ni, bx = io.read_frame_labels(args.labels)
    order = np.argsort(idx)
    keep = filter_frames(ni[order], bx[order], args.fps)
    prov = io.provenance(_run_hash(args))
    with Staging(_out_dir(args)) as st:
        io._write_csv(st / "retained.csv", ("frame_index",), [[int(i)] for i in idx[order][keep]], prov)
    return 0


def _settings(args) -> OptimizerSettings:
    return OptimizerSettings(
        max_iters=args.max_iters,
        pyramid_levels=args.pyramid_levels,
        gradient_mode=args.gradient_mode,
        step_scheme=args.step_scheme,
        weights=LossWeights(mc=args.lambda_mc),
    )


def cmd_estimate_pose(args) -> int:
    _check_paths(args, ("frames", "disparity", "camera"))
    K, _, _ = io.load_camera_config(args.camera)
    files = _list_pngs(args.frames)
    dfiles = _list_pngs(args.disparity)
    if len(dfiles) != len(files):
        raise ManifestError(f"{len(files)} frames but {len(dfiles)} disparity maps")
    keep = np.arange(len(files))
    if args.retained:
        keep = _read_index_column(args.retained)
        if keep.size and (keep.min() < 0 or keep.max() >= len(files)):
            raise ManifestError("retained frame index out of range")
    mfiles = _list_pngs(args.masks) if args.masks else None
    vfiles = _list_pngs(args.valid) if args.valid else None
    frames = [io.read_frame(files[k]) for k in keep]
    disps = [io.read_scalar_png(dfiles[k], args.disparity_scale) for k in keep]
    masks = None
    if mfiles or vfiles:
        masks = []
        for k in keep:
            m = io.read_scalar_png(mfiles[k], args.mask_scale) if mfiles else np.ones(frames[0].shape[:2])
            if vfiles:
                m = m * io.read_scalar_png(vfiles[k], MASK_SCALE)
            masks.append(m)
    diags: list = []
    pairs = estimate_sequence(
        frames, DirectOptimizerSource(_settings(args)), disps, K, masks, frame_indices=list(map(int, keep)), diagnostics=diags
    )
    prov = io.provenance(_run_hash(args))
    with Staging(_out_dir(args)) as st:
        io.write_pose_csv(st / "poses.csv", list(map(int, keep[:-1])), [f for f, _ in pairs], prov)
        io.write_pose_csv(st / "poses_backward.csv", list(map(int, keep[:-1])), [b for _, b in pairs], prov)
        (st / "diagnostics.json").write_text(json.dumps({"provenance": prov.lstrip("# "), "pairs": diags}, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_localize(args) -> int:
    _check_paths(args, ("poses",))
    rows, poses = io.read_pose_csv(args.poses)
    if len(poses) < 1:
        raise ManifestError(f"{args.poses}: no pose rows")
    if args.labels:
        lidx, ni, bx = io.read_frame_labels(args.labels)
        order = np.argsort(lidx)
        frames = lidx[order][filter_frames(ni[order], bx[order], args.fps)]
    elif args.retained:
        frames = _read_index_column(args.retained)
    else:
        frames = np.append(np.asarray(rows), rows[-1] + 1)
    frames = [int(i) for i in frames]
    # validates row count / indices against the retained frames
    pairs = estimate_sequence([None] * len(frames), FileStreamSource(args.poses), frame_indices=frames)
    traj = integrate([f for f, _ in pairs], frame_indices=frames, invert_poses=True)
    path = fit_major_path(traj, args.gamma)
    index = location_index(traj, path)
    times = np.asarray(frames, dtype=float) / args.fps
    path_pts = path.point(np.linspace(0.0, 1.0, 400))
    prov = io.provenance(_run_hash(args))
    with Staging(_out_dir(args)) as st:
        io.write_trajectory_csv(st / "trajectory.csv", frames, traj.positions, prov)
        io.write_series_csv(st / "location_index.csv", "location_index", frames, index, prov)
        (st / "plot.svg").write_text(localization_svg(traj.positions, path_pts, times, index, comment=prov))
    return 0


def _video_times(idx: np.ndarray, fps: float) -> np.ndarray:
    return np.asarray(idx, dtype=float) / fps


def cmd_template(args) -> int:
    _check_paths(args, ("index", "annotations"))
    if len(args.index) != len(args.annotations):
        raise ManifestError("need one annotation file per index file")
    q = []
    for ipath, apath in zip(args.index, args.annotations):
        idx, f = io.read_series_csv(ipath, "location_index")
        (_, times), *rest = io.read_annotations(apath)
        if rest:
            raise ManifestError(f"{apath}: expected a single video annotation")
        q.append(relative_lengths(SegmentAnnotation(tuple(times)), f, _video_times(idx, args.fps)))
    tmpl = build_template(q)
    prov = io.provenance(_run_hash(args))
    with Staging(_out_dir(args)) as st:
        io.write_template(st / "template.json", tmpl, prov)
        io._write_csv(
            st / "relative_lengths.csv",
            ("video", "cecum", "ascending", "transverse", "descending", "sigmoid", "rectum"),
            [[Path(p).parent.name or Path(p).stem, *map(float, v)] for p, v in zip(args.index, q)],
            prov,
        )
    return 0


def _load_template(spec: str) -> ColonTemplate:
    if spec == "set2":
        return ColonTemplate(SET2_TEMPLATE)
    return io.read_template(spec)


def cmd_classify(args) -> int:
    _check_paths(args, ("template",))
    tmpl = _load_template(args.template)
    sources = [s for s in (args.index, args.scopeguide, args.annotations) if s]
    if len(sources) != 1:
        raise ManifestError("give exactly one of --index, --scopeguide or --annotations (time index)")
    if args.index:
        idx, f = io.read_series_csv(args.index, "location_index")
    elif args.scopeguide:
        idx, lengths = io.read_scopeguide(args.scopeguide)
        f = scopeguide_index(lengths)
    else:
        if args.frames_count is None:
            raise ManifestError("--frames-count is required for the time index")
        (_, times), *_ = io.read_annotations(args.annotations)
        idx = np.arange(args.frames_count)
        f = time_index(_video_times(idx, args.fps), times[0], times[-1])
    labels = classify(f, tmpl)
    prov = io.provenance(_run_hash(args))
    with Staging(_out_dir(args)) as st:
        io.write_series_csv(st / "segments.csv", "segment", idx, labels.astype(int), prov)
    return 0


def _truth_labels(path: str, frames: np.ndarray, fps: float) -> np.ndarray:
    if path.endswith(".json"):
        (_, times), *_ = io.read_annotations(path)
        ann = SegmentAnnotation(tuple(times))
        t = _video_times(frames, fps)
        return np.clip(np.searchsorted(np.asarray(ann.times[1:-1]), t, side="right") + 1, 1, 6)
    tidx, lab = io.read_series_csv(path, "segment", dtype=int)
    lookup = dict(zip(tidx.tolist(), lab.tolist()))
    try:
        return np.array([lookup[int(i)] for i in frames], dtype=int)
    except KeyError as exc:
        raise ManifestError(f"{path}: no truth label for frame {exc}") from exc


def cmd_eval(args) -> int:
    _check_paths(args, ())
    report = EvalReport()
    if args.pred or args.truth:
        if len(args.pred or []) != len(args.truth or []):
            raise ManifestError("need one --truth per --pred")
        preds, truths = [], []
        for p, t in zip(args.pred, args.truth):
            idx, lab = io.read_series_csv(p, "segment", dtype=int)
            preds.append(lab)
            truths.append(_truth_labels(t, idx, args.fps))
        report = classification_report(preds, truths)
    if args.trajectory or args.gt_poses:
        if not (args.trajectory and args.gt_poses):
            raise ManifestError("trajectory evaluation needs both --trajectory and --gt-poses")
        tidx, est = io.read_trajectory_csv(args.trajectory)
        grows, gposes = io.read_pose_csv(args.gt_poses)
        gt = integrate(gposes, frame_indices=list(grows) + [grows[-1] + 1], invert_poses=True)
        pos = dict(zip(gt.frame_indices.tolist(), gt.positions))
        try:
            gt_pts = np.array([pos[int(i)] for i in tidx])
        except KeyError as exc:
            raise ManifestError(f"ground truth has no frame {exc}") from exc
        sim = umeyama_align(est, gt_pts)
        report.ate_mean, report.ate_std, _ = ate(est, gt_pts)
        if args.poses:
            _, eposes = io.read_pose_csv(args.poses)
            r = rpe(eposes, gposes[: len(eposes)], scale=sim.scale)
            for k, v in r.items():
                setattr(report, k, v)
    prov = io.provenance(_run_hash(args))
    with Staging(_out_dir(args)) as st:
        report.to_json(st / "report.json", prov)
        if report.confusion is not None:
            report.confusion_csv(st / "confusion.csv", prov)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="colonloc", description="Colonoscope localization pipeline")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, fn):
        sp.add_argument("--manifest", help="JSON file whose fields override flags")
        sp.add_argument("--out", help=f"output directory (default ${ENV_OUTPUT_ROOT}/<command>)")
        sp.set_defaults(func=fn)

    s = sub.add_parser("synth", help="render a synthetic withdrawal dataset")
    common(s, cmd_synth)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--frames-count", type=int, default=30)
    s.add_argument("--size", type=int, nargs=2, default=[64, 64], metavar=("H", "W"))
    s.add_argument("--hfov", type=float, default=100.0)
    s.add_argument("--fps", type=float, default=DEFAULT_FPS)
    s.add_argument("--length", type=float, default=30.0)
    s.add_argument("--curvature", type=float, default=0.0)
    s.add_argument("--spots", type=int, default=0)
    s.add_argument("--speed", type=float, default=0.15)
    s.add_argument("--zigzag-amplitude", type=float, default=0.0)
    s.add_argument("--zigzag-frequency", type=float, default=0.5)
    s.add_argument("--lateral", type=float, default=0.0)
    s.add_argument("--angular", type=float, default=0.0)
    s.add_argument("--scene", help="YAML with extra scene fields and an optional 'trajectory' block")

    s = sub.add_parser("undistort", help="fisheye frames to pinhole-equivalent frames")
    common(s, cmd_undistort)
    s.add_argument("--frames", help="directory of PNG frames")
    s.add_argument("--camera", help="camera YAML with fisheye coefficients")
    s.add_argument("--out-size", type=int, nargs=2, metavar=("H", "W"))

    s = sub.add_parser("filter", help="drop non-informative and biopsy frames")
    common(s, cmd_filter)
    s.add_argument("--labels", help="CSV frame_index,non_informative,biopsy")
    s.add_argument("--fps", type=float, default=DEFAULT_FPS)

    s = sub.add_parser("estimate-pose", help="direct pose optimization over frame pairs")
    common(s, cmd_estimate_pose)
    s.add_argument("--frames")
    s.add_argument("--disparity")
    s.add_argument("--disparity-scale", type=float, default=DISPARITY_SCALE)
    s.add_argument("--masks", help="directory of 'not specular' masks")
    s.add_argument("--mask-scale", type=float, default=MASK_SCALE)
    s.add_argument("--valid", help="directory of validity masks from undistort")
    s.add_argument("--camera")
    s.add_argument("--retained", help="CSV of retained frame indices")
    s.add_argument("--max-iters", type=int, default=40)
    s.add_argument("--pyramid-levels", type=int, default=3)
    s.add_argument("--gradient-mode", choices=("analytic", "finite_difference"), default="analytic")
    s.add_argument("--step-scheme", choices=("gauss_newton", "gradient"), default="gauss_newton")
    s.add_argument("--lambda-mc", type=float, default=LossWeights().mc)

    s = sub.add_parser("localize", help="trajectory, major path and location index")
    common(s, cmd_localize)
    s.add_argument("--poses", help="forward pose CSV")
    s.add_argument("--labels", help="frame labels CSV; retained frames must match the pose rows")
    s.add_argument("--retained", help="CSV of retained frame indices")
    s.add_argument("--fps", type=float, default=DEFAULT_FPS)
    s.add_argument("--gamma", type=float, default=DEFAULT_GAMMA)

    s = sub.add_parser("template", help="colon template from localized videos")
    common(s, cmd_template)
    s.add_argument("--index", nargs="+", help="location_index.csv per video")
    s.add_argument("--annotations", nargs="+", help="annotation JSON per video")
    s.add_argument("--fps", type=float, default=DEFAULT_FPS)

    s = sub.add_parser("classify", help="per-frame colon segments")
    common(s, cmd_classify)
    s.add_argument("--template", default="set2", help="template JSON or 'set2'")
    s.add_argument("--index", help="location_index.csv")
    s.add_argument("--scopeguide", help="ScopeGuide length CSV (baseline)")
    s.add_argument("--annotations", help="annotation JSON (time-index baseline)")
    s.add_argument("--frames-count", type=int)
    s.add_argument("--fps", type=float, default=DEFAULT_FPS)

    s = sub.add_parser("eval", help="classification and trajectory metrics")
    common(s, cmd_eval)
    s.add_argument("--pred", nargs="+", help="segments.csv per video")
    s.add_argument("--truth", nargs="+", help="truth segments CSV or annotation JSON per video")
    s.add_argument("--fps", type=float, default=DEFAULT_FPS)
    s.add_argument("--trajectory", help="estimated trajectory.csv")
    s.add_argument("--gt-poses", help="ground-truth pose CSV")
    s.add_argument("--poses", help="estimated pose CSV (for RPE)")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, or a usage error
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = _apply_manifest(args)
        return int(args.func(args) or 0)
    except ColonLocError as exc:
        print(f"colonloc {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


def main_entry():  # pragma: no cover
    sys.exit(main())
