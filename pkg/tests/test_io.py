import numpy as np
import pytest

from colonloc import io
from colonloc.camera_model import FisheyePolynomial, PinholeIntrinsics
from colonloc.colon_template import SET2_TEMPLATE, ColonTemplate
from colonloc.errors import ManifestError
from colonloc.se3 import Pose6DoF


def test_pose_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    poses = [Pose6DoF.from_array(rng.normal(size=6)) for _ in range(5)]
    p = tmp_path / "p.csv"
    io.write_pose_csv(p, [3, 4, 5, 7, 8], poses, io.provenance("abc"))
    text = p.read_text().splitlines()
    assert text[0] == "# colonloc 0.1.0 manifest_sha256=abc"
    assert text[1] == ",".join(io.POSE_COLUMNS)
    idx, back = io.read_pose_csv(p)
    assert idx == [3, 4, 5, 7, 8]
    for a, b in zip(poses, back):
        np.testing.assert_allclose(a.as_array(), b.as_array(), rtol=1e-8)


def test_fmt_has_no_negative_zero():
    assert io.fmt(-0.0) == "0"
    assert io.fmt(1 / 3) == "0.333333333"


def test_missing_file_and_columns(tmp_path):
    with pytest.raises(ManifestError):
        io.read_pose_csv(tmp_path / "nope.csv")
    (tmp_path / "bad.csv").write_text("frame_index,tx\n0,1\n")
    with pytest.raises(ManifestError):
        io.read_pose_csv(tmp_path / "bad.csv")


def test_frames_and_scalar_rasters(tmp_path):
    rng = np.random.default_rng(1)
    img = rng.uniform(0, 1, (6, 7, 3))
    io.write_frame(tmp_path / "f.png", img)
    np.testing.assert_allclose(io.read_frame(tmp_path / "f.png"), img, atol=0.5 / 255 + 1e-12)
    g = rng.uniform(0, 1, (6, 7))
    io.write_frame(tmp_path / "g.png", g, bits=16)
    np.testing.assert_allclose(io.read_frame(tmp_path / "g.png"), g, atol=0.5 / 65535 + 1e-12)
    d = rng.uniform(0.1, 10, (6, 7))
    io.write_scalar_png(tmp_path / "d.png", d, 6553.5)
    np.testing.assert_allclose(io.read_scalar_png(tmp_path / "d.png", 6553.5), d, atol=0.5 / 6553.5 + 1e-12)


def test_flow_roundtrip(tmp_path):
    f = np.random.default_rng(2).normal(size=(4, 5, 2)).astype(np.float32)
    io.write_flo(tmp_path / "a.flo", f)
    np.testing.assert_array_equal(io.read_flo(tmp_path / "a.flo"), f)
    (tmp_path / "b.flo").write_bytes(b"XXXX")
    with pytest.raises(ManifestError):
        io.read_flo(tmp_path / "b.flo")


def test_camera_config_roundtrip(tmp_path):
    K = PinholeIntrinsics(300.0, 310.0, 160.0, 120.0, 0.5)
    fish = FisheyePolynomial((300.0, 0.0, -1e-4), 160.0, 120.0, 400.0, 170.0, 125.0)
    io.save_camera_config(tmp_path / "c.yaml", K, fish, (240, 320))
    K2, f2, size = io.load_camera_config(tmp_path / "c.yaml")
    assert K2 == K and size == (240, 320)
    assert f2.coeffs == fish.coeffs and (f2.out_cx, f2.out_cy) == (170.0, 125.0)
    (tmp_path / "bad.yaml").write_text("fx: 1\n")
    with pytest.raises(ManifestError):
        io.load_camera_config(tmp_path / "bad.yaml")


def test_annotations_labels_template(tmp_path):
    io.write_annotations(tmp_path / "a.json", [("v1", [0, 1, 2, 3, 4, 5, 6])])
    assert io.read_annotations(tmp_path / "a.json") == [("v1", [0.0, 1, 2, 3, 4, 5, 6])]
    io.write_annotations(tmp_path / "b.json", [("v1", [0] * 7), ("v2", [1] * 7)])
    assert [v for v, _ in io.read_annotations(tmp_path / "b.json")] == ["v1", "v2"]
    io.write_frame_labels(tmp_path / "l.csv", [0, 1, 0], [0, 0, 1])
    idx, ni, bx = io.read_frame_labels(tmp_path / "l.csv")
    assert idx.tolist() == [0, 1, 2] and ni.tolist() == [False, True, False] and bx.tolist() == [False, False, True]
    io.write_template(tmp_path / "t.json", ColonTemplate(SET2_TEMPLATE), "# p")
    assert io.read_template(tmp_path / "t.json").fractions == SET2_TEMPLATE


def test_series_and_trajectory(tmp_path):
    io.write_series_csv(tmp_path / "s.csv", "segment", [0, 2], np.array([1, 6]))
    idx, v = io.read_series_csv(tmp_path / "s.csv", "segment", dtype=int)
    assert idx.tolist() == [0, 2] and v.tolist() == [1, 6]
    pos = np.arange(9.0).reshape(3, 3) / 7
    io.write_trajectory_csv(tmp_path / "t.csv", [0, 1, 2], pos)
    _, back = io.read_trajectory_csv(tmp_path / "t.csv")
    np.testing.assert_allclose(back, pos, rtol=1e-8)


def test_hash_json_is_order_independent():
    assert io.hash_json({"a": 1, "b": [1, 2]}) == io.hash_json({"b": [1, 2], "a": 1})
