import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from colonloc.camera_model import SENTINEL, PinholeIntrinsics
from colonloc.errors import DegenerateError, DomainError
from colonloc.se3 import Pose6DoF, invert, pose_to_transform, transform_to_pose
from colonloc.synthetic import perturb_camera, random_camera, relative_pose, render
from colonloc.warping import (
    FramePair,
    LossWeights,
    combine_losses,
    consistency_loss,
    corrected_photometric_loss,
    final_loss,
    mask_cross_entropy_loss,
    pair_cpe,
    photometric_loss,
    smoothness_loss,
    threshold_specular_mask,
    warp_frame,
)

ZERO = Pose6DoF.from_array(np.zeros(6))
K = PinholeIntrinsics(50.0, 50.0, 15.5, 11.5)


def test_zero_pose_warp_is_identity(rng):
    img = rng.uniform(0, 1, (24, 32, 3))
    out, outside = warp_frame(img, rng.uniform(0.1, 5, (24, 32)), ZERO, K)
    np.testing.assert_array_equal(out, img)
    assert not outside.any()


def test_translation_on_plane_is_uniform_shift():
    H, W = 24, 32
    x = np.arange(W, dtype=float)
    img = np.tile(0.1 + 0.02 * x, (H, 1))
    Z, tx = 4.0, 0.2
    shift = K.fx * tx / Z  # 2.5 px
    out, outside = warp_frame(img, np.full((H, W), 1.0 / Z), Pose6DoF.from_array([tx, 0, 0, 0, 0, 0]), K)
    ok = outside == 0
    assert ok.sum() == H * (W - 3)
    np.testing.assert_allclose(out[ok], (0.1 + 0.02 * (np.tile(x, (H, 1)) - shift))[ok], atol=1e-12)


def test_large_translation_is_all_out_of_frame(rng):
    img = rng.uniform(0, 1, (10, 12))
    out, outside = warp_frame(img, np.ones((10, 12)), Pose6DoF.from_array([50, 0, 0, 0, 0, 0]), K)
    assert np.all(out == SENTINEL) and np.all(outside == 1)


def test_threshold_masks():
    red = np.zeros((4, 6, 3))
    red[..., 0] = 1.0
    np.testing.assert_array_equal(threshold_specular_mask(red), 1.0)
    np.testing.assert_array_equal(threshold_specular_mask(np.ones((4, 6, 3))), 0.0)
    half = red.copy()
    half[:, 3:] = 1.0
    m = threshold_specular_mask(half, 0.1)
    np.testing.assert_array_equal(m[:, :3], 1.0)
    np.testing.assert_array_equal(m[:, 3:], 0.0)


def test_photometric_examples(rng):
    a = rng.uniform(0, 1, (5, 5, 3))
    b = rng.uniform(0, 1, (5, 5, 3))
    assert photometric_loss(a, b, a, b) == 0.0
    c0, c1 = np.full((4, 4), 0.2), np.full((4, 4), 0.7)
    assert photometric_loss(c0, c0, c1, c1) == pytest.approx(0.5, abs=1e-15)
    assert photometric_loss(a, b, b, a) == pytest.approx(photometric_loss(b, a, a, b), abs=1e-15)


def _random_inputs(rng, shape=(6, 7, 3)):
    H, W = shape[:2]
    fr = [rng.uniform(0, 1, shape) for _ in range(4)]
    return fr, H, W


def test_corrected_equals_photometric_with_unit_masks(rng):
    (a, b, c, d), H, W = _random_inputs(rng)
    ones = np.ones((H, W))
    cp = corrected_photometric_loss(a, b, c, d, ones, ones, ones, ones, ones, ones)
    assert abs(cp - photometric_loss(a, b, c, d)) < 1e-12


def test_corrected_zero_specular_masks(rng):
    (a, b, c, d), H, W = _random_inputs(rng)
    z, o = np.zeros((H, W)), np.ones((H, W))
    assert corrected_photometric_loss(a, b, c, d, z, z, z, z, o, o) == 0.0


def test_corrected_single_pixel_hand_value():
    v = lambda x: np.array([[x]])
    cp = corrected_photometric_loss(v(0.8), v(0.3), v(0.5), v(0.6), v(0.9), v(0.5), v(0.7), v(0.4), v(1.0), v(1.0))
    # (0.9*0.8 - 0.7*0.5)^2 + (0.5*0.3 - 0.4*0.6)^2
    assert cp == pytest.approx(0.145, abs=1e-15)


@given(st.integers(0, 2**31 - 1))
def test_corrected_not_above_photometric_with_shared_masks(seed):
    rng = np.random.default_rng(seed)
    (a, b, c, d), H, W = _random_inputs(rng)
    m0, m1 = rng.uniform(0, 1, (H, W)), rng.uniform(0, 1, (H, W))
    v0, v1 = (rng.uniform(size=(H, W)) > 0.3).astype(float), (rng.uniform(size=(H, W)) > 0.3).astype(float)
    cp = corrected_photometric_loss(a, b, c, d, m0, m1, m0, m1, v0, v1)
    gated = photometric_loss(a * v0[..., None], b * v1[..., None], c * v0[..., None], d * v1[..., None])
    assert cp <= gated + 1e-15


def test_cross_entropy_examples():
    P = (np.random.default_rng(3).uniform(size=(8, 8)) > 0.5).astype(float)
    eps_bound = 2 * -np.log(1 - 1e-7)
    assert mask_cross_entropy_loss(P, P, P, P) <= eps_bound + 1e-15
    half = np.full((8, 8), 0.5)
    assert mask_cross_entropy_loss(half, half, P, P) == pytest.approx(2 * np.log(2), abs=1e-12)
    ones = np.ones((3, 3))
    vals = [mask_cross_entropy_loss(np.full((3, 3), p), ones, ones, ones) for p in (0.5, 0.7, 0.9)]
    # -ln p for the first frame, ~0 for the second
    np.testing.assert_allclose(vals, [0.6931471806, 0.3566749439, 0.1053605157], atol=1e-6)
    assert vals[0] > vals[1] > vals[2]


def test_consistency_examples():
    p = Pose6DoF.from_array([0.1, -0.2, 0.3, 0.05, -0.1, 0.2])
    inv = transform_to_pose(invert(pose_to_transform(p)))
    assert consistency_loss(p, inv) < 1e-12
    assert consistency_loss(ZERO, ZERO) == 0.0
    assert consistency_loss(Pose6DoF.from_array([1, 0, 0, 0, 0, 0]), ZERO) == pytest.approx(1.0, abs=1e-15)


@given(st.tuples(*[st.floats(-0.2, 0.2)] * 6))
def test_consistency_of_analytic_inverse(v):
    p = Pose6DoF.from_array(v)
    assert consistency_loss(p, transform_to_pose(invert(pose_to_transform(p)))) < 1e-10


def test_smoothness_examples():
    assert smoothness_loss(np.full((5, 5), 2.0)) == 0.0
    # mean 1.5 -> normalized [[2/3, 4/3]]*2; horizontal step 2/3, vertical 0
    assert smoothness_loss(np.array([[1.0, 2.0], [1.0, 2.0]])) == pytest.approx(2.0 / 3.0, abs=1e-15)
    with pytest.raises(DegenerateError):
        smoothness_loss(np.ones((1, 4)))


@given(st.floats(0.01, 100.0), st.integers(0, 1000))
def test_smoothness_scale_invariant(s, seed):
    d = np.random.default_rng(seed).uniform(0.1, 5.0, (6, 6))
    assert smoothness_loss(d * s) == pytest.approx(smoothness_loss(d), rel=1e-12)


def test_combine_examples():
    assert combine_losses(1, 2, 3, 4).total == pytest.approx(301.10, abs=1e-12)
    assert combine_losses(1.5, 2, 3, 4, LossWeights(0, 0, 0)).total == 1.5
    w = LossWeights()
    assert (w.ce, w.mc, w.smo) == (0.01, 100.0, 0.02)
    with pytest.raises(DomainError):
        LossWeights(ce=-1)


def test_final_loss_breakdown(rng):
    shape = (12, 12, 3)
    pair = FramePair(rng.uniform(0, 1, shape), rng.uniform(0, 1, shape), np.full((12, 12), 0.5), np.full((12, 12), 0.5))
    br = final_loss(pair, ZERO, ZERO, K, LossWeights(0, 0, 0))
    assert br.total == br.cp and br.smo == 0.0 and br.mc == 0.0


def test_cpe_identical_frames_and_known_motion(tube, K64):
    rng = np.random.default_rng(4)
    img = rng.uniform(0.2, 0.8, (16, 16, 3))
    same = FramePair(img, img, np.ones((16, 16)), np.ones((16, 16)))
    assert pair_cpe(same, ZERO, ZERO, K64) == 0.0
    c0 = random_camera(tube, rng, (5, 15))
    c1 = perturb_camera(c0, rng, 0.02, np.radians(2), min_translation=0.015)
    r0, r1 = render(tube, c0, K64, (64, 64)), render(tube, c1, K64, (64, 64))
    pair = FramePair(r0.frame, r1.frame, r0.disparity, r1.disparity)
    fwd = relative_pose(c0, c1)
    bwd = relative_pose(c1, c0)
    assert pair_cpe(pair, fwd, bwd, K64) < pair_cpe(pair, ZERO, ZERO, K64)
