import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from colonloc.colon_template import (
    SET2_TEMPLATE,
    ColonTemplate,
    SegmentAnnotation,
    SegmentLabel,
    annotation_from_labels,
    build_template,
    classify,
    filter_frames,
    relative_lengths,
    scopeguide_index,
    time_index,
    time_index_baseline,
)
from colonloc.errors import DegenerateError, DomainError

fractions = st.lists(st.floats(0.02, 1.0), min_size=6, max_size=6).map(lambda v: tuple(np.asarray(v) / np.sum(v)))


def test_filter_examples():
    n = 300
    np.testing.assert_array_equal(filter_frames([False] * n, [False] * n, 30), np.arange(n))
    bx = np.zeros(n, bool)
    bx[100] = True
    keep = filter_frames(np.zeros(n, bool), bx, 30)
    assert set(range(n)) - set(keep.tolist()) == set(range(70, 131))
    with pytest.raises(DegenerateError):
        filter_frames([True] * 5, [False] * 5, 30)


def test_relative_lengths_examples():
    t = np.linspace(0, 60, 601)
    f = t / 60
    eq = SegmentAnnotation(tuple(np.linspace(0, 60, 7)))
    np.testing.assert_allclose(relative_lengths(eq, f, t), 1 / 6, atol=1e-12)
    ann = SegmentAnnotation(tuple(60 * np.array([0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0])))
    np.testing.assert_allclose(relative_lengths(ann, f, t), [0.1, 0.2, 0.2, 0.2, 0.2, 0.1], atol=1e-12)


@given(st.integers(0, 2**31 - 1))
def test_relative_lengths_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    t = np.arange(200) / 10.0
    f = np.cumsum(rng.uniform(0, 1, 200))
    f = (f - f[0]) / (f[-1] - f[0])
    ann = SegmentAnnotation(tuple(np.sort(rng.choice(t, 7, replace=False))))
    q = relative_lengths(ann, f, t)
    assert q.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(q >= 0)


def test_relative_lengths_clamps_backwards_index(caplog):
    t = np.arange(7.0)
    f = np.array([0, 0.3, 0.2, 0.5, 0.7, 0.9, 1.0])
    q = relative_lengths(SegmentAnnotation(tuple(t)), f, t)
    assert q[1] == 0.0 and q.sum() == pytest.approx(1.0)
    assert "clamping" in caplog.text


def test_nearest_frame_tie_goes_to_earlier():
    t = np.array([0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0])
    f = np.linspace(0, 1, 8)
    ann = SegmentAnnotation((0.0, 1.5, 2.5, 3.5, 4.5, 5.5, 7.0))
    q = relative_lengths(ann, f, t)
    np.testing.assert_allclose(q * 7, [1, 1, 1, 1, 1, 2], atol=1e-12)


def test_build_template_examples():
    q = [0.1, 0.2, 0.2, 0.2, 0.2, 0.1]
    np.testing.assert_allclose(build_template([q]).fractions, q, atol=1e-15)
    two = build_template([q, [0.2, 0.1, 0.2, 0.2, 0.2, 0.1]])
    np.testing.assert_allclose(two.fractions, [0.15, 0.15, 0.2, 0.2, 0.2, 0.1], atol=1e-15)
    tpl = ColonTemplate(SET2_TEMPLATE)
    assert min(tpl.fractions) > 0 and sum(tpl.fractions) == pytest.approx(1.0)


def test_template_validation():
    with pytest.raises(DomainError):
        ColonTemplate((0.5, 0.5))
    with pytest.raises(DomainError):
        ColonTemplate((0.0, 0.2, 0.2, 0.2, 0.2, 0.2))
    with pytest.raises(DomainError):
        ColonTemplate((0.2,) * 6)
    with pytest.raises(DomainError):
        SegmentAnnotation((0, 1, 2, 2, 3, 4, 5))


def test_classify_examples():
    tpl = ColonTemplate(SET2_TEMPLATE)
    np.testing.assert_allclose(tpl.boundaries[1:], [0.061, 0.207, 0.431, 0.654, 0.912, 1.0], atol=1e-12)
    lab = classify([0.0, 1.0, 0.5], tpl)
    assert lab.tolist() == [SegmentLabel.CECUM, SegmentLabel.RECTUM, SegmentLabel.DESCENDING]
    assert classify([0.49], ColonTemplate.uniform()).tolist() == [SegmentLabel.TRANSVERSE]
    # half-open intervals: a boundary belongs to the next segment
    assert classify([0.061, 0.0609], tpl).tolist() == [2, 1]


def test_set2_ramp_proportions_within_one_frame():
    n = 1000
    lab = classify(np.linspace(0, 1, n), ColonTemplate(SET2_TEMPLATE))
    counts = np.bincount(lab, minlength=7)[1:]
    assert np.all(np.abs(counts - np.array(SET2_TEMPLATE) * n) <= 1.0 + 1e-9)


@given(fractions, st.lists(st.floats(0, 1), min_size=2, max_size=200))
def test_classify_partition_and_order(fr, xs):
    tpl = ColonTemplate(fr)
    x = np.sort(np.asarray(xs))
    lab = classify(x, tpl)
    assert np.all((lab >= 1) & (lab <= 6))
    assert np.all(np.diff(lab) >= 0)


@given(fractions, st.integers(0, 2**31 - 1))
def test_self_consistency(fr, seed):
    rng = np.random.default_rng(seed)
    n = 400
    t = np.arange(n) / 15.0
    f = np.cumsum(rng.uniform(0.2, 1.0, n))
    f = (f - f[0]) / (f[-1] - f[0])
    tpl = ColonTemplate(fr)
    lab = classify(f, tpl)
    try:
        ann = annotation_from_labels(lab, t)
    except DegenerateError:
        return  # a segment received no frames at this resolution
    rebuilt = build_template([relative_lengths(ann, f, t)])
    assert np.mean(classify(f, rebuilt) == lab) == 1.0


def test_time_baseline_examples():
    ann = SegmentAnnotation((0, 10, 20, 30, 40, 50, 60))
    tpl, idx = time_index_baseline(ann, [0, 30, 60])
    np.testing.assert_allclose(tpl.fractions, 1 / 6, atol=1e-15)
    np.testing.assert_allclose(idx, [0, 0.5, 1])
    tpl, _ = time_index_baseline(SegmentAnnotation((0, 5, 15, 30, 40, 55, 60)), [0])
    np.testing.assert_allclose(tpl.fractions, [1 / 12, 1 / 6, 1 / 4, 1 / 6, 1 / 4, 1 / 12], atol=1e-15)
    np.testing.assert_allclose(time_index([5, 10, 20], 10, 20), [0, 0, 1])


def test_scopeguide_examples():
    np.testing.assert_allclose(scopeguide_index([100, 80, 90, 60, 20]), [0, 0.25, 0.125, 0.5, 1])
    np.testing.assert_allclose(scopeguide_index(np.linspace(120, 20, 11)), np.linspace(0, 1, 11), atol=1e-15)
    with pytest.raises(DegenerateError):
        scopeguide_index([50, 60, 50])
