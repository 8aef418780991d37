import numpy as np
import pytest

from dspose.geometry import Patch, normalize_joint, visibility
from dspose.labeling import NoValidPairs, PatchLabel, assign_label, build_training_pairs
from dspose.sampling import (
    SamplingConfig,
    coverage_histogram,
    filter_body_patches,
    filter_part_patches,
    sliding_windows,
    stub_proposals,
    torso_diameter,
)
from dspose.synth import FigureConfig, TORSO_PAIR, generate_figure


def test_torso_diameter():
    assert torso_diameter([[0, 0], [3, 4]], (0, 1)) == 5
    assert torso_diameter([[1, 1], [1, 1]], (0, 1)) == 0


def test_part_filter_examples():
    cfg = SamplingConfig()
    kept = filter_part_patches([Patch(40, 30, 0, 0), Patch(30, 30, 0, 0)], 100, cfg)
    assert kept == [Patch(40, 30, 0, 0)]


def test_part_filter_exhaustive():
    rng = np.random.default_rng(0)
    cands = [Patch(*rng.uniform(1, 150, 2), 0, 0) for _ in range(500)]
    cfg = SamplingConfig(mu1=0.1, mu2=1.0)
    kept = set(filter_part_patches(cands, 100, cfg))
    for p in cands:
        assert (p in kept) == (1000 <= p.w * p.h <= 10000)


def test_mu2_sweep_changes_coverage():
    fc = FigureConfig()
    figs = [generate_figure(fc, i)[1] for i in range(10)]
    totals = []
    for mu2 in (1.0, 1.5, 2.0):
        cfg = SamplingConfig(mu2=mu2, body_fraction=0)
        per_image = []
        for i, pose in enumerate(figs):
            d = torso_diameter(pose, TORSO_PAIR)
            per_image.append(filter_part_patches(stub_proposals((64, 64), pose, d, SamplingConfig(body_fraction=0), i), d, cfg))
        totals.append(coverage_histogram(per_image, figs).sum())
    assert totals[0] < totals[1] < totals[2]


def test_body_filter():
    pose = np.array([[2.0, 2.0], [8.0, 9.0], [5.0, 1.0]])
    full = Patch(10, 10, 5, 5)
    short = Patch(10, 6, 5, 3)  # drops the joint at y=9
    assert filter_body_patches([full, short], pose) == [full]


def test_sliding_window_counts():
    cfg = SamplingConfig(window_scales=(1.0,), stride=2)
    wins = sliding_windows((10, 10), 4, cfg)
    assert len(wins) == 16
    assert sorted({w.cx for w in wins}) == [2, 4, 6, 8]
    assert len(sliding_windows((10, 10), 4, SamplingConfig(window_scales=(1.0,), stride=10))) == 1
    two = sliding_windows((64, 48), 20, SamplingConfig(window_scales=(0.5, 1.0), stride=2))
    assert sorted({w.w for w in two}) == [10, 20]


def _starts(extent, side, stride):
    """Step a window along one axis until it reaches the far edge."""
    if side >= extent:
        return [extent / 2 - side / 2]
    out = [0.0]
    while out[-1] + side < extent - 1e-9 and out[-1] + stride < extent:
        out.append(out[-1] + stride)
    return out


@pytest.mark.parametrize("size,d,stride", [((64, 64), 18.3, 2), ((50, 70), 11.0, 3), ((33, 21), 7.5, 1.5),
                                           ((10, 10), 8.0, 2), ((12, 9), 6.0, 20)])
def test_sliding_window_grid(size, d, stride):
    cfg = SamplingConfig(stride=stride)
    wins = sliding_windows(size, d, cfg)
    expected = 0
    for s in cfg.window_scales:
        side = s * d
        expected += len(_starts(size[0], side, stride)) * len(_starts(size[1], side, stride))
        xs = sorted({w.cx - w.w / 2 for w in wins if w.w == side})
        np.testing.assert_allclose(xs, _starts(size[0], side, stride), atol=1e-9)
    assert len(wins) == expected
    assert all(w.w == w.h for w in wins)
    # windows start inside the image; the last one per axis may hang over the far edge
    assert all(0 <= w.corners[0] < size[0] and 0 <= w.corners[1] < size[1] for w in wins if w.w < min(size))


def test_stub_proposals_deterministic():
    pose = generate_figure(FigureConfig(), 3)[1]
    cfg = SamplingConfig(seed=5)
    a = stub_proposals((64, 64), pose, 18, cfg, 2)
    assert a == stub_proposals((64, 64), pose, 18, cfg, 2)
    assert a != stub_proposals((64, 64), pose, 18, cfg, 3)
    assert stub_proposals((64, 64), pose, 18, SamplingConfig(proposal_count=0)) == []
    parts = [p for p in a if p.area <= 2 * 18 * 18 * (1 + 1e-12)]
    assert all(p.area >= 0.1 * 18 * 18 * (1 - 1e-12) for p in parts)


def test_stub_coverage_at_least_one():
    fc = FigureConfig()
    cfg = SamplingConfig()
    figs = [generate_figure(fc, i)[1] for i in range(20)]
    parts = []
    for i, pose in enumerate(figs):
        d = torso_diameter(pose, TORSO_PAIR)
        parts.append(filter_part_patches(stub_proposals((64, 64), pose, d, cfg, i), d, cfg))
    cov = coverage_histogram(parts, figs)
    assert cov.mean() >= 1
    assert cov.min() > 0.25 * cov.max()  # roughly balanced


def test_coverage_single_and_tie():
    pose = np.array([[0.0, 0.0], [100.0, 100.0], [10.0, 10.0], [50.0, 50.0]])
    cov = coverage_histogram([[Patch(4, 4, 10, 10)]], [pose])
    np.testing.assert_array_equal(cov, [0, 0, 1, 0])
    tie = np.array([[4.0, 5.0], [6.0, 5.0], [50.0, 50.0]])
    np.testing.assert_array_equal(coverage_histogram([[Patch(4, 4, 5, 5)]], [tie]), [1, 0, 0])


def _label_oracle(part, pose):
    """Enumerate visible joints and keep the first with minimal squared norm."""
    best, best_d = 0, None
    for i, j in enumerate(pose):
        x, y = (j[0] - part.cx) / part.w, (j[1] - part.cy) / part.h
        if abs(x) <= 0.5 and abs(y) <= 0.5:
            d = x * x + y * y
            if best_d is None or d < best_d:
                best, best_d = i + 1, d
    return best


def test_label_examples():
    part = Patch(10, 10, 0, 0)
    assert assign_label(part, np.array([[20.0, 0.0]])) == PatchLabel(0)
    assert assign_label(part, np.array([[20.0, 0.0], [0.0, 0.0]])) == PatchLabel(2, (0.0, 0.0))
    lab = assign_label(part, np.array([[4.0, 0.0], [2.0, 0.0]]))
    assert lab.joint == 2 and lab.target == (0.2, 0.0)


def test_label_matches_enumeration():
    rng = np.random.default_rng(3)
    for _ in range(500):
        pose = rng.uniform(0, 20, (6, 2))
        part = Patch(*rng.uniform(2, 12, 2), *rng.uniform(0, 20, 2))
        lab = assign_label(part, pose)
        assert lab.joint == _label_oracle(part, pose)
        if lab.joint:
            np.testing.assert_allclose(lab.target, normalize_joint(pose[lab.joint - 1], part))


def test_label_scale_invariant():
    rng = np.random.default_rng(4)
    for _ in range(100):
        pose = rng.uniform(0, 20, (5, 2))
        part = Patch(8, 8, *rng.uniform(0, 20, 2))
        s = rng.uniform(0.5, 3)
        scaled = Patch(8 * s, 8 * s, part.cx * s, part.cy * s)
        a, b = assign_label(part, pose), assign_label(scaled, pose * s)
        assert a.joint == b.joint
        if a.joint:
            np.testing.assert_allclose(a.target, b.target, atol=1e-12)


def test_training_pairs():
    pose = np.array([[5.0, 5.0], [15.0, 15.0]])
    part, body = Patch(4, 4, 5, 5), Patch(20, 20, 10, 10)
    pairs = build_training_pairs([part], [body], pose, seed=0)
    assert len(pairs) == 1 and pairs[0][0].part == part and pairs[0][1].joint == 1
    parts = [Patch(4, 4, x, 10) for x in range(2, 18, 2)]
    bodies = [body, Patch(18, 18, 9, 9)]
    assert build_training_pairs(parts, bodies, pose, 7) == build_training_pairs(parts, bodies, pose, 7)
    with pytest.raises(NoValidPairs):
        build_training_pairs([Patch(2, 2, 100, 100)], [body], pose, 0)


def test_label_after_crop():
    # part centered at x=10 sits between joints at x=7 (joint 1) and x=12 (joint 2);
    # uncropped, joint 2 is closest; cropping at x=11 moves the center to 8
    pose = np.array([[7.0, 5.0], [12.0, 5.0]])
    part = Patch(10, 4, 10, 5)
    body = Patch.from_corners(0, 0, 11, 10)
    assert assign_label(part, pose).joint == 2
    (pair, label), = build_training_pairs([part], [body], pose, 0)
    assert pair.part.w == pair.part.h
    assert label.joint == 1
    assert visibility(pose, pair.part)[0] == 1
