import json
from collections import deque

import numpy as np
import pytest

from dspose.dataset import (
    MalformedManifest,
    MissingImage,
    load_dataset,
    load_manifest,
    lsp_manifest,
    read_image,
    read_pnm,
    save_dataset,
    synthesize,
    write_image,
    write_pgm16,
)
from dspose.synth import BONES, J, JOINT_NAMES, TORSO_PAIR, FigureConfig, FigureParams, forward_kinematics, generate_figure


def test_generator_deterministic():
    cfg = FigureConfig(seed=3)
    a, pa = generate_figure(cfg, 7)
    b, pb = generate_figure(cfg, 7)
    assert a.tobytes() == b.tobytes() and np.array_equal(pa, pb)
    c, _ = generate_figure(cfg, 8)
    assert a.tobytes() != c.tobytes()
    assert a.dtype == np.uint8 and a.shape == (64, 64, 3)


def test_forward_kinematics_hand_values():
    cfg = FigureConfig(noise_amplitude=0)
    straight = FigureParams((32.0, 40.0), 1.0, 0.0, 0.0, (0, 0), (0, 0), (0, 0), (0, 0))
    _, pose = generate_figure(cfg, 0, params=straight)
    want = {
        "neck": (32, 24), "head_top": (32, 17),
        "l_shoulder": (37, 24), "l_elbow": (37, 33), "l_wrist": (37, 41),
        "r_shoulder": (27, 24), "r_elbow": (27, 33), "r_wrist": (27, 41),
        "l_hip": (35.5, 40), "l_knee": (35.5, 51), "l_ankle": (35.5, 61),
        "r_hip": (28.5, 40), "r_knee": (28.5, 51), "r_ankle": (28.5, 61),
    }
    for name, xy in want.items():
        np.testing.assert_allclose(pose[J[name]], xy, atol=1e-9)
    # lying on its side, left arm raised to horizontal and elbow bent back a right angle
    side = FigureParams((20.0, 30.0), 2.0, np.pi / 2, 0.0, (0, 0), (np.pi / 2, np.pi / 2), (0, 0), (0, 0))
    pose = forward_kinematics(cfg, side)
    np.testing.assert_allclose(pose[J["neck"]], (52, 30), atol=1e-9)
    np.testing.assert_allclose(pose[J["l_shoulder"]], (52, 40), atol=1e-9)
    # the arm follows the body's left axis (+y here); the bend turns it toward the head (+x)
    np.testing.assert_allclose(pose[J["l_elbow"]], (52, 58), atol=1e-9)
    np.testing.assert_allclose(pose[J["l_wrist"]], (68, 58), atol=1e-9)
    np.testing.assert_allclose(pose[J["l_hip"]], (20, 37), atol=1e-9)
    np.testing.assert_allclose(pose[J["l_knee"]], (-2, 37), atol=1e-9)


def test_joints_inside_image():
    cfg = FigureConfig()
    w, h = cfg.image_size
    for i in range(1000):
        _, pose = generate_figure(cfg, i)
        assert np.all(pose >= 0) and np.all(pose[:, 0] <= w) and np.all(pose[:, 1] <= h)


def test_skeleton_is_connected_tree():
    seen, queue = {J["neck"]}, deque([J["neck"]])
    while queue:
        a = queue.popleft()
        for x, y in BONES:
            for u, v in ((x, y), (y, x)):
                if u == a and v not in seen:
                    seen.add(v)
                    queue.append(v)
    assert len(seen) == len(JOINT_NAMES) and len(BONES) == len(JOINT_NAMES) - 1


def test_bone_lengths_follow_scale():
    cfg = FigureConfig()
    for i in range(20):
        _, pose = generate_figure(cfg, i)
        head = np.linalg.norm(pose[J["head_top"]] - pose[J["neck"]])
        shin = np.linalg.norm(pose[J["l_ankle"]] - pose[J["l_knee"]])
        assert shin / head == pytest.approx(cfg.shin / cfg.head, rel=1e-9)


def test_save_load_round_trip(tmp_path):
    manifest, images = synthesize(FigureConfig(), 3)
    save_dataset(tmp_path, manifest, images)
    back, imgs, poses = load_dataset(tmp_path)
    for k in range(3):
        assert np.array_equal(poses[k], manifest.pose(k))
        assert np.array_equal(imgs[k], images[k])
    assert back.d_ratio == manifest.d_ratio and back.torso_pair == TORSO_PAIR


def test_ppm_round_trip(tmp_path):
    manifest, images = synthesize(FigureConfig(), 2, fmt="ppm")
    save_dataset(tmp_path, manifest, images)
    _, imgs, _ = load_dataset(tmp_path / "manifest.json")
    assert all(np.array_equal(a, b) for a, b in zip(imgs, images))
    vals = np.array([[0, 1], [65535, 300]], np.uint16)
    write_pgm16(tmp_path / "x.pgm", vals)
    assert np.array_equal(read_pnm(tmp_path / "x.pgm"), vals)


def test_missing_image_names_file(tmp_path):
    manifest, images = synthesize(FigureConfig(), 2)
    save_dataset(tmp_path, manifest, images)
    (tmp_path / "img_00001.png").unlink()
    with pytest.raises(MissingImage, match="img_00001.png"):
        load_dataset(tmp_path)


@pytest.mark.parametrize("edit", [
    lambda d: d.pop("joint_names"),
    lambda d: d["records"][0]["joints"].pop(),
    lambda d: d.__setitem__("torso_pair", [0, 99]),
    lambda d: d["records"][0]["joints"][0].__setitem__(0, float("nan")),
])
def test_malformed_manifest(tmp_path, edit):
    manifest, _ = synthesize(FigureConfig(), 1)
    d = manifest.to_dict()
    edit(d)
    (tmp_path / "manifest.json").write_text(json.dumps(d))
    with pytest.raises(MalformedManifest):
        load_manifest(tmp_path)


def test_lsp_manifest():
    m = lsp_manifest()
    assert m.n_joints == 14
    assert [m.joint_names[i] for i in m.torso_pair] == ["l_shoulder", "r_hip"]
    assert {"elbows", "wrists"} <= set(m.joint_groups)


def test_png_via_pillow(tmp_path):
    img = np.random.default_rng(0).integers(0, 256, (5, 7, 3), dtype=np.uint8)
    write_image(tmp_path / "a.png", img)
    assert np.array_equal(read_image(tmp_path / "a.png"), img)
