"""Heatmap voting, patch selection and localization fusion over sliding windows."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import Patch, denormalize_joint, mask_in_body, rasterize, resample_patch
from .network import forward
from .sampling import sliding_windows


@dataclass(frozen=True)
class InferenceConfig:
    k: int = 3
    lambda_h: float = 0.9
    # when True, patches whose background likelihood beats every joint cast no vote
    skip_background_votes: bool = False
    batch_size: int = 256

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0 < self.lambda_h <= 1:
            raise ValueError("lambda_h must lie in (0, 1]")


@dataclass
class Estimate:
    pose: np.ndarray
    heatmaps: np.ndarray
    selected: list
    windows: list
    likelihoods: np.ndarray
    locations: np.ndarray

    def to_json(self):
        return {
            "joints": self.pose.tolist(),
            "selected": [len(s) for s in self.selected],
        }


def vote_joint(likelihoods, skip_background=False):
    """0-based joint that receives this patch's heat, or -1 for none.

    The argmax runs over the joint likelihoods only; ties go to the lowest index.
    """
    lik = np.asarray(likelihoods)
    i = int(np.argmax(lik[1:]))
    if skip_background and lik[0] >= lik[1 + i]:
        return -1
    return i


def allocate_heat(patch, likelihoods, image_size, skip_background=False):
    """Heat this patch adds: ``(joint, row_slice, col_slice, value_per_pixel)``.

    The voted joint's likelihood is spread evenly over the patch's pixels;
    dividing by the rasterized pixel count keeps total mass equal to it.
    """
    i = vote_joint(likelihoods, skip_background)
    rows, cols = rasterize(patch, image_size)
    if i < 0:
        return i, rows, cols, 0.0
    count = (rows.stop - rows.start) * (cols.stop - cols.start)
    return i, rows, cols, float(likelihoods[1 + i]) / count


def build_heatmaps(windows, likelihoods, image_size, n_joints, skip_background=False):
    """Per-joint ``(L, H, W)`` sum of every patch's allocated heat."""
    width, height = image_size
    heat = np.zeros((n_joints, height, width))
    for patch, lik in zip(windows, likelihoods):
        i, rows, cols, value = allocate_heat(patch, lik, image_size, skip_background)
        if i >= 0:
            heat[i, rows, cols] += value
    return heat


def _rank_ok(lik, i, k):
    # fewer than k other joints at or above joint i's likelihood
    joints = lik[1:]
    return int(np.sum(joints >= joints[i])) - 1 < k


def select_patches_for_joint(i, windows, likelihoods, heatmaps, cfg, body=None):
    """Indices of patches used to localize 0-based joint ``i``.

    A patch is kept when (1) background likelihood is below joint i's,
    (2) joint i ranks among the top ``k`` joints, and (3) the maximum
    heat for joint i inside the patch exceeds ``lambda_h`` times the maximum
    inside the body patch (the whole image when ``body`` is None).
    """
    heat = heatmaps[i]
    height, width = heat.shape
    if body is None:
        body_max = heat.max()
    else:
        rows, cols = rasterize(body, (width, height))
        body_max = heat[rows, cols].max()
    chosen = []
    for n, (patch, lik) in enumerate(zip(windows, likelihoods)):
        if not lik[0] < lik[1 + i]:
            continue
        if not _rank_ok(lik, i, cfg.k):
            continue
        rows, cols = rasterize(patch, (width, height))
        if heat[rows, cols].max() > cfg.lambda_h * body_max:
            chosen.append(n)
    return chosen


def fuse_joint_location(i, selected, windows, likelihoods, locations):
    """Likelihood-weighted mean of the selected patches' predictions, in image pixels."""
    pts = np.array([denormalize_joint(locations[n][i], windows[n]) for n in selected])
    w = np.array([likelihoods[n][1 + i] for n in selected])
    return (w[:, None] * pts).sum(axis=0) / w.sum()


def heatmap_peak(heat):
    r, c = np.unravel_index(int(np.argmax(heat)), heat.shape)
    return np.array([c + 0.5, r + 0.5])


def combine_outputs(windows, likelihoods, locations, image_size, cfg, body=None):
    """Heatmaps, selection and fusion for a set of patch-pair outputs."""
    likelihoods = np.asarray(likelihoods, dtype=np.float64)
    locations = np.asarray(locations, dtype=np.float64)
    n_joints = likelihoods.shape[1] - 1
    heat = build_heatmaps(windows, likelihoods, image_size, n_joints, cfg.skip_background_votes)
    pose = np.zeros((n_joints, 2))
    selected = []
    for i in range(n_joints):
        chosen = select_patches_for_joint(i, windows, likelihoods, heat, cfg, body)
        selected.append(chosen)
        if chosen:
            pose[i] = fuse_joint_location(i, chosen, windows, likelihoods, locations)
        else:
            pose[i] = heatmap_peak(heat[i])
    return Estimate(pose, heat, selected, list(windows), likelihoods, locations)


def window_inputs(image, windows, input_size, dtype=np.float64):
    """Part blocks for each window and body blocks for the whole image."""
    height, width = image.shape[:2]
    body = Patch(max(width, height), max(width, height), width / 2, height / 2)
    body_rgb = resample_patch(image, body, input_size)
    part = np.empty((len(windows), input_size, input_size, 3), dtype=dtype)
    full = np.empty((len(windows), input_size, input_size, 4), dtype=dtype)
    full[..., :3] = body_rgb
    for n, w in enumerate(windows):
        part[n] = resample_patch(image, w, input_size)
        full[n, ..., 3] = mask_in_body(w, body, input_size)
    return part, full


def run_network(params, spec, image, windows, batch_size=256):
    dtype = params["det.W"].dtype
    liks, locs = [], []
    for s in range(0, len(windows), batch_size):
        part, body = window_inputs(image, windows[s:s + batch_size], spec.input_size, dtype)
        out = forward(params, spec, part, body)
        liks.append(out.likelihoods)
        locs.append(out.locations)
    return np.concatenate(liks), np.concatenate(locs)


def estimate_pose(image, params, spec, d, sampling, cfg):
    """Full pipeline on one image with the whole image as the body patch.

    ``image`` is float in [0, 1] or uint8; ``d`` is the torso-diameter estimate
    that sets the window sizes.
    """
    image = np.asarray(image)
    if image.dtype == np.uint8:
        image = image / 255.0
    height, width = image.shape[:2]
    windows = sliding_windows((width, height), d, sampling)
    lik, loc = run_network(params, spec, image, windows, cfg.batch_size)
    return combine_outputs(windows, lik, loc, (width, height), cfg)


def oracle_outputs(windows, pose):
    """Ground-truth network outputs: one-hot label likelihoods and exact locations."""
    from .labeling import assign_label
    from .geometry import normalize_joint

    pose = np.asarray(pose, dtype=np.float64)
    n_joints = len(pose)
    lik = np.zeros((len(windows), n_joints + 1))
    loc = np.zeros((len(windows), n_joints, 2))
    for n, w in enumerate(windows):
        lik[n, assign_label(w, pose).joint] = 1.0
        loc[n] = normalize_joint(pose, w)
    return lik, loc


def write_pose_json(path, estimate, image=None):
    data = estimate.to_json()
    if image is not None:
        data["image"] = str(image)
    Path(path).write_text(json.dumps(data, indent=1))


def export_heatmaps(out_dir, heatmaps, stem="heat"):
    """One 16-bit PGM per joint, min-max scaled; scales go to ``<stem>_scale.txt``."""
    from .dataset import write_pgm16

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = ["joint,file,min,max"]
    paths = []
    for i, h in enumerate(heatmaps):
        lo, hi = float(h.min()), float(h.max())
        scaled = np.zeros(h.shape) if hi == lo else (h - lo) / (hi - lo)
        name = f"{stem}_{i:02d}.pgm"
        write_pgm16(out_dir / name, np.round(scaled * 65535))
        lines.append(f"{i},{name},{lo!r},{hi!r}")
        paths.append(out_dir / name)
    (out_dir / f"{stem}_scale.txt").write_text("\n".join(lines) + "\n")
    return paths
