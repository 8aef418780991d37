"""Candidate patch generation and filtering for training and inference."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Patch, normalize_joint, visibility


@dataclass(frozen=True)
class SamplingConfig:
    mu1: float = 0.1
    mu2: float = 1.0
    window_scales: tuple = (0.5, 1.0)
    stride: float = 2.0
    proposal_count: int = 200
    # share of proposals drawn at body scale (around the figure) rather than part scale
    body_fraction: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.mu1 < self.mu2:
            raise ValueError(f"need 0 < mu1 < mu2, got mu1={self.mu1} mu2={self.mu2}")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if not self.window_scales or any(s <= 0 for s in self.window_scales):
            raise ValueError("window scales must be positive")
        if self.proposal_count < 0:
            raise ValueError("proposal_count must be >= 0")
        if not 0 <= self.body_fraction <= 1:
            raise ValueError("body_fraction must lie in [0, 1]")


def torso_diameter(pose, torso_pair):
    a, b = torso_pair
    pose = np.asarray(pose, dtype=np.float64)
    return float(np.hypot(*(pose[a] - pose[b])))


def filter_part_patches(candidates, d, cfg):
    """Keep patches whose area lies in ``[mu1 d^2, mu2 d^2]``."""
    if not d > 0:
        raise ValueError("torso diameter must be positive")
    lo, hi = cfg.mu1 * d * d, cfg.mu2 * d * d
    return [p for p in candidates if lo <= p.w * p.h <= hi]


def filter_body_patches(candidates, pose):
    """Keep patches that contain every joint."""
    n = len(pose)
    return [p for p in candidates if visibility(pose, p).sum() == n]


def window_centers(extent, side, stride):
    """Stride-spaced centers for windows of ``side`` covering ``[0, extent]``.

    Windows start at 0, stride, 2 * stride, ... up to the first one reaching
    the far edge, so the last window may hang over the border (its pixels
    come from edge replication).  Starts always lie inside the image.
    """
    if side >= extent:
        return np.array([extent / 2])
    need = int(np.ceil((extent - side) / stride - 1e-9))
    inside = int(np.ceil(extent / stride - 1e-9)) - 1
    return side / 2 + stride * np.arange(min(need, inside) + 1)


def sliding_windows(image_size, d, cfg):
    """Square windows of side ``s * d`` for every scale ``s``, stepped by ``cfg.stride``."""
    width, height = image_size
    windows = []
    for scale in cfg.window_scales:
        side = scale * d
        xs = window_centers(width, side, cfg.stride)
        ys = window_centers(height, side, cfg.stride)
        windows.extend(Patch(side, side, float(x), float(y)) for y in ys for x in xs)
    return windows


def stub_proposals(image_size, pose, d, cfg, index=0):
    """Seeded stand-in for an object-proposal algorithm.

    Part-scale boxes have log-uniform areas in ``[mu1 d^2, 2 mu2 d^2]`` and
    log-uniform aspect ratios in [1/2, 2]; 70% are centered within ``d/2``
    of a random joint and 30% uniformly over the image.  A ``body_fraction``
    share are body-scale boxes: the joints' bounding box grown by random
    margins.  Any real proposal generator can replace this function.
    """
    width, height = image_size
    pose = np.asarray(pose, dtype=np.float64)
    rng = np.random.default_rng([cfg.seed, index])
    n_body = int(round(cfg.proposal_count * cfg.body_fraction))
    n_part = cfg.proposal_count - n_body
    out = []

    area = np.exp(rng.uniform(np.log(cfg.mu1 * d * d), np.log(2 * cfg.mu2 * d * d), n_part))
    aspect = np.exp(rng.uniform(np.log(0.5), np.log(2.0), n_part))
    w = np.sqrt(area * aspect)
    h = area / w
    near = rng.random(n_part) < 0.7
    joint = rng.integers(0, len(pose), n_part)
    radius = 0.5 * d * np.sqrt(rng.random(n_part))
    angle = rng.uniform(0, 2 * np.pi, n_part)
    cx = np.where(near, pose[joint, 0] + radius * np.cos(angle), rng.uniform(0, width, n_part))
    cy = np.where(near, pose[joint, 1] + radius * np.sin(angle), rng.uniform(0, height, n_part))
    out.extend(Patch(float(a), float(b), float(c), float(e)) for a, b, c, e in zip(w, h, cx, cy))

    lo = pose.min(axis=0)
    hi = pose.max(axis=0)
    for _ in range(n_body):
        m = rng.uniform(0.0, 0.5 * d, 4)
        x0 = max(lo[0] - m[0], 0.0)
        y0 = max(lo[1] - m[1], 0.0)
        x1 = min(hi[0] + m[2], float(width))
        y1 = min(hi[1] + m[3], float(height))
        out.append(Patch.from_corners(x0, y0, x1, y1))
    return out


def closest_visible_joint(pose, patch):
    """Index of the visible joint nearest the patch center (in normalized units), or -1.

    Ties go to the lowest index.
    """
    rel = normalize_joint(pose, patch)
    vis = np.all(np.abs(rel) <= 0.5, axis=-1)
    if not vis.any():
        return -1
    dist = np.where(vis, np.sum(rel * rel, axis=-1), np.inf)
    return int(np.argmin(dist))


def coverage_histogram(part_patches_per_image, poses):
    """Mean number of part patches per image whose closest visible joint is ``i``."""
    poses = [np.asarray(p, dtype=np.float64) for p in poses]
    if len(part_patches_per_image) != len(poses):
        raise ValueError("need one patch list per pose")
    n_joints = len(poses[0])
    counts = np.zeros(n_joints)
    for patches, pose in zip(part_patches_per_image, poses):
        for p in patches:
            i = closest_visible_joint(pose, p)
            if i >= 0:
                counts[i] += 1
    return counts / max(len(poses), 1)
