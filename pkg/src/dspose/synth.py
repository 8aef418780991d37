"""Synthetic articulated stick figures with exact joint annotations.

The skeleton follows the 14-joint LSP layout so manifests, limbs and metrics
carry over to real data unchanged.  Left and right limbs are drawn in
different hues, which keeps the left/right assignment learnable.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

JOINT_NAMES = (
    "r_ankle", "r_knee", "r_hip", "l_hip", "l_knee", "l_ankle",
    "r_wrist", "r_elbow", "r_shoulder", "l_shoulder", "l_elbow", "l_wrist",
    "neck", "head_top",
)
J = {name: i for i, name in enumerate(JOINT_NAMES)}

# tree over the 14 joints, rooted at the neck
BONES = (
    (J["neck"], J["head_top"]),
    (J["neck"], J["r_shoulder"]), (J["r_shoulder"], J["r_elbow"]), (J["r_elbow"], J["r_wrist"]),
    (J["neck"], J["l_shoulder"]), (J["l_shoulder"], J["l_elbow"]), (J["l_elbow"], J["l_wrist"]),
    (J["neck"], J["r_hip"]), (J["r_hip"], J["r_knee"]), (J["r_knee"], J["r_ankle"]),
    (J["neck"], J["l_hip"]), (J["l_hip"], J["l_knee"]), (J["l_knee"], J["l_ankle"]),
)

TORSO_PAIR = (J["l_shoulder"], J["r_hip"])

LIMBS = (
    ("upper_arm_r", J["r_shoulder"], J["r_elbow"]),
    ("upper_arm_l", J["l_shoulder"], J["l_elbow"]),
    ("lower_arm_r", J["r_elbow"], J["r_wrist"]),
    ("lower_arm_l", J["l_elbow"], J["l_wrist"]),
    ("upper_leg_r", J["r_hip"], J["r_knee"]),
    ("upper_leg_l", J["l_hip"], J["l_knee"]),
    ("lower_leg_r", J["r_knee"], J["r_ankle"]),
    ("lower_leg_l", J["l_knee"], J["l_ankle"]),
    ("torso_r", J["r_shoulder"], J["r_hip"]),
    ("torso_l", J["l_shoulder"], J["l_hip"]),
    ("head", J["neck"], J["head_top"]),
)

JOINT_GROUPS = {
    "ankles": (J["r_ankle"], J["l_ankle"]),
    "knees": (J["r_knee"], J["l_knee"]),
    "hips": (J["r_hip"], J["l_hip"]),
    "wrists": (J["r_wrist"], J["l_wrist"]),
    "elbows": (J["r_elbow"], J["l_elbow"]),
    "shoulders": (J["r_shoulder"], J["l_shoulder"]),
    "neck": (J["neck"],),
    "head": (J["head_top"],),
}


@dataclass(frozen=True)
class FigureConfig:
    image_size: tuple = (64, 64)
    # bone lengths in pixels at scale 1
    torso: float = 16.0
    head: float = 7.0
    shoulder_half: float = 5.0
    hip_half: float = 3.5
    upper_arm: float = 9.0
    forearm: float = 8.0
    thigh: float = 11.0
    shin: float = 10.0
    scale_range: tuple = (0.95, 1.15)
    # angle ranges in radians; limb angles are measured from straight down,
    # positive toward the figure's left (image +x)
    torso_tilt: tuple = (-0.25, 0.25)
    head_tilt: tuple = (-0.3, 0.3)
    arm_swing: tuple = (0.0, 2.7)
    arm_bend: tuple = (-1.6, 1.6)
    leg_swing: tuple = (-0.2, 0.7)
    leg_bend: tuple = (-0.9, 0.9)
    limb_thickness: float = 1.6
    torso_thickness: float = 3.5
    background_range: tuple = (0.05, 0.45)
    clutter_count: int = 6
    noise_amplitude: float = 0.03
    margin: float = 2.0
    seed: int = 0
    palette: dict = field(default_factory=lambda: {
        "torso": (0.85, 0.80, 0.35),
        "right_arm": (0.95, 0.25, 0.20),
        "right_leg": (0.95, 0.55, 0.15),
        "left_arm": (0.20, 0.40, 0.95),
        "left_leg": (0.20, 0.80, 0.80),
    })
    color_jitter: float = 0.08

    def __post_init__(self):
        lengths = (self.torso, self.head, self.shoulder_half, self.hip_half,
                   self.upper_arm, self.forearm, self.thigh, self.shin)
        if min(lengths) <= 0 or min(self.scale_range) <= 0:
            raise ValueError("bone lengths and scales must be positive")


@dataclass(frozen=True)
class FigureParams:
    """Explicit pose parameters; angles in radians."""

    pelvis: tuple
    scale: float
    torso_tilt: float
    head_tilt: float
    r_arm: tuple  # (swing, bend)
    l_arm: tuple
    r_leg: tuple
    l_leg: tuple


def _down(angle):
    return np.array([np.sin(angle), np.cos(angle)])


def forward_kinematics(cfg, fp):
    """Joint coordinates for a parameter set."""
    s = fp.scale
    pelvis = np.asarray(fp.pelvis, dtype=np.float64)
    t = fp.torso_tilt
    up = np.array([np.sin(t), -np.cos(t)])
    left = np.array([np.cos(t), np.sin(t)])
    pose = np.zeros((len(JOINT_NAMES), 2))
    neck = pelvis + s * cfg.torso * up
    pose[J["neck"]] = neck
    pose[J["head_top"]] = neck + s * cfg.head * np.array([np.sin(t + fp.head_tilt), -np.cos(t + fp.head_tilt)])
    for side, sign, arm, leg in (("r", -1.0, fp.r_arm, fp.r_leg), ("l", 1.0, fp.l_arm, fp.l_leg)):
        shoulder = neck + sign * s * cfg.shoulder_half * left
        swing = sign * arm[0] - t
        elbow = shoulder + s * cfg.upper_arm * _down(swing)
        wrist = elbow + s * cfg.forearm * _down(swing + sign * arm[1])
        hip = pelvis + sign * s * cfg.hip_half * left
        leg_swing = sign * leg[0] - t
        knee = hip + s * cfg.thigh * _down(leg_swing)
        ankle = knee + s * cfg.shin * _down(leg_swing + sign * leg[1])
        for name, p in (("shoulder", shoulder), ("elbow", elbow), ("wrist", wrist),
                        ("hip", hip), ("knee", knee), ("ankle", ankle)):
            pose[J[f"{side}_{name}"]] = p
    return pose


def sample_params(cfg, rng):
    """Draw pose parameters whose joints fit inside the image margins."""
    width, height = cfg.image_size
    for _ in range(100):
        u = rng.uniform
        fp = FigureParams(
            pelvis=(0.0, 0.0),
            scale=u(*cfg.scale_range),
            torso_tilt=u(*cfg.torso_tilt),
            head_tilt=u(*cfg.head_tilt),
            r_arm=(u(*cfg.arm_swing), u(*cfg.arm_bend)),
            l_arm=(u(*cfg.arm_swing), u(*cfg.arm_bend)),
            r_leg=(u(*cfg.leg_swing), u(*cfg.leg_bend)),
            l_leg=(u(*cfg.leg_swing), u(*cfg.leg_bend)),
        )
        pose = forward_kinematics(cfg, fp)
        lo, hi = pose.min(axis=0), pose.max(axis=0)
        room_x = width - 2 * cfg.margin - (hi[0] - lo[0])
        room_y = height - 2 * cfg.margin - (hi[1] - lo[1])
        if room_x >= 0 and room_y >= 0:
            ox = cfg.margin - lo[0] + u(0, room_x)
            oy = cfg.margin - lo[1] + u(0, room_y)
            return replace(fp, pelvis=(ox, oy))
    raise RuntimeError("figure does not fit the image; enlarge image_size or shrink bones")


def _segment_distance(px, py, a, b):
    d = b - a
    denom = float(d @ d)
    if denom == 0:
        return np.hypot(px - a[0], py - a[1])
    t = np.clip(((px - a[0]) * d[0] + (py - a[1]) * d[1]) / denom, 0, 1)
    return np.hypot(px - (a[0] + t * d[0]), py - (a[1] + t * d[1]))


def _paint(img, coverage, color):
    cov = coverage[..., None]
    img *= 1 - cov
    img += cov * np.asarray(color)


def _capsule(img, px, py, a, b, radius, color):
    cov = np.clip(radius + 0.5 - _segment_distance(px, py, a, b), 0, 1)
    _paint(img, cov, color)


def render(cfg, fp, rng):
    """Render a figure as a uint8 ``(H, W, 3)`` image; returns (image, pose)."""
    width, height = cfg.image_size
    pose = forward_kinematics(cfg, fp)
    py, px = np.mgrid[0:height, 0:width] + 0.5
    lo, hi = cfg.background_range
    img = np.empty((height, width, 3))
    img[...] = rng.uniform(lo, hi, 3)
    for _ in range(cfg.clutter_count):
        cx, cy = rng.uniform(0, width), rng.uniform(0, height)
        rx, ry = rng.uniform(2, width / 4), rng.uniform(2, height / 4)
        cov = np.clip(1.5 - np.hypot((px - cx) / rx, (py - cy) / ry) * 1.5, 0, 1) > 0
        _paint(img, cov.astype(float) * rng.uniform(0.3, 0.8), rng.uniform(lo, hi + 0.15, 3))

    def color(key):
        base = np.asarray(cfg.palette[key])
        return np.clip(base + rng.uniform(-cfg.color_jitter, cfg.color_jitter, 3), 0, 1)

    s = fp.scale
    pelvis = np.asarray(fp.pelvis, dtype=np.float64)
    torso_color = color("torso")
    _capsule(img, px, py, pose[J["neck"]], pelvis, cfg.torso_thickness * s, torso_color)
    _capsule(img, px, py, pose[J["r_shoulder"]], pose[J["l_shoulder"]], cfg.limb_thickness * s, torso_color)
    _capsule(img, px, py, pose[J["r_hip"]], pose[J["l_hip"]], cfg.limb_thickness * s, torso_color)
    head_c = (pose[J["neck"]] + pose[J["head_top"]]) / 2
    head_r = np.hypot(*(pose[J["head_top"]] - pose[J["neck"]])) / 2
    _paint(img, np.clip(head_r + 0.5 - np.hypot(px - head_c[0], py - head_c[1]), 0, 1), torso_color)
    for side, arm, leg in (("l", "left_arm", "left_leg"), ("r", "right_arm", "right_leg")):
        for key, chain in ((leg, ("hip", "knee", "ankle")), (arm, ("shoulder", "elbow", "wrist"))):
            c = color(key)
            for a, b in zip(chain, chain[1:]):
                _capsule(img, px, py, pose[J[f"{side}_{a}"]], pose[J[f"{side}_{b}"]], cfg.limb_thickness * s, c)
    if cfg.noise_amplitude > 0:
        img += rng.normal(0, cfg.noise_amplitude, img.shape)
    img = np.round(np.clip(img, 0, 1) * 255).astype(np.uint8)
    return img, pose


def generate_figure(cfg, index, params=None):
    """Deterministic (image, pose) for ``(cfg.seed, index)``.

    ``params`` overrides the sampled pose parameters.
    """
    rng = np.random.default_rng([cfg.seed, index])
    fp = sample_params(cfg, rng) if params is None else params
    return render(cfg, fp, rng)
