"""Multi-task loss and minibatch SGD training."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .geometry import Patch, mask_in_body, resample_patch
from .labeling import NoValidPairs, build_training_pairs
from .network import backward, forward, init_params
from .sampling import filter_body_patches, filter_part_patches, stub_proposals, torso_diameter

log = logging.getLogger(__name__)


class Divergence(FloatingPointError):
    """Training loss became non-finite; the learning rate is likely too high."""


@dataclass(frozen=True)
class TrainConfig:
    lambda_d: float = 4.0
    learning_rate: float = 0.01
    decay: float = 0.1
    decay_every: int = 10
    momentum: float = 0.0
    weight_decay: float = 0.0
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    dtype: str = "float64"
    # per image: background pairs kept <= background_ratio * (joint pairs / L)
    background_ratio: float = 1.0
    pairs_per_image: int = 0  # 0 keeps every pair
    checkpoint_every: int = 0

    def __post_init__(self):
        if not self.lambda_d > 0:
            raise ValueError("lambda_d must be > 0")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1 or self.epochs < 0 or self.decay_every < 1:
            raise ValueError("batch_size, decay_every must be >= 1 and epochs >= 0")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")


def learning_rate_at(cfg, epoch):
    """Step decay: multiply by ``cfg.decay`` every ``cfg.decay_every`` epochs."""
    return cfg.learning_rate * cfg.decay ** (epoch // cfg.decay_every)


# -- losses ----------------------------------------------------------------

def detection_loss(likelihoods, joint):
    return float(-np.log(likelihoods[joint]))


def localization_loss(locations, label):
    if label.joint == 0:
        return 0.0
    diff = np.asarray(locations)[label.joint - 1] - np.asarray(label.target)
    return float(diff @ diff)


def total_loss(outputs, labels, lambda_d):
    """Sum over samples of ``lambda_d * C_d + C_r``.

    ``outputs`` is a sequence of ``(likelihoods, locations)`` per sample.
    """
    if len(outputs) == 0:
        raise ValueError("empty batch")
    return sum(lambda_d * detection_loss(lik, lab.joint) + localization_loss(loc, lab)
               for (lik, loc), lab in zip(outputs, labels))


def batch_losses(likelihoods, locations, joints, targets):
    """Per-sample detection and localization losses for a batch."""
    b = np.arange(len(joints))
    det = -np.log(likelihoods[b, joints])
    has = joints > 0
    diff = locations[b, np.maximum(joints - 1, 0)] - targets
    loc = np.where(has, np.sum(diff * diff, axis=-1), 0.0)
    return det, loc


def loss_gradients(likelihoods, locations, joints, targets, lambda_d, scale=1.0):
    """Gradients of ``scale * sum(lambda_d C_d + C_r)`` w.r.t. logits and locations."""
    b = np.arange(len(joints))
    dlogits = likelihoods.copy()
    dlogits[b, joints] -= 1
    dlogits *= lambda_d * scale
    dloc = np.zeros_like(locations)
    has = joints > 0
    idx = np.maximum(joints - 1, 0)
    diff = locations[b, idx] - targets
    dloc[b[has], idx[has]] = 2 * scale * diff[has]
    return dlogits, dloc


# -- training pairs --------------------------------------------------------

class PairSet:
    """Patch-pair geometry plus labels; pixel inputs are built per batch."""

    def __init__(self, images, image_index, parts, bodies, joints, targets, input_size=32):
        self.images = images
        self.image_index = np.asarray(image_index, dtype=np.intp)
        self.parts = np.asarray(parts, dtype=np.float64).reshape(-1, 4)
        self.bodies = np.asarray(bodies, dtype=np.float64).reshape(-1, 4)
        self.joints = np.asarray(joints, dtype=np.intp)
        self.targets = np.asarray(targets, dtype=np.float64).reshape(-1, 2)
        self.input_size = input_size

    def __len__(self):
        return len(self.joints)

    def subset(self, idx):
        idx = np.asarray(idx)
        return PairSet(self.images, self.image_index[idx], self.parts[idx], self.bodies[idx],
                       self.joints[idx], self.targets[idx], self.input_size)

    def inputs(self, idx, dtype=np.float64):
        """Part (B, N, N, 3) and body (B, N, N, 4) blocks for the given rows."""
        idx = np.atleast_1d(idx)
        n = self.input_size
        part = np.empty((len(idx), n, n, 3), dtype=dtype)
        body = np.empty((len(idx), n, n, 4), dtype=dtype)
        for k, row in enumerate(idx):
            img = self.images[self.image_index[row]]
            pp, bp = Patch(*self.parts[row]), Patch(*self.bodies[row])
            part[k] = resample_patch(img, pp, n)
            body[k, ..., :3] = resample_patch(img, bp, n)
            body[k, ..., 3] = mask_in_body(pp, bp, n)
        return part, body


def as_float_image(image):
    image = np.asarray(image)
    return image / 255.0 if image.dtype == np.uint8 else image.astype(np.float64)


def collect_pairs(images, poses, torso_pair, sampling, train_cfg, input_size=32, start_index=0):
    """Sample, filter, pair and label patches for every training image."""
    n_joints = len(poses[0])
    floats, rows = [], []
    for k, (img, pose) in enumerate(zip(images, poses)):
        index = start_index + k
        img = as_float_image(img)
        floats.append(img)
        height, width = img.shape[:2]
        d = torso_diameter(pose, torso_pair)
        if not d > 0:
            continue
        cands = stub_proposals((width, height), pose, d, sampling, index)
        parts = filter_part_patches(cands, d, sampling)
        bodies = filter_body_patches(cands, pose) + [Patch(width, height, width / 2, height / 2)]
        try:
            pairs = build_training_pairs(parts, bodies, pose, train_cfg.seed, index)
        except NoValidPairs:
            continue
        rng = np.random.default_rng([train_cfg.seed, index, 1])
        pos = [p for p in pairs if p[1].joint > 0]
        neg = [p for p in pairs if p[1].joint == 0]
        cap = train_cfg.background_ratio * len(pos) / n_joints
        if len(neg) > cap:
            cap = int(np.ceil(cap))
            neg = [neg[i] for i in sorted(rng.choice(len(neg), cap, replace=False))]
        kept = pos + neg
        if train_cfg.pairs_per_image and len(kept) > train_cfg.pairs_per_image:
            kept = [kept[i] for i in sorted(rng.choice(len(kept), train_cfg.pairs_per_image, replace=False))]
        for pair, label in kept:
            rows.append((k, pair.part.as_array(), pair.body.as_array(), label.joint,
                         label.target if label.joint else (0.0, 0.0)))
    if not rows:
        return PairSet(floats, [], [], [], [], [], input_size)
    idx, parts, bodies, joints, targets = zip(*rows)
    return PairSet(floats, idx, parts, bodies, joints, targets, input_size)


# -- loop ------------------------------------------------------------------

def evaluate_loss(params, spec, pairs, lambda_d, batch_size=256):
    """Mean per-sample total, detection and localization loss over a pair set."""
    dtype = params["det.W"].dtype
    det_sum = loc_sum = 0.0
    for s in range(0, len(pairs), batch_size):
        idx = np.arange(s, min(s + batch_size, len(pairs)))
        part, body = pairs.inputs(idx, dtype)
        out = forward(params, spec, part, body)
        det, loc = batch_losses(out.likelihoods, out.locations, pairs.joints[idx], pairs.targets[idx])
        det_sum += float(det.sum())
        loc_sum += float(loc.sum())
    n = max(len(pairs), 1)
    return (lambda_d * det_sum + loc_sum) / n, det_sum / n, loc_sum / n


def train(pairs, spec, cfg, params=None, velocity=None, start_epoch=0, on_epoch=None):
    """Minibatch SGD on the multi-task loss.

    Each step uses the batch-mean gradient.  The shuffle for epoch ``e`` is
    seeded by ``(cfg.seed, e)``, so resuming at ``start_epoch`` with the saved
    params and velocity reproduces an uninterrupted run.  ``on_epoch`` is
    called as ``on_epoch(epoch, params, velocity, row)``.

    Returns ``(params, velocity, history)`` where each history row is
    ``(epoch, mean_loss, det_loss, loc_loss)``.
    """
    dtype = np.dtype(cfg.dtype)
    if params is None:
        params = init_params(spec, cfg.seed, dtype=dtype)
    params = {k: v.astype(dtype, copy=True) for k, v in params.items()}
    if velocity is None:
        velocity = {k: np.zeros_like(v) for k, v in params.items()}
    if len(pairs) == 0:
        raise ValueError("no training pairs")
    history = []
    for epoch in range(start_epoch, cfg.epochs):
        lr = learning_rate_at(cfg, epoch)
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(pairs))
        det_sum = loc_sum = 0.0
        for s in range(0, len(order), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            part, body = pairs.inputs(idx, dtype)
            out = forward(params, spec, part, body, keep_cache=True)
            joints, targets = pairs.joints[idx], pairs.targets[idx].astype(dtype)
            det, loc = batch_losses(out.likelihoods, out.locations, joints, targets)
            step_loss = cfg.lambda_d * det.sum() + loc.sum()
            if not np.isfinite(step_loss):
                raise Divergence(f"non-finite loss at epoch {epoch}, lr={lr}")
            det_sum += float(det.sum())
            loc_sum += float(loc.sum())
            dlogits, dloc = loss_gradients(out.likelihoods, out.locations, joints, targets,
                                           cfg.lambda_d, scale=1.0 / len(idx))
            grads = backward(params, spec, out.cache, dlogits, dloc)
            for name, g in grads.items():
                if cfg.weight_decay and name.endswith(".W"):
                    g = g + cfg.weight_decay * params[name]
                v = velocity[name]
                v *= cfg.momentum
                v -= lr * g
                params[name] += v
        n = len(order)
        row = (epoch, (cfg.lambda_d * det_sum + loc_sum) / n, det_sum / n, loc_sum / n)
        if not np.isfinite(row[1]):
            raise Divergence(f"non-finite loss at epoch {epoch}")
        history.append(row)
        log.info("epoch %d lr=%.4g loss=%.4f det=%.4f loc=%.4f", epoch, lr, *row[1:])
        if on_epoch is not None:
            on_epoch(epoch, params, velocity, row)
    return params, velocity, history


def write_history_csv(path, history):
    with open(path, "w") as fh:
        fh.write("epoch,mean_loss,det_loss,loc_loss\n")
        for epoch, total, det, loc in history:
            fh.write(f"{epoch},{total!r},{det!r},{loc!r}\n")
