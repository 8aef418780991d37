"""Detection labels and regression targets for patch pairs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import EmptyIntersection, Patch, crop_to_body, extend_to_square, normalize_joint
from .sampling import closest_visible_joint


class NoValidPairs(ValueError):
    pass


@dataclass(frozen=True)
class PatchLabel:
    """``joint`` is 0 for background, else the 1-based index of the labeled joint."""

    joint: int
    target: tuple | None = None

    def __post_init__(self):
        if self.joint < 0:
            raise ValueError("label must be >= 0")
        if self.joint > 0:
            if self.target is None:
                raise ValueError("a joint label needs a target")
            if max(abs(self.target[0]), abs(self.target[1])) > 0.5:
                raise ValueError(f"target {self.target} lies outside the patch")
        elif self.target is not None:
            raise ValueError("background labels carry no target")


@dataclass(frozen=True)
class PatchPair:
    part: Patch
    body: Patch


def assign_label(part, pose):
    """Label a part patch with its closest visible joint (1-based), or 0."""
    i = closest_visible_joint(pose, part)
    if i < 0:
        return PatchLabel(0)
    x, y = normalize_joint(np.asarray(pose, dtype=np.float64)[i], part)
    return PatchLabel(i + 1, (float(x), float(y)))


def make_pair(part, body):
    """Crop the part to the body, then square both; raises EmptyIntersection."""
    part = crop_to_body(part, body)
    return PatchPair(extend_to_square(part), extend_to_square(body))


def build_training_pairs(part_patches, body_patches, pose, seed, index=0):
    """Pair every part patch with a randomly chosen body patch and label it.

    Bodies that do not overlap the part are redrawn (a few attempts) before
    the part is dropped.  Returns a list of ``(PatchPair, PatchLabel)``.
    """
    if not part_patches or not body_patches:
        raise NoValidPairs("need at least one part patch and one body patch")
    rng = np.random.default_rng([seed, index])
    out = []
    for part in part_patches:
        for _ in range(4):
            body = body_patches[int(rng.integers(len(body_patches)))]
            try:
                pair = make_pair(part, body)
            except EmptyIntersection:
                continue
            out.append((pair, assign_label(pair.part, pose)))
            break
    if not out:
        raise NoValidPairs("every part patch misses every body patch")
    return out
