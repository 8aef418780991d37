"""Patch boxes, joint normalization, visibility and pixel resampling.

Coordinates are continuous image pixels: origin at the top-left corner,
x to the right, y downward.  Pixel ``(row, col)`` covers
``[col, col + 1) x [row, row + 1)`` and its center is ``(col + 0.5, row + 0.5)``.
A pose is an ``(L, 2)`` float array of ``(x, y)`` joints.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class EmptyIntersection(ValueError):
    """Part and body patches do not overlap with positive area."""


@dataclass(frozen=True)
class Patch:
    """Axis-aligned box given by width, height and center."""

    w: float
    h: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"patch sides must be positive, got w={self.w} h={self.h}")

    @classmethod
    def from_corners(cls, x0, y0, x1, y1):
        return cls(x1 - x0, y1 - y0, (x0 + x1) / 2, (y0 + y1) / 2)

    @property
    def center(self):
        return np.array([self.cx, self.cy])

    @property
    def corners(self):
        return (self.cx - self.w / 2, self.cy - self.h / 2,
                self.cx + self.w / 2, self.cy + self.h / 2)

    @property
    def area(self):
        return self.w * self.h

    def as_array(self):
        return np.array([self.w, self.h, self.cx, self.cy])


def as_pose(joints, n_joints=None):
    """Validate and return a pose as an ``(L, 2)`` float64 array."""
    pose = np.asarray(joints, dtype=np.float64)
    if pose.ndim != 2 or pose.shape[1] != 2:
        raise ValueError(f"pose must have shape (L, 2), got {pose.shape}")
    if n_joints is not None and pose.shape[0] != n_joints:
        raise ValueError(f"pose has {pose.shape[0]} joints, expected {n_joints}")
    if not np.isfinite(pose).all():
        raise ValueError("pose coordinates must be finite")
    return pose


def normalize_joint(joint, patch):
    """Joint coordinates relative to the patch center, in units of the patch size.

    Works on a single point or any ``(..., 2)`` array of points.
    """
    joint = np.asarray(joint, dtype=np.float64)
    return (joint - (patch.cx, patch.cy)) / (patch.w, patch.h)


def denormalize_joint(norm, patch):
    norm = np.asarray(norm, dtype=np.float64)
    return norm * (patch.w, patch.h) + (patch.cx, patch.cy)


def visibility(pose, patch):
    """1 for joints inside the closed patch box, 0 otherwise."""
    rel = normalize_joint(pose, patch)
    return np.all(np.abs(rel) <= 0.5, axis=-1).astype(np.int64)


def extend_to_square(patch):
    side = max(patch.w, patch.h)
    return Patch(side, side, patch.cx, patch.cy)


def crop_to_body(part, body):
    """Intersection of the part box with the body box."""
    px0, py0, px1, py1 = part.corners
    bx0, by0, bx1, by1 = body.corners
    x0, y0 = max(px0, bx0), max(py0, by0)
    x1, y1 = min(px1, bx1), min(py1, by1)
    if x1 <= x0 or y1 <= y0:
        raise EmptyIntersection(f"{part} does not overlap {body}")
    if (x0, y0, x1, y1) == (px0, py0, px1, py1):
        return part
    return Patch.from_corners(x0, y0, x1, y1)


def contains(outer, inner):
    ox0, oy0, ox1, oy1 = outer.corners
    ix0, iy0, ix1, iy1 = inner.corners
    return ox0 <= ix0 and oy0 <= iy0 and ix1 <= ox1 and iy1 <= oy1


def sample_grid(patch, size):
    """Continuous image coordinates of the centers of a ``size x size`` grid over the patch."""
    x0, y0, _, _ = patch.corners
    u = (np.arange(size) + 0.5) / size
    return x0 + u * patch.w, y0 + u * patch.h


def resample_patch(image, patch, size):
    """Bilinear resampling of a square patch to ``size x size`` pixels.

    Samples outside the image replicate the nearest edge pixel.  ``image`` is
    ``(H, W)`` or ``(H, W, C)`` with values in [0, 1].
    """
    if not np.isclose(patch.w, patch.h, rtol=1e-9, atol=0):
        raise ValueError("resample_patch expects a square patch")
    img = np.asarray(image)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[..., None]
    height, width = img.shape[:2]
    xs, ys = sample_grid(patch, size)
    fx = np.clip(xs - 0.5, 0, width - 1)
    fy = np.clip(ys - 0.5, 0, height - 1)
    x0 = np.floor(fx).astype(np.intp)
    y0 = np.floor(fy).astype(np.intp)
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    ax = (fx - x0)[None, :, None]
    ay = (fy - y0)[:, None, None]
    top = img[y0][:, x0] * (1 - ax) + img[y0][:, x1] * ax
    bottom = img[y1][:, x0] * (1 - ax) + img[y1][:, x1] * ax
    out = top * (1 - ay) + bottom * ay
    out = np.clip(out, 0.0, 1.0)
    return out[..., 0] if squeeze else out


def mask_in_body(part, body, size):
    """Binary mask of the part box on the ``size x size`` grid of the body patch.

    Nearest-neighbor: a cell is 1 when its center lies in the closed part box.
    If no center falls inside, the cell nearest the part center is set so the
    mask is never empty.
    """
    xs, ys = sample_grid(body, size)
    px0, py0, px1, py1 = part.corners
    cols = (xs >= px0) & (xs <= px1)
    rows = (ys >= py0) & (ys <= py1)
    mask = (rows[:, None] & cols[None, :]).astype(np.uint8)
    if not mask.any():
        r = int(np.argmin(np.abs(ys - part.cy)))
        c = int(np.argmin(np.abs(xs - part.cx)))
        mask[r, c] = 1
    return mask


def pixel_span(lo, hi, limit):
    """Half-open index range of pixels whose centers lie in ``[lo, hi]``, clipped to ``[0, limit)``."""
    a = max(int(np.ceil(lo - 0.5)), 0)
    b = min(int(np.floor(hi - 0.5)) + 1, limit)
    if b <= a:
        # patch thinner than a pixel: take the pixel holding its midpoint
        mid = min(max(int(np.floor((lo + hi) / 2)), 0), limit - 1)
        return mid, mid + 1
    return a, b


def rasterize(patch, image_size):
    """Row/column slices of the pixels covered by ``patch`` in a ``(W, H)`` image."""
    width, height = image_size
    x0, y0, x1, y1 = patch.corners
    c0, c1 = pixel_span(x0, x1, width)
    r0, r1 = pixel_span(y0, y1, height)
    return slice(r0, r1), slice(c0, c1)
