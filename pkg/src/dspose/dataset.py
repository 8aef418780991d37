"""Dataset manifests and image files (PNG, binary PPM/PGM)."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import synth
from .sampling import torso_diameter

MANIFEST_NAME = "manifest.json"


class MalformedManifest(ValueError):
    pass


class MissingImage(FileNotFoundError):
    pass


# -- netpbm ----------------------------------------------------------------

def write_ppm(path, image):
    image = np.asarray(image, dtype=np.uint8)
    h, w = image.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(np.ascontiguousarray(image[..., :3]).tobytes())


def write_pgm16(path, values):
    values = np.asarray(values, dtype=np.uint16)
    h, w = values.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode())
        fh.write(values.astype(">u2").tobytes())


def _pnm_tokens(data, count):
    tokens, pos = [], 2
    while len(tokens) < count:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(int(data[start:pos]))
    return tokens, pos + 1


def read_pnm(path):
    """Read a binary PPM (P6) or PGM (P5) file."""
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"{path}: not a binary PPM/PGM file")
    (w, h, maxval), offset = _pnm_tokens(data, 3)
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
    arr = np.frombuffer(data, dtype=dtype, count=w * h * channels, offset=offset)
    arr = arr.astype(np.uint16 if maxval > 255 else np.uint8)
    return arr.reshape(h, w, channels) if channels == 3 else arr.reshape(h, w)


def write_image(path, image):
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        write_ppm(path, image)
    else:
        from PIL import Image
        Image.fromarray(np.asarray(image, dtype=np.uint8)).save(path)


def read_image(path):
    """Read an RGB image as uint8 ``(H, W, 3)``."""
    path = Path(path)
    if not path.exists():
        raise MissingImage(f"missing image: {path}")
    if path.suffix.lower() in (".ppm", ".pgm", ".pnm"):
        img = read_pnm(path)
        return np.repeat(img[..., None], 3, axis=2) if img.ndim == 2 else img
    from PIL import Image
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


# -- manifest --------------------------------------------------------------

@dataclass
class Record:
    image: str
    joints: list


@dataclass
class DatasetManifest:
    joint_names: list
    torso_pair: tuple
    limbs: list
    joint_groups: dict
    image_size: tuple
    d_ratio: float = 0.0
    records: list = field(default_factory=list)

    @property
    def n_joints(self):
        return len(self.joint_names)

    def pose(self, i):
        return np.asarray(self.records[i].joints, dtype=np.float64)

    def to_dict(self):
        d = asdict(self)
        d["torso_pair"] = list(self.torso_pair)
        d["image_size"] = list(self.image_size)
        d["limbs"] = [list(x) for x in self.limbs]
        d["joint_groups"] = {k: list(v) for k, v in self.joint_groups.items()}
        return d

    @classmethod
    def from_dict(cls, d):
        try:
            names = list(d["joint_names"])
            n = len(names)
            pair = tuple(int(i) for i in d["torso_pair"])
            limbs = [(str(name), int(a), int(b)) for name, a, b in d["limbs"]]
            groups = {str(k): tuple(int(i) for i in v) for k, v in d["joint_groups"].items()}
            records = [Record(str(r["image"]), [[float(x), float(y)] for x, y in r["joints"]])
                       for r in d.get("records", [])]
            manifest = cls(names, pair, limbs, groups, tuple(int(s) for s in d["image_size"]),
                           float(d.get("d_ratio", 0.0)), records)
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedManifest(f"bad manifest field: {exc}") from exc
        indices = list(pair) + [i for _, a, b in limbs for i in (a, b)] + [i for g in groups.values() for i in g]
        if any(not 0 <= i < n for i in indices):
            raise MalformedManifest("joint index out of range")
        if any(a == b for _, a, b in limbs) or pair[0] == pair[1]:
            raise MalformedManifest("limbs and torso pair need two distinct joints")
        for r in records:
            if len(r.joints) != n or not np.isfinite(r.joints).all():
                raise MalformedManifest(f"record {r.image} needs {n} finite joints")
        return manifest


def lsp_manifest(image_size=(64, 64)):
    """Empty manifest with the 14-joint LSP-style schema used by the generator."""
    return DatasetManifest(
        joint_names=list(synth.JOINT_NAMES),
        torso_pair=synth.TORSO_PAIR,
        limbs=[list(x) for x in synth.LIMBS],
        joint_groups={k: list(v) for k, v in synth.JOINT_GROUPS.items()},
        image_size=tuple(image_size),
    )


def calibrate_d_ratio(poses, torso_pair, image_height):
    """Mean torso diameter as a fraction of the body-patch (image) height."""
    return float(np.mean([torso_diameter(p, torso_pair) for p in poses]) / image_height)


def save_dataset(root, manifest, images, fmt="png"):
    """Write images and ``manifest.json`` under ``root``; records are rewritten."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    if len(images) != len(manifest.records):
        raise ValueError("need one image per record")
    for rec, img in zip(manifest.records, images):
        write_image(root / rec.image, img)
    (root / MANIFEST_NAME).write_text(json.dumps(manifest.to_dict(), indent=1))


def load_manifest(path):
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise MalformedManifest(f"{path}: {exc}") from exc
    return DatasetManifest.from_dict(data)


def load_dataset(path):
    """Return ``(manifest, images, poses)``; raises MissingImage naming the file."""
    path = Path(path)
    root = path if path.is_dir() else path.parent
    manifest = load_manifest(path)
    images = [read_image(root / rec.image) for rec in manifest.records]
    poses = [manifest.pose(i) for i in range(len(manifest.records))]
    return manifest, images, poses


def synthesize(cfg, count, start=0, fmt="png"):
    """Generate ``count`` figures into an in-memory manifest and image list."""
    manifest = lsp_manifest(cfg.image_size)
    images = []
    for k in range(count):
        img, pose = synth.generate_figure(cfg, start + k)
        images.append(img)
        manifest.records.append(Record(f"img_{start + k:05d}.{fmt}", pose.tolist()))
    manifest.d_ratio = calibrate_d_ratio([manifest.pose(i) for i in range(count)],
                                         manifest.torso_pair, cfg.image_size[1]) if count else 0.0
    return manifest, images
