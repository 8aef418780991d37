"""Dual-tower convolutional network with analytic backpropagation.

Activations use NHWC layout.  A part tower sees the RGB part patch, a body
tower sees the RGB body patch plus a binary mask channel; their flattened
features are concatenated and fed through a shared fully-connected stack
that ends in a (L+1)-way softmax head and a 2L-wide linear regression head.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

CHECKPOINT_VERSION = 1

TOWER_CHANNELS = {"part": 3, "body": 4}


class ShapeMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ConvSpec:
    filters: int
    kernel: int
    stride: int = 1
    pool: bool = True


@dataclass(frozen=True)
class LayerSpec:
    """Architecture of the dual-tower network.

    ``towers`` selects which sources are wired in; ``("part",)`` and
    ``("body",)`` give the single-source ablation networks.
    """

    n_joints: int = 14
    input_size: int = 32
    part_convs: tuple = (ConvSpec(8, 5), ConvSpec(16, 5), ConvSpec(32, 3))
    body_convs: tuple = (ConvSpec(8, 5), ConvSpec(16, 5), ConvSpec(32, 3))
    fc_widths: tuple = (128, 64)
    towers: tuple = ("part", "body")

    def __post_init__(self):
        if not self.towers or any(t not in TOWER_CHANNELS for t in self.towers):
            raise ValueError(f"towers must be a non-empty subset of part/body, got {self.towers}")
        if self.n_joints < 1 or self.input_size < 1:
            raise ValueError("n_joints and input_size must be positive")

    @classmethod
    def large_shape(cls, n_joints=14, input_size=227):
        """Five conv layers per tower (pooling after 1, 2 and 5), three FC layers."""
        convs = (
            ConvSpec(96, 11, stride=4, pool=True),
            ConvSpec(256, 5, pool=True),
            ConvSpec(384, 3, pool=False),
            ConvSpec(384, 3, pool=False),
            ConvSpec(256, 3, pool=True),
        )
        return cls(n_joints=n_joints, input_size=input_size, part_convs=convs,
                   body_convs=convs, fc_widths=(4096, 4096, 4096))

    def convs(self, tower):
        return self.part_convs if tower == "part" else self.body_convs

    def tower_output_shape(self, tower):
        size = self.input_size
        channels = TOWER_CHANNELS[tower]
        for c in self.convs(tower):
            size = _conv_out(size, c.kernel, c.stride)
            if c.pool:
                size //= 2
            if size < 1:
                raise ShapeMismatch(f"{tower} tower collapses to zero spatial size")
            channels = c.filters
        return size, size, channels

    def feature_width(self):
        return sum(int(np.prod(self.tower_output_shape(t))) for t in self.towers)

    def to_dict(self):
        d = asdict(self)
        d["part_convs"] = [asdict(c) for c in self.part_convs]
        d["body_convs"] = [asdict(c) for c in self.body_convs]
        d["fc_widths"] = list(self.fc_widths)
        d["towers"] = list(self.towers)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            n_joints=int(d["n_joints"]),
            input_size=int(d["input_size"]),
            part_convs=tuple(ConvSpec(**c) for c in d["part_convs"]),
            body_convs=tuple(ConvSpec(**c) for c in d["body_convs"]),
            fc_widths=tuple(int(w) for w in d["fc_widths"]),
            towers=tuple(d["towers"]),
        )


def _conv_out(size, kernel, stride):
    pad = kernel // 2
    return (size + 2 * pad - kernel) // stride + 1


def param_shapes(spec):
    """Ordered mapping of parameter name -> shape."""
    shapes = {}
    for tower in spec.towers:
        cin = TOWER_CHANNELS[tower]
        for i, c in enumerate(spec.convs(tower)):
            shapes[f"{tower}.conv{i}.W"] = (c.kernel, c.kernel, cin, c.filters)
            shapes[f"{tower}.conv{i}.b"] = (c.filters,)
            cin = c.filters
    width = spec.feature_width()
    for i, out in enumerate(spec.fc_widths):
        shapes[f"fc{i}.W"] = (width, out)
        shapes[f"fc{i}.b"] = (out,)
        width = out
    shapes["det.W"] = (width, spec.n_joints + 1)
    shapes["det.b"] = (spec.n_joints + 1,)
    shapes["loc.W"] = (width, 2 * spec.n_joints)
    shapes["loc.b"] = (2 * spec.n_joints,)
    return shapes


def init_params(spec, seed=0, dtype=np.float64):
    """He-normal weights (variance 2/fan_in), zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(spec).items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            fan_in = int(np.prod(shape[:-1]))
            params[name] = (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)
    return params


def check_params(params, spec):
    expected = param_shapes(spec)
    if set(params) != set(expected):
        missing = sorted(set(expected) - set(params))
        extra = sorted(set(params) - set(expected))
        raise ShapeMismatch(f"parameter names differ: missing={missing} extra={extra}")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise ShapeMismatch(f"{name}: expected {shape}, got {params[name].shape}")


# -- layer kernels ---------------------------------------------------------

def _im2col(x, kernel, stride):
    pad = kernel // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    win = sliding_window_view(xp, (kernel, kernel), axis=(1, 2))[:, ::stride, ::stride]
    # win: (B, Ho, Wo, C, k, k) -> rows ordered (ky, kx, c) to match W layout
    b, ho, wo = win.shape[:3]
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(b * ho * wo, -1)
    return cols, (b, ho, wo), xp.shape


def conv_forward(x, w, b, stride):
    k = w.shape[0]
    cols, (bs, ho, wo), xp_shape = _im2col(x, k, stride)
    out = cols @ w.reshape(-1, w.shape[-1]) + b
    return out.reshape(bs, ho, wo, -1), (cols, xp_shape)


def conv_backward(dout, x_shape, w, stride, cache, need_dx=True):
    cols, xp_shape = cache
    k = w.shape[0]
    cin, cout = w.shape[2], w.shape[3]
    bs, ho, wo, _ = dout.shape
    d2 = dout.reshape(-1, cout)
    dw = (cols.T @ d2).reshape(w.shape)
    db = d2.sum(axis=0)
    if not need_dx:
        return None, dw, db
    dcols = (d2 @ w.reshape(-1, cout).T).reshape(bs, ho, wo, k, k, cin)
    dxp = np.zeros(xp_shape, dtype=dout.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :] += dcols[:, :, :, i, j, :]
    pad = k // 2
    dx = dxp[:, pad:pad + x_shape[1], pad:pad + x_shape[2], :]
    return dx, dw, db


def _pool_views(x):
    h2, w2 = x.shape[1] // 2, x.shape[2] // 2
    return [x[:, a:2 * h2:2, b:2 * w2:2, :] for a in (0, 1) for b in (0, 1)]


def pool_forward(x):
    """2x2 max pooling; odd trailing rows/columns are dropped."""
    v = _pool_views(x)
    out = np.maximum(np.maximum(v[0], v[1]), np.maximum(v[2], v[3]))
    return out, (x, out)


def pool_backward(dout, cache):
    # route each gradient to the first maximal element of its window
    x, out = cache
    dx = np.zeros_like(x, dtype=dout.dtype)
    taken = np.zeros(out.shape, dtype=bool)
    for src, dst in zip(_pool_views(x), _pool_views(dx)):
        hit = (src == out) & ~taken
        dst[...] = np.where(hit, dout, 0)
        taken |= hit
    return dx


def softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


# -- network ---------------------------------------------------------------

@dataclass
class NetOutput:
    """Batched network output: ``likelihoods`` (B, L+1), ``locations`` (B, L, 2)."""

    likelihoods: np.ndarray
    locations: np.ndarray
    cache: dict = field(default=None, repr=False)


def _tower_forward(params, spec, tower, x, cache):
    for i, c in enumerate(spec.convs(tower)):
        pre, conv_cache = conv_forward(x, params[f"{tower}.conv{i}.W"], params[f"{tower}.conv{i}.b"], c.stride)
        act = np.maximum(pre, 0)
        entry = {"x_shape": x.shape, "conv": conv_cache, "pre": pre}
        if c.pool:
            act, entry["pool"] = pool_forward(act)
        cache[f"{tower}.{i}"] = entry
        x = act
    return x


def forward(params, spec, part=None, body=None, keep_cache=False):
    """Run the network on a batch.

    part: (B, N, N, 3) and body: (B, N, N, 4); only the sources in
    ``spec.towers`` are required.
    """
    inputs = {"part": part, "body": body}
    cache = {}
    feats = []
    batch = None
    for tower in spec.towers:
        x = inputs[tower]
        if x is None:
            raise ShapeMismatch(f"network expects a {tower} input")
        want = (spec.input_size, spec.input_size, TOWER_CHANNELS[tower])
        if x.ndim != 4 or x.shape[1:] != want:
            raise ShapeMismatch(f"{tower} input must be (B, {want}), got {x.shape}")
        if batch is None:
            batch = x.shape[0]
        elif x.shape[0] != batch:
            raise ShapeMismatch("part and body batch sizes differ")
        out = _tower_forward(params, spec, tower, x.astype(params["det.W"].dtype, copy=False), cache)
        cache[f"{tower}.out_shape"] = out.shape
        feats.append(out.reshape(batch, -1))
    h = np.concatenate(feats, axis=1) if len(feats) > 1 else feats[0]
    cache["feat_widths"] = [f.shape[1] for f in feats]
    for i in range(len(spec.fc_widths)):
        cache[f"fc{i}.in"] = h
        pre = h @ params[f"fc{i}.W"] + params[f"fc{i}.b"]
        cache[f"fc{i}.pre"] = pre
        h = np.maximum(pre, 0)
    cache["head.in"] = h
    logits = h @ params["det.W"] + params["det.b"]
    loc = h @ params["loc.W"] + params["loc.b"]
    out = NetOutput(softmax(logits), loc.reshape(batch, spec.n_joints, 2))
    if keep_cache:
        out.cache = cache
    return out


def backward(params, spec, cache, dlogits, dloc):
    """Gradients of a scalar loss given its gradient w.r.t. logits and locations.

    dlogits: (B, L+1); dloc: (B, L, 2).
    """
    grads = {}
    h = cache["head.in"]
    dloc = dloc.reshape(dloc.shape[0], -1)
    grads["det.W"] = h.T @ dlogits
    grads["det.b"] = dlogits.sum(axis=0)
    grads["loc.W"] = h.T @ dloc
    grads["loc.b"] = dloc.sum(axis=0)
    dh = dlogits @ params["det.W"].T + dloc @ params["loc.W"].T
    for i in reversed(range(len(spec.fc_widths))):
        dpre = dh * (cache[f"fc{i}.pre"] > 0)
        grads[f"fc{i}.W"] = cache[f"fc{i}.in"].T @ dpre
        grads[f"fc{i}.b"] = dpre.sum(axis=0)
        dh = dpre @ params[f"fc{i}.W"].T
    start = 0
    for tower, width in zip(spec.towers, cache["feat_widths"]):
        dx = dh[:, start:start + width].reshape(cache[f"{tower}.out_shape"])
        start += width
        convs = spec.convs(tower)
        for i in reversed(range(len(convs))):
            entry = cache[f"{tower}.{i}"]
            if convs[i].pool:
                dx = pool_backward(dx, entry["pool"])
            dx = dx * (entry["pre"] > 0)
            w = params[f"{tower}.conv{i}.W"]
            dx, grads[f"{tower}.conv{i}.W"], grads[f"{tower}.conv{i}.b"] = conv_backward(
                dx, entry["x_shape"], w, convs[i].stride, entry["conv"], need_dx=i > 0)
    return grads


# -- inputs ----------------------------------------------------------------

def build_inputs(part_pixels, body_pixels, mask):
    """Stack the part RGB block and the body RGBA block (mask as alpha).

    Accepts single samples (N, N, C) or batches (B, N, N, C).
    """
    part_pixels = np.asarray(part_pixels)
    body_pixels = np.asarray(body_pixels)
    mask = np.asarray(mask)
    if part_pixels.shape[-3:-1] != body_pixels.shape[-3:-1] or mask.shape != body_pixels.shape[:-1]:
        raise ShapeMismatch("part, body and mask must share spatial dimensions")
    if not np.isin(mask, (0, 1)).all():
        raise ValueError("mask must be binary")
    body = np.concatenate([body_pixels, mask[..., None].astype(body_pixels.dtype)], axis=-1)
    return part_pixels, body


# -- checkpoints -----------------------------------------------------------

def save_checkpoint(path, params, spec, extra=None, state=None):
    """Write an ``.npz`` container holding the layer spec and named arrays.

    ``state`` adds further named arrays (e.g. optimizer velocity) verbatim.
    """
    header = {"version": CHECKPOINT_VERSION, "spec": spec.to_dict(), "extra": extra or {}}
    arrays = {f"param/{k}": v for k, v in params.items()}
    arrays.update(state or {})
    with open(path, "wb") as fh:
        np.savez(fh, __header__=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path):
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(bytes(data["__header__"]).decode())
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('version')}")
        spec = LayerSpec.from_dict(header["spec"])
        params = {k[len("param/"):]: data[k] for k in data.files if k.startswith("param/")}
    ordered = {k: params[k] for k in param_shapes(spec)}
    check_params(ordered, spec)
    return ordered, spec, header["extra"]
