"""Shared test utilities: tiny networks and a finite-difference gradient oracle."""
import numpy as np

from dspose.network import ConvSpec, LayerSpec, ShapeMismatch, backward, forward, init_params
from dspose.training import batch_losses, loss_gradients


def tiny_spec(seed=0, towers=("part", "body"), n_joints=3):
    rng = np.random.default_rng(seed)
    convs = lambda: tuple(ConvSpec(int(rng.integers(2, 4)), int(rng.choice([3, 5])),
                                   stride=int(rng.choice([1, 1, 2])), pool=bool(rng.random() < 0.5))
                          for _ in range(int(rng.integers(1, 3))))
    while True:
        spec = LayerSpec(n_joints=n_joints, input_size=8, part_convs=convs(), body_convs=convs(),
                         fc_widths=(int(rng.integers(4, 8)),), towers=towers)
        try:
            spec.feature_width()
        except ShapeMismatch:
            continue
        return spec


def random_batch(spec, rng, batch=4):
    n = spec.input_size
    part = rng.random((batch, n, n, 3))
    body = rng.random((batch, n, n, 4))
    body[..., 3] = rng.random((batch, n, n)) < 0.4
    joints = rng.integers(0, spec.n_joints + 1, batch)
    joints[0] = 0
    targets = rng.uniform(-0.5, 0.5, (batch, 2))
    return part, body, joints, targets


def loss_value(params, spec, part, body, joints, targets, lambda_d):
    out = forward(params, spec, part, body)
    det, loc = batch_losses(out.likelihoods, out.locations, joints, targets)
    return lambda_d * det.sum() + loc.sum()


def analytic_grads(params, spec, part, body, joints, targets, lambda_d):
    out = forward(params, spec, part, body, keep_cache=True)
    dl, dz = loss_gradients(out.likelihoods, out.locations, joints, targets, lambda_d)
    return backward(params, spec, out.cache, dl, dz)


def numeric_grads(params, spec, part, body, joints, targets, lambda_d, step=1e-5):
    """Central differences over every parameter entry."""
    grads = {}
    for name, value in params.items():
        g = np.zeros_like(value)
        for idx in np.ndindex(value.shape):
            old = value[idx]
            value[idx] = old + step
            up = loss_value(params, spec, part, body, joints, targets, lambda_d)
            value[idx] = old - step
            down = loss_value(params, spec, part, body, joints, targets, lambda_d)
            value[idx] = old
            g[idx] = (up - down) / (2 * step)
        grads[name] = g
    return grads


def max_relative_error(a, b, floor=1e-8):
    worst = 0.0
    for name in a:
        num = np.abs(a[name] - b[name])
        den = np.maximum(np.maximum(np.abs(a[name]), np.abs(b[name])), floor)
        worst = max(worst, float((num / den).max()))
    return worst


def random_params(spec, seed):
    params = init_params(spec, seed)
    rng = np.random.default_rng(seed + 1000)
    for k in params:
        if k.endswith(".b"):
            params[k] = rng.normal(0, 0.1, params[k].shape)
    return params
