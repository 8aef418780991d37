"""PCP, PDJ and joint-detection average precision."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


class NoPositives(UserWarning):
    pass


@dataclass
class PCPResult:
    rates: dict
    average: float
    skipped: dict


def pcp(estimated, truth, limbs):
    """Fraction of instances per limb with both endpoint errors <= half the true limb length.

    ``limbs`` is a sequence of ``(name, a, b)``.  Instances whose true limb
    has zero length are skipped and tallied in ``skipped``.
    """
    est = np.asarray(estimated, dtype=np.float64)
    tru = np.asarray(truth, dtype=np.float64)
    err = np.linalg.norm(est - tru, axis=-1)
    rates, skipped = {}, {}
    for name, a, b in limbs:
        length = np.linalg.norm(tru[:, a] - tru[:, b], axis=-1)
        valid = length > 0
        skipped[name] = int((~valid).sum())
        ok = (err[:, a] <= 0.5 * length) & (err[:, b] <= 0.5 * length)
        rates[name] = float(ok[valid].mean()) if valid.any() else float("nan")
    vals = [v for v in rates.values() if not np.isnan(v)]
    return PCPResult(rates, float(np.mean(vals)) if vals else float("nan"), skipped)


def pdj_curve(estimated, truth, diameters, fractions, groups=None):
    """Detection rate at each fraction: error < fraction * torso diameter.

    Returns ``{"all": rates, <group>: rates, ...}`` with one rate per fraction.
    """
    est = np.asarray(estimated, dtype=np.float64)
    tru = np.asarray(truth, dtype=np.float64)
    d = np.asarray(diameters, dtype=np.float64)
    if np.any(d <= 0):
        raise ValueError("torso diameters must be positive")
    norm_err = np.linalg.norm(est - tru, axis=-1) / d[:, None]
    fractions = np.asarray(fractions, dtype=np.float64)

    def rates(cols):
        e = norm_err[:, list(cols)].ravel()
        return np.array([(e < f).mean() for f in fractions])

    out = {"all": rates(range(est.shape[1]))}
    for name, cols in (groups or {}).items():
        out[name] = rates(cols)
    return out


def average_precision(scores, positives):
    """All-points interpolated AP.

    Ties keep input order (stable sort).  Returns nan when there are no positives.
    """
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    n_pos = int(positives.sum())
    if n_pos == 0:
        return float("nan")
    order = np.argsort(-scores, kind="stable")
    hits = positives[order]
    tp = np.cumsum(hits)
    precision = tp / np.arange(1, len(hits) + 1)
    recall = tp / n_pos
    # precision envelope, then area over recall steps
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    prev = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev) * envelope))


def detection_ap(likelihoods, labels):
    """Per-joint AP ranking patches by ``likelihoods[:, i]``; positives have label ``i``.

    ``labels`` holds 0 for background and 1..L for joints.  Joints without a
    positive get nan and are left out of the mean (with a warning).
    """
    lik = np.asarray(likelihoods, dtype=np.float64)
    labels = np.asarray(labels)
    n_joints = lik.shape[1] - 1
    ap = np.array([average_precision(lik[:, i], labels == i) for i in range(1, n_joints + 1)])
    missing = np.flatnonzero(np.isnan(ap))
    if len(missing):
        warnings.warn(f"no positives for joints {(missing + 1).tolist()}; excluded from mAP", NoPositives)
    valid = ap[~np.isnan(ap)]
    return ap, float(valid.mean()) if len(valid) else float("nan")


def write_pcp_csv(path, result):
    with open(path, "w") as fh:
        fh.write("limb,pcp,skipped\n")
        for name, rate in result.rates.items():
            fh.write(f"{name},{rate:.6f},{result.skipped[name]}\n")
        fh.write(f"average,{result.average:.6f},0\n")


def write_pdj_csv(path, fractions, curves):
    names = list(curves)
    with open(path, "w") as fh:
        fh.write(",".join(["fraction"] + names) + "\n")
        for k, f in enumerate(fractions):
            fh.write(",".join([f"{f:.4f}"] + [f"{curves[n][k]:.6f}" for n in names]) + "\n")


def write_ap_csv(path, rows, joint_names):
    """``rows`` maps a source name (part/body/dual) to ``(per_joint_ap, mAP)``."""
    with open(path, "w") as fh:
        fh.write(",".join(["source"] + list(joint_names) + ["mAP"]) + "\n")
        for source, (ap, m) in rows.items():
            fh.write(",".join([source] + [f"{100 * a:.1f}" for a in ap] + [f"{100 * m:.1f}"]) + "\n")


def plot_pdj_svg(path, fractions, curves, title="PDJ"):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4, 3.2))
    for name, rates in curves.items():
        ax.plot(fractions, rates, label=name)
    ax.set_xlabel("normalized distance to true joint")
    ax.set_ylabel("detection rate")
    ax.set_ylim(0, 1)
    ax.set_title(title)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
