"""Command line: ``dspose {synth,train,estimate,eval}``.

Exit codes: 0 success, 1 validation error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import dataset as ds
from .config import ConfigError, load_config
from .evaluation import detection_ap, pcp, pdj_curve, plot_pdj_svg, write_ap_csv, write_pcp_csv, write_pdj_csv
from .inference import combine_outputs, estimate_pose, export_heatmaps, oracle_outputs, write_pose_json
from .network import load_checkpoint, save_checkpoint
from .sampling import sliding_windows, torso_diameter
from .training import collect_pairs, train, write_history_csv

log = logging.getLogger("dspose")

TOWERS = {"part": ("part",), "body": ("body",), "dual": ("part", "body")}
PDJ_FRACTIONS = np.round(np.arange(0.0, 0.5001, 0.025), 4)


def _thread_limit():
    n = os.environ.get("DSPOSE_THREADS")
    if not n:
        return contextlib.nullcontext()
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return contextlib.nullcontext()
    return threadpool_limits(int(n))


def _config(args):
    cfg = load_config(args.config, args.set or ())
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def cmd_synth(args):
    cfg = _config(args)
    count = args.count if args.count is not None else cfg.data.count
    manifest, images = ds.synthesize(cfg.figure, count, start=cfg.data.start, fmt=cfg.data.format)
    ds.save_dataset(args.out, manifest, images)
    log.info("wrote %d figures to %s", count, args.out)


def cmd_train(args):
    cfg = _config(args)
    manifest, images, poses = ds.load_dataset(args.dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = cfg.network.layer_spec(manifest.n_joints, TOWERS[args.ablation])
    pairs = collect_pairs(images, poses, manifest.torso_pair, cfg.sampling, cfg.train, spec.input_size)
    log.info("%d training pairs from %d images", len(pairs), len(images))
    extra = {"d_ratio": manifest.d_ratio, "torso_pair": list(manifest.torso_pair)}
    params = velocity = None
    start = 0
    if args.resume:
        params, rspec, rextra = load_checkpoint(args.resume)
        if rspec != spec:
            raise ConfigError("resume checkpoint has a different network layout")
        start = int(rextra.get("epoch", -1)) + 1
        velocity = _load_velocity(args.resume)

    def on_epoch(epoch, p, v, row):
        every = cfg.train.checkpoint_every
        if every and (epoch + 1) % every == 0:
            save_checkpoint(out / f"checkpoint_e{epoch + 1:03d}.npz", p, spec,
                            extra | {"epoch": epoch}, state={f"velocity/{k}": a for k, a in v.items()})

    params, velocity, history = train(pairs, spec, cfg.train, params=params, velocity=velocity,
                                      start_epoch=start, on_epoch=on_epoch)
    save_checkpoint(out / "checkpoint.npz", params, spec, extra | {"epoch": cfg.train.epochs - 1},
                    state={f"velocity/{k}": a for k, a in velocity.items()})
    write_history_csv(out / "loss.csv", history)


def _load_velocity(path):
    with np.load(path) as data:
        v = {k[len("velocity/"):]: data[k] for k in data.files if k.startswith("velocity/")}
    return v or None


def cmd_estimate(args):
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = None
    if args.dataset:
        manifest, images, poses = ds.load_dataset(args.dataset)
        names = [Path(r.image).stem for r in manifest.records]
    else:
        images = [ds.read_image(p) for p in args.images]
        names = [Path(p).stem for p in args.images]
        poses = None
    if args.oracle:
        if poses is None:
            raise ConfigError("--oracle needs --dataset for the ground-truth poses")
        params = spec = None
        d_ratio = manifest.d_ratio
    else:
        if not args.checkpoint:
            raise ConfigError("estimate needs --checkpoint (or --oracle)")
        params, spec, extra = load_checkpoint(args.checkpoint)
        d_ratio = float(extra.get("d_ratio", 0.0))
    if not d_ratio > 0:
        raise ConfigError("no torso-diameter calibration (d_ratio) available")
    results = {}
    for k, (name, img) in enumerate(zip(names, images)):
        height, width = img.shape[:2]
        d = d_ratio * height
        if args.oracle:
            windows = sliding_windows((width, height), d, cfg.sampling)
            lik, loc = oracle_outputs(windows, poses[k])
            est = combine_outputs(windows, lik, loc, (width, height), cfg.inference)
        else:
            est = estimate_pose(img, params, spec, d, cfg.sampling, cfg.inference)
        write_pose_json(out / f"{name}.json", est, image=name)
        results[name] = est.pose.tolist()
        if args.heatmaps:
            export_heatmaps(out / "heatmaps", est.heatmaps, stem=name)
    (out / "poses.json").write_text(json.dumps(results, indent=1))


def cmd_eval(args):
    cfg = _config(args)
    manifest, images, poses = ds.load_dataset(args.dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.estimates:
        est_all = json.loads((Path(args.estimates) / "poses.json").read_text())
        names = [Path(r.image).stem for r in manifest.records]
        missing = [n for n in names if n not in est_all]
        if missing:
            raise ConfigError(f"no estimate for {missing[0]}")
        est = np.array([est_all[n] for n in names], dtype=np.float64)
        truth = np.array(poses)
        result = pcp(est, truth, manifest.limbs)
        write_pcp_csv(out / "pcp.csv", result)
        diam = np.array([torso_diameter(p, manifest.torso_pair) for p in truth])
        curves = pdj_curve(est, truth, diam, PDJ_FRACTIONS, manifest.joint_groups)
        write_pdj_csv(out / "pdj.csv", PDJ_FRACTIONS, curves)
        plot_pdj_svg(out / "pdj.svg", PDJ_FRACTIONS, {"all": curves["all"]})
        plot_pdj_svg(out / "pdj_arms.svg", PDJ_FRACTIONS,
                     {k: curves[k] for k in ("elbows", "wrists") if k in curves}, title="PDJ arms")
    if args.checkpoint:
        rows = {}
        for path in args.checkpoint:
            params, spec, _ = load_checkpoint(path)
            source = next(k for k, v in TOWERS.items() if v == spec.towers)
            if args.ablation and source not in args.ablation:
                continue
            tcfg = replace(cfg.train, background_ratio=float("inf"), pairs_per_image=0)
            pairs = collect_pairs(images, poses, manifest.torso_pair, cfg.sampling, tcfg, spec.input_size)
            lik = detection_likelihoods(params, spec, pairs)
            rows[source] = detection_ap(lik, pairs.joints)
        write_ap_csv(out / "ap.csv", rows, manifest.joint_names)
    if not args.estimates and not args.checkpoint:
        raise ConfigError("eval needs --estimates and/or --checkpoint")


def detection_likelihoods(params, spec, pairs, batch_size=256):
    from .network import forward

    dtype = params["det.W"].dtype
    out = []
    for s in range(0, len(pairs), batch_size):
        part, body = pairs.inputs(np.arange(s, min(s + batch_size, len(pairs))), dtype)
        out.append(forward(params, spec, part, body).likelihoods)
    return np.concatenate(out) if out else np.zeros((0, spec.n_joints + 1))


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI-style run configuration")
    common.add_argument("--seed", type=int, help="seed for generation, sampling and training")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="config override")
    common.add_argument("--out", type=Path, required=True, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="dspose", description="dual-source pose estimation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--count", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="train a network")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--ablation", choices=sorted(TOWERS), default="dual", help="input sources")
    p.add_argument("--resume", type=Path, help="continue from a checkpoint")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("estimate", parents=[common], help="estimate poses")
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--dataset", type=Path)
    p.add_argument("images", nargs="*", type=Path)
    p.add_argument("--heatmaps", action="store_true", help="write one 16-bit PGM per joint")
    p.add_argument("--oracle", action="store_true", help="inject ground-truth network outputs")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("eval", parents=[common], help="PCP/PDJ/AP reports")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--estimates", type=Path, help="directory holding poses.json")
    p.add_argument("--checkpoint", type=Path, action="append", help="checkpoints for detection AP")
    p.add_argument("--ablation", choices=sorted(TOWERS), action="append", help="restrict AP rows")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        with _thread_limit():
            args.func(args)
    except (ConfigError, ds.MalformedManifest) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, RuntimeError, ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
