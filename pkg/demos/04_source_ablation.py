"""
Which input source matters?
===========================

Train part-only, body-only and dual nets on the same pairs and compare
joint-detection AP on held-out pairs (all background pairs kept).
"""
import numpy as np

from dspose.synth import FigureConfig, JOINT_NAMES
from dspose.dataset import synthesize
from dspose.sampling import SamplingConfig
from dspose.network import LayerSpec
from dspose.training import TrainConfig, collect_pairs, train
from dspose.evaluation import detection_ap
from dspose.cli import detection_likelihoods

n_train, n_test = 400, 40
man, imgs = synthesize(FigureConfig(), n_train)
tman, timgs = synthesize(FigureConfig(), n_test, start=100_000)
poses = [man.pose(i) for i in range(n_train)]
tposes = [tman.pose(i) for i in range(n_test)]

cfg = TrainConfig(epochs=4, learning_rate=0.01, momentum=0.9, decay_every=3, dtype="float32", pairs_per_image=12)
pairs = collect_pairs(imgs, poses, man.torso_pair, SamplingConfig(), cfg)
held = collect_pairs(timgs, tposes, man.torso_pair, SamplingConfig(),
                     TrainConfig(background_ratio=np.inf), start_index=100_000)
print(len(pairs), "training pairs,", len(held), "held-out pairs")

rows = {}
for name, towers in [("part", ("part",)), ("body", ("body",)), ("dual", ("part", "body"))]:
    spec = LayerSpec(towers=towers)
    params, _, _ = train(pairs, spec, cfg)
    rows[name] = detection_ap(detection_likelihoods(params, spec, held), held.joints)

print("%-6s" % "", " ".join("%6s" % n[:6] for n in JOINT_NAMES), "   mAP")
for name, (ap, m) in rows.items():
    print("%-6s" % name, " ".join("%6.1f" % (100 * a) for a in ap), "%6.1f" % (100 * m))
