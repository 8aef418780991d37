"""
Estimating poses and scoring them
=================================

Needs ``toy.npz`` from 02_train_toy_net.py.  Figures are drawn from an index
range the training set never touched.
"""
import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from dspose.synth import FigureConfig, LIMBS, JOINT_GROUPS, TORSO_PAIR, BONES
from dspose.dataset import synthesize
from dspose.sampling import SamplingConfig, torso_diameter
from dspose.network import load_checkpoint
from dspose.inference import InferenceConfig, estimate_pose
from dspose.evaluation import pcp, pdj_curve

params, spec, extra = load_checkpoint("toy.npz")
fig_cfg = FigureConfig()
manifest, images = synthesize(fig_cfg, 20, start=100_000)
truth = np.array([manifest.pose(i) for i in range(20)])

# at test time the torso diameter is not known, so use the training average
d = extra["d_ratio"] * fig_cfg.image_size[1]
ests = [estimate_pose(img, params, spec, d, SamplingConfig(), InferenceConfig()) for img in images]
est = np.array([e.pose for e in ests])

res = pcp(est, truth, LIMBS)
for name, r in res.rates.items():
    print("%-12s %.2f" % (name, r))
print("PCP average %.3f" % res.average)

diam = np.array([torso_diameter(p, TORSO_PAIR) for p in truth])
fr = np.linspace(0, 0.5, 21)
curves = pdj_curve(est, truth, diam, fr, JOINT_GROUPS)
print("PDJ@0.2 %.2f  PDJ@0.5 %.2f" % (curves["all"][8], curves["all"][-1]))

f, axs = plt.subplots(1, 4, figsize=(10, 3))
for ax, k in zip(axs[:3], range(3)):
    ax.imshow(images[k])
    for a, b in BONES:
        ax.plot(est[k, [a, b], 0] - 0.5, est[k, [a, b], 1] - 0.5, "w-", lw=1)
    ax.set_axis_off()
# summed heatmap of the first image
axs[3].imshow(ests[0].heatmaps.sum(0), cmap="magma")
axs[3].set_axis_off()
f.savefig("estimates.png", dpi=100, bbox_inches="tight")
