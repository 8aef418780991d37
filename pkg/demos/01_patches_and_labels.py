"""
Patches, pairs and labels on one synthetic figure
=================================================

Draw a figure, sample candidate boxes around it, keep the part-sized ones
and see which joint each part patch gets labelled with.
"""
import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
from matplotlib.patches import Rectangle

from dspose.synth import FigureConfig, generate_figure, JOINT_NAMES, TORSO_PAIR
from dspose.sampling import SamplingConfig, stub_proposals, filter_part_patches, filter_body_patches, torso_diameter
from dspose.labeling import build_training_pairs

img, pose = generate_figure(FigureConfig(), index=7)
d = torso_diameter(pose, TORSO_PAIR)
print("image", img.shape, "torso diameter %.1f px" % d)

cfg = SamplingConfig()
cands = stub_proposals((img.shape[1], img.shape[0]), pose, d, cfg, index=7)
parts = filter_part_patches(cands, d, cfg)
bodies = filter_body_patches(cands, pose)
print(len(cands), "proposals ->", len(parts), "part patches,", len(bodies), "body patches")

pairs = build_training_pairs(parts, bodies, pose, seed=0, index=7)
labels = np.array([lab.joint for _, lab in pairs])
counts = np.bincount(labels, minlength=len(JOINT_NAMES) + 1)
print("background:", counts[0])
for name, c in zip(JOINT_NAMES, counts[1:]):
    print("  %-11s %d" % (name, c))

# a handful of pairs drawn over the image; squares are after crop + extend
fig, ax = plt.subplots(figsize=(4, 4))
ax.imshow(img)
ax.plot(pose[:, 0] - 0.5, pose[:, 1] - 0.5, "w.", ms=4)
for (pair, lab) in pairs[:12]:
    x0, y0, x1, y1 = pair.part.corners
    ax.add_patch(Rectangle((x0 - 0.5, y0 - 0.5), x1 - x0, y1 - y0, fill=False, ec="w" if lab.joint else "k", lw=0.7))
ax.set_axis_off()
fig.savefig("patches.png", dpi=120, bbox_inches="tight")
print("wrote patches.png")
