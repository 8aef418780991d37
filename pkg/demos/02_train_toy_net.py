"""
Training the toy dual-source net
================================

A few hundred synthetic figures are enough to see the loss fall.  The
checkpoint written here is picked up by 03_estimate_and_score.py.

Run with a number to change the dataset size: ``python 02_train_toy_net.py 800``
"""
import sys
import time
import logging

import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from dspose.synth import FigureConfig
from dspose.dataset import synthesize
from dspose.sampling import SamplingConfig
from dspose.network import LayerSpec, save_checkpoint
from dspose.training import TrainConfig, collect_pairs, train

logging.basicConfig(level=logging.INFO, format="%(message)s")
n_images = int(sys.argv[1]) if len(sys.argv) > 1 else 300

manifest, images = synthesize(FigureConfig(), n_images)
poses = [manifest.pose(i) for i in range(n_images)]

# float32 + momentum keeps this to a couple of minutes on one core
cfg = TrainConfig(epochs=4, learning_rate=0.01, momentum=0.9, decay_every=3,
                  dtype="float32", pairs_per_image=12)
pairs = collect_pairs(images, poses, manifest.torso_pair, SamplingConfig(), cfg)
print(len(pairs), "pairs; label histogram", np.bincount(pairs.joints))

spec = LayerSpec()
t = time.time()
params, _, hist = train(pairs, spec, cfg)
print("trained in %.0f s" % (time.time() - t))

save_checkpoint("toy.npz", params, spec, extra={"d_ratio": manifest.d_ratio})

hist = np.array(hist)
plt.plot(hist[:, 0], hist[:, 2] * cfg.lambda_d, label="4 x detection")
plt.plot(hist[:, 0], hist[:, 3], label="localization")
plt.xlabel("epoch")
plt.legend()
plt.savefig("loss.png", dpi=100)
