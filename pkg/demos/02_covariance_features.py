# From SLC stack to the 3n-channel covariance feature stack.
#
# Ground steering removes the terrain phase so the ground response sits
# at z = 0 everywhere. A clamped 9x9 window then estimates the per-pixel
# covariance; the learned pipeline keeps only the diagonal and the
# complex master row, 3n real channels per pixel.

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

import tomochm as tc

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

geometry = tc.synthetic_geometry(7, 3.0)
scene = tc.SceneSpec(shape=(96, 96),
                     dtm=tc.RasterRecipe("ramp", start=0.0, stop=15.0, axis=0),
                     chm=tc.RasterRecipe("blocks", values=(10.0, 25.0),
                                         block=24),
                     speckle=True, snr_db=20.0, rng_seed=42)
stack, dtm, chm = tc.synthesize_slc_stack(scene, geometry)

steered = tc.ground_steer(stack, dtm)
cov = tc.estimate_covariance(steered, window=(9, 9))
features = tc.extract_features(cov)
print("feature stack:", features.data.shape, "(H, W, 3n) with n = 7")

# master-vs-image-5 coherence: canopy blocks decorrelate more than ground
norm = tc.estimate_covariance(steered, window=(9, 9), normalized=True)
coherence = np.abs(norm.data[:, :, 0, 5])

# the paper-style subset study slices the same features to n images
for n in (3, 7):
    sel = tc.select_subset(n, stack.n_images, seed=42)
    sliced = tc.slice_features(features, sel)
    print(f"n={n}: indices {sel.indices} -> {sliced.data.shape[-1]} channels")

fig, axes = plt.subplots(1, 4, figsize=(16, 4))
axes[0].imshow(features.data[..., 0], cmap="gray")
axes[0].set_title("variance, master")
axes[1].imshow(features.data[..., 7 + 5], cmap="coolwarm")
axes[1].set_title("Re cov(master, img 5)")
axes[2].imshow(features.data[..., 14 + 5], cmap="coolwarm")
axes[2].set_title("Im cov(master, img 5)")
im = axes[3].imshow(coherence, cmap="magma", vmin=0, vmax=1)
axes[3].set_title("|coherence| (0,5)")
fig.colorbar(im, ax=axes[3], shrink=0.8)
for ax in axes:
    ax.set_xticks([]), ax.set_yticks([])
fig.tight_layout()
fig.savefig(out / "02_features.png", dpi=110)
print("wrote", out / "02_features.png")
