"""Sample temporal frame pairs and push them through the two augmentation
pipelines: global view 1 / global view 2 plus paired local crops.

Also plots the empirical (t, delta) sampling distribution to show both
marginals are uniform.
"""

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from vidadapt.augment import AugmentConfig, global_view_1, global_view_2, local_crop_pair
from vidadapt.data import SynthSpec, generate_video
from vidadapt.rng import derive_rng
from vidadapt.sampler import sample_pair

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

spec = SynthSpec(num_classes=6, videos_per_class=1, frames_per_video=30,
                 image_size=64, domain_tag="target", seed=7)
clip = generate_video(spec, 3, instance_seed=2)
rng = derive_rng(42, 0)
cfg = AugmentConfig()

rows = 5
fig, axes = plt.subplots(rows, 6, figsize=(11, 2 * rows))
for r in range(rows):
    pair = sample_pair(clip, delta_max=10, rng=rng)
    ga = global_view_1(pair.frame_a, cfg, rng)
    gb = global_view_2(pair.frame_b, cfg, rng)
    la, lb = local_crop_pair(pair.frame_a, pair.frame_b, cfg, rng)
    for c, (img, title) in enumerate([
            (pair.frame_a, f"frame t={pair.t}"), (pair.frame_b, f"t+{pair.delta}"),
            (ga, "global view 1"), (gb, "global view 2"),
            (la, "local crop (a)"), (lb, "local crop (b)")]):
        axes[r, c].imshow(img)
        axes[r, c].axis("off")
        if r == 0:
            axes[r, c].set_title(title, fontsize=9)
fig.tight_layout()
fig.savefig(out / "pair_views.png", dpi=110)
plt.close(fig)
print(f"wrote {out / 'pair_views.png'}")

# sampling law: t uniform on {1..T-delta_max}, delta uniform on {1..delta_max}
T, dmax, n = 30, 10, 40_000
counts = np.zeros((T - dmax, dmax))
rng = derive_rng(1, 0)
for _ in range(n):
    p = sample_pair(clip, dmax, rng)
    counts[p.t - 1, p.delta - 1] += 1
fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.2))
ax1.bar(np.arange(1, T - dmax + 1), counts.sum(1) / n)
ax1.axhline(1 / (T - dmax), color="k", ls="--", lw=1)
ax1.set_xlabel("start index t"); ax1.set_ylabel("frequency")
ax2.bar(np.arange(1, dmax + 1), counts.sum(0) / n)
ax2.axhline(1 / dmax, color="k", ls="--", lw=1)
ax2.set_xlabel("offset delta")
fig.suptitle(f"{n} draws, T={T}, delta_max={dmax}")
fig.tight_layout()
fig.savefig(out / "sampling_law.png", dpi=110)
print(f"wrote {out / 'sampling_law.png'}")
