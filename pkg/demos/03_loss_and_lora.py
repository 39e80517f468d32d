"""Poke at the two mathematical ingredients in isolation.

1. The uncertainty weight w(q) = 1 + gamma * H(q): how the entropy of the
   teacher's distribution modulates each pair's contribution.
2. Low-rank adapters: factored (W + AB)x matches the merged forward, the
   update is exactly zero at init, and only a sliver of parameters train.
"""

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from vidadapt.distill import dino_ce, entropy, uwsd_weight
from vidadapt.model import (ViTConfig, default_lora_targets, forward, init_params, inject_lora,
                            merge_adapters)
from vidadapt.rng import derive_rng

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

# --- uncertainty weight over a 2-class simplex ------------------------------
p = np.linspace(1e-4, 1 - 1e-4, 200)
H = np.array([entropy(np.array([x, 1 - x])) for x in p])
plt.figure(figsize=(5, 3.2))
for gamma in (0.0, 0.5, 1.0, 2.0):
    plt.plot(p, 1 + gamma * H, label=f"gamma={gamma}")
plt.xlabel("teacher prob of class 1 (K=2)")
plt.ylabel("pair weight w(q)")
plt.legend(fontsize=8)
plt.tight_layout()
plt.savefig(out / "uwsd_weight.png", dpi=110)
print(f"wrote {out / 'uwsd_weight.png'}")

q = np.full(4, 0.25)
print("uniform K=4: H =", round(entropy(q), 6), " w(gamma=1) =", round(uwsd_weight(q, 1.0), 6))
one_hot = np.array([1.0, 0.0, 0.0, 0.0])
print("one-hot:     H =", entropy(one_hot), "          w(gamma=1) =", uwsd_weight(one_hot, 1.0))
print("ce(q, s) at matching student equals H(q):",
      round(dino_ce(q, 0.1 * np.log(q), 0.1), 6))

# --- adapters ----------------------------------------------------------------
vit = ViTConfig()
rng = derive_rng(0, 0)
params = init_params(vit, rng)
adapters = inject_lora(params, rank=4, targets=default_lora_targets(2), rng=derive_rng(0, 1))

images = derive_rng(0, 2).uniform(0, 1, (2, 64, 64, 3)).astype(np.float32)
_, logits_base = forward(params, None, images, vit)
_, logits_init = forward(params, adapters, images, vit)
print("\nzero-init adapters change nothing:",
      bool(np.array_equal(logits_base, logits_init)))

for ad in adapters.values():
    ad.B = derive_rng(0, 3).normal(0, 0.05, ad.B.shape).astype(np.float32)
_, logits_fact = forward(params, adapters, images, vit)
_, logits_merged = forward(merge_adapters(params, adapters), None, images, vit)
print("factored vs merged max abs diff:",
      float(np.max(np.abs(logits_fact - logits_merged))))

lora_scalars = sum(ad.A.size + ad.B.size for ad in adapters.values())
frozen_scalars = sum(params[t].size for t in adapters)
print(f"adapter scalars: {lora_scalars}  vs frozen attention weights: {frozen_scalars} "
      f"({100 * lora_scalars / frozen_scalars:.1f}%)")
