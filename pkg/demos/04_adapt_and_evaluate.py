"""Miniature end-to-end run: pretrain on the source domain, adapt on the
shifted target domain, and compare 1-NN accuracy before and after.

This uses a deliberately small configuration so it finishes in a couple of
minutes; the acceptance suite runs the full desk-scale version.
"""

import time
from pathlib import Path

from vidadapt.config import config_from_dict
from vidadapt.evaluate import build_index, index_entries_from_split, retrieval_grid
from vidadapt.experiments import ExperimentContext
from vidadapt.model import merge_adapters

out = Path(__file__).parent / "out" / "mini_run"

cfg = config_from_dict({
    "seed": 0,
    "data": {"num_classes": 3, "videos_per_class": 6, "frames_per_video": 16,
             "image_size": 32},
    "model": {"image_size": 32, "patch_size": 8, "embed_dim": 32, "depth": 2, "num_heads": 2,
              "mlp_ratio": 2.0, "head_hidden_dim": 64, "head_bottleneck_dim": 32,
              "num_prototypes": 64},
    "augment": {"global_size": 32, "local_size": 16, "num_local_pairs": 1},
    "sampler": {"delta_min": 1, "delta_max": 5, "pairs_per_video": 3, "batch_size": 16},
    "freeze": {"head_only_epochs": 4, "lora_layers": 1, "full_layers": 1, "lora_rank": 4},
    "train": {"full_epochs": 6, "pretrain_epochs": 30, "lr_pretrain": 1e-3,
              "pretrain_teacher_temp": 0.015, "pretrain_ema_momentum": 0.999,
              "clip_grad_norm": 3.0, "weight_decay": 0.001},
})

t0 = time.time()
ctx = ExperimentContext(cfg, out)
pretrained = ctx.pretrained_params()
print(f"pretraining done in {time.time() - t0:.0f}s")

report = ctx.evaluate_params(pretrained)
print(f"pretrained on target: acc={report['accuracy']:.3f} "
      f"({report['num_train']} train / {report['num_test']} test frames)")

params, adapters = ctx.adapt("video", {})
report_adapted = ctx.evaluate_params(params, adapters)
print(f"adapted on target:    acc={report_adapted['accuracy']:.3f}")

src_pre = ctx.evaluate_params(pretrained, domain="source")["accuracy"]
src_post = ctx.evaluate_params(params, adapters, domain="source")["accuracy"]
print(f"source before/after adaptation: {src_pre:.3f} -> {src_post:.3f} "
      "(specializing forgets the old domain)")

# nearest-neighbour sheet for the adapted model
eff = merge_adapters(params, adapters)
train_e, test_e = index_entries_from_split(ctx.target_split)
tr = build_index(eff, train_e, cfg.model, keep_frames=True)
te = build_index(eff, test_e, cfg.model, keep_frames=True)
retrieval_grid(tr, te, top_k=4, out_png=out / "retrievals.png",
               out_json=out / "retrievals.json")
print(f"wrote {out / 'retrievals.png'}  [total {time.time() - t0:.0f}s]")
