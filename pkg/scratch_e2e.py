"""Throwaway: tuned end-to-end desk-scale experiment (acceptance candidate config)."""
import json
import sys
import time

import numpy as np

from vidadapt.config import ExperimentConfig, validate_experiment
from vidadapt.evaluate import build_index, index_entries_from_split, knn_accuracy
from vidadapt.experiments import ExperimentContext
from vidadapt.model import init_params, merge_adapters
from vidadapt.rng import derive_rng

t_start = time.time()

cfg = ExperimentConfig()
cfg.data.num_classes = 6
cfg.data.videos_per_class = 16
cfg.data.frames_per_video = 30
cfg.sampler.delta_min = 1
cfg.sampler.delta_max = 10
cfg.loss.teacher_temp = 0.015
cfg.train.pretrain_epochs = int(sys.argv[2]) if len(sys.argv) > 2 else 160
cfg.train.lr_pretrain = 1e-3
cfg.train.pretrain_ema_momentum = 0.998
cfg.train.weight_decay = 0.004
cfg.train.warmup_frac = 0.2
cfg.train.clip_grad_norm = 3.0
validate_experiment(cfg)

out = sys.argv[1] if len(sys.argv) > 1 else "/tmp/e2e"
ctx = ExperimentContext(cfg, out)


def acc(params, adapters=None, domain="target"):
    split = ctx.target_split if domain == "target" else ctx.source_split
    tr_e, te_e = index_entries_from_split(split)
    eff = merge_adapters(params, adapters) if adapters else params
    tr = build_index(eff, tr_e, cfg.model)
    te = build_index(eff, te_e, cfg.model)
    return knn_accuracy(tr, te)


def loo(params, domain="source"):
    split = ctx.target_split if domain == "target" else ctx.source_split
    tr_e, _ = index_entries_from_split(split)
    tr = build_index(params, tr_e, cfg.model)
    V, L = tr.vectors.astype(np.float64), tr.labels
    d = ((V[:, None] - V[None]) ** 2).sum(-1)
    np.fill_diagonal(d, np.inf)
    return float((L[d.argmin(1)] == L).mean())


rand_params = init_params(cfg.model, derive_rng(cfg.seed, 4))
print(f"[{time.time()-t_start:6.0f}s] random-init: src={acc(rand_params, domain='source'):.3f} "
      f"loo={loo(rand_params):.3f} tgt={acc(rand_params):.3f}", flush=True)

pre = ctx.pretrained_params()
lines = [json.loads(l) for l in open(f"{out}/pretrain/metrics.jsonl")]
n = len(lines)
k = max(n // 10, 1)
print("pretrain loss:", " ".join(f"{np.mean([l['loss'] for l in lines[i:i+k]]):.2f}"
                                 for i in range(0, n, k)), flush=True)
print(f"[{time.time()-t_start:6.0f}s] pretrained: src={acc(pre, domain='source'):.3f} "
      f"loo={loo(pre):.3f} tgt={acc(pre):.3f}", flush=True)

for arm, overrides in [("video", {}), ("static", {"augment.static_baseline": True}),
                       ("nohead", {"freeze.head_only_epochs": 0})]:
    t0 = time.time()
    params, adapters = ctx.adapt(arm, overrides)
    a_t = acc(params, adapters)
    a_s = acc(params, adapters, domain="source")
    print(f"[{time.time()-t_start:6.0f}s] {arm}: tgt={a_t:.3f} src={a_s:.3f} "
          f"({time.time()-t0:.0f}s)", flush=True)
