"""Throwaway: pretrain hyperparameter sweep."""
import json
import sys
import time

import numpy as np

from vidadapt.checkpoint import load_checkpoint
from vidadapt.config import ExperimentConfig, validate_experiment
from vidadapt.data import generate_dataset, split_dataset
from vidadapt.evaluate import build_index, index_entries_from_split, knn_accuracy
from vidadapt.experiments import domain_spec
from vidadapt.model import init_params
from vidadapt.rng import derive_rng
from vidadapt.trainer import pretrain_source

lr, ema, wd, tt, epochs, vids, out = (float(sys.argv[1]), float(sys.argv[2]),
                                       float(sys.argv[3]), float(sys.argv[4]),
                                       int(sys.argv[5]), int(sys.argv[6]), sys.argv[7])
cfg = ExperimentConfig()
cfg.data.num_classes = 6
cfg.data.videos_per_class = vids
cfg.data.frames_per_video = 30
cfg.train.lr_pretrain = lr
cfg.train.pretrain_ema_momentum = ema
cfg.train.pretrain_teacher_temp = tt
cfg.train.weight_decay = wd
cfg.train.warmup_frac = 0.15
cfg.train.clip_grad_norm = 3.0
cfg.train.pretrain_epochs = epochs
validate_experiment(cfg)

t0 = time.time()
src_clips = generate_dataset(domain_spec(cfg, "source"))
src_split = split_dataset(src_clips, 0.75, cfg.seed)
tr_e, te_e = index_entries_from_split(src_split)


def measure(params):
    tr = build_index(params, tr_e, cfg.model)
    te = build_index(params, te_e, cfg.model)
    V, L = tr.vectors.astype(np.float64), tr.labels
    d = ((V[:, None] - V[None]) ** 2).sum(-1)
    np.fill_diagonal(d, np.inf)
    return float((L[d.argmin(1)] == L).mean()), knn_accuracy(tr, te)


rand = init_params(cfg.model, derive_rng(cfg.seed, 4))
r_loo, r_te = measure(rand)
path = pretrain_source(cfg.model, cfg.freeze, cfg.loss, cfg.train, cfg.sampler, cfg.augment,
                       src_split.train, cfg.seed, out)
p_loo, p_te = measure(load_checkpoint(path).params)
lines = [json.loads(l) for l in open(f"{out}/metrics.jsonl")]
n = len(lines)
k = max(n // 8, 1)
traj = " ".join(f"{sum(x['loss'] for x in lines[i:i+k])/len(lines[i:i+k]):.2f}"
                for i in range(0, n, k))
print(f"lr={lr} m={ema} wd={wd} tt={tt} ep={epochs} vids={vids}: rand loo/te={r_loo:.2f}/{r_te:.2f} "
      f"pre loo/te={p_loo:.2f}/{p_te:.2f} loss: {traj}  [{time.time()-t0:.0f}s]")
