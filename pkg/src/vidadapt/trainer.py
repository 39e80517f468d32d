"""Training orchestration: head-only warmup, staged unfreezing, EMA teacher.

Adaptation runs in two phases. Phase 1 freezes the backbone and trains only a
freshly initialized projection head so its gradients stabilize against the
pretrained embedding space. Phase 2 switches to the staged mask: low-rank
factors plus norms on the leading blocks, full updates on the trailing blocks,
head still training. The teacher follows the student's effective (adapter-
merged) weights by EMA throughout, and its logit center is updated per step.

Source-domain pretraining reuses the same machinery from random init with
every parameter trainable, gamma = 0 and the static (single-frame) pipeline
with symmetric view assignment, standing in for a published foundation
checkpoint.
"""

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .augment import AugmentConfig, augment_batch
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .distill import (LossConfig, TeacherState, center_update, ema_update, teacher_probs,
                      uwsd_terms)
from .errors import ConfigError, TrainingError
from .model import (FreezeSchedule, ViTConfig, backward, default_lora_targets, forward,
                    init_head_params, init_params, inject_lora, merge_adapters, trainable_mask)
from .optim import AdamW, clip_grads, cosine_lr, global_grad_norm
from .rng import STREAM_AUGMENT, STREAM_HEAD_INIT, STREAM_MODEL_INIT, derive_rng
from .sampler import SamplerConfig, batches_per_epoch, build_epoch


@dataclass
class TrainConfig:
    full_epochs: int = 10
    pretrain_epochs: int = 40
    lr_phase1: float = 5e-4
    lr_phase2: float = 1e-4
    lr_pretrain: float = 1e-3
    warmup_frac: float = 0.1
    weight_decay: float = 0.01
    clip_grad_norm: float | None = None
    pretrain_ema_momentum: float | None = None   # falls back to loss ema_momentum
    pretrain_teacher_temp: float | None = None   # falls back to loss teacher_temp
    init_checkpoint: str | None = None

    def validate(self):
        if self.full_epochs < 1:
            raise ConfigError("full_epochs must be >= 1")
        if self.pretrain_epochs < 1:
            raise ConfigError("pretrain_epochs must be >= 1")
        for name in ("lr_phase1", "lr_phase2", "lr_pretrain", "weight_decay"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if not 0.0 <= self.warmup_frac <= 1.0:
            raise ConfigError("warmup_frac must be in [0, 1]")
        if self.clip_grad_norm is not None and self.clip_grad_norm <= 0:
            raise ConfigError("clip_grad_norm must be positive when set")


@dataclass
class TrainState:
    vit: ViTConfig
    loss_cfg: LossConfig
    params: dict
    adapters: dict
    teacher: TeacherState
    opt: AdamW
    mask: set
    phase: str
    epoch: int = 0
    step: int = 0
    clip_grad_norm: float | None = None
    ema_momentum: float | None = None            # override used during pretraining


def train_step(state: TrainState, batch, lr: float) -> tuple:
    """One optimization step on an augmented batch; returns (state, metrics)."""
    vit, loss_cfg = state.vit, state.loss_cfg
    v = batch.num_pairs
    u = batch.num_local_pairs
    teacher_w = state.teacher.params

    if loss_cfg.symmetric_views:
        # one batched pass covers both view directions
        stacked = np.concatenate([batch.globals_a, batch.globals_b], axis=0)
        _, t_logits = forward(teacher_w, None, stacked, vit)
        raw_teacher_logits = t_logits
        q = teacher_probs(t_logits, state.teacher)
        q_a, q_b = q[:v], q[v:]
        _, s_logits, cache_g = forward(state.params, state.adapters, stacked, vit,
                                       want_cache=True)
        s_logits_a, s_logits_b = s_logits[:v], s_logits[v:]
    else:
        _, t_logits_b = forward(teacher_w, None, batch.globals_b, vit)
        raw_teacher_logits = t_logits_b
        q_b = teacher_probs(t_logits_b, state.teacher)
        _, s_logits_a, cache_g = forward(state.params, state.adapters, batch.globals_a, vit,
                                         want_cache=True)

    cache_l = None
    if u > 0:
        s = batch.locals_a.shape[2]
        local_stack = np.concatenate([batch.locals_a, batch.locals_b], axis=1)
        local_flat = local_stack.reshape(v * 2 * u, s, s, -1)
        _, s_logits_l, cache_l = forward(state.params, state.adapters, local_flat, vit,
                                         want_cache=True)
        local_logits = s_logits_l.reshape(v, 2 * u, -1)
    else:
        local_logits = np.zeros((v, 0, vit.num_prototypes), dtype=s_logits_a.dtype)

    views_a = np.concatenate([s_logits_a[:, None, :], local_logits], axis=1)
    if not loss_cfg.symmetric_views:
        terms = uwsd_terms(q_b, views_a, loss_cfg)
        loss = terms["loss"]
        weights, entropies = terms["weights"], terms["entropies"]
        d_global = terms["d_logits"][:, 0]
        d_local = terms["d_logits"][:, 1:]
    else:
        views_b = np.concatenate([s_logits_b[:, None, :], local_logits], axis=1)
        t1 = uwsd_terms(q_b, views_a, loss_cfg)
        t2 = uwsd_terms(q_a, views_b, loss_cfg)
        loss = 0.5 * (t1["loss"] + t2["loss"])
        weights = 0.5 * (t1["weights"] + t2["weights"])
        entropies = 0.5 * (t1["entropies"] + t2["entropies"])
        d_global = 0.5 * np.concatenate([t1["d_logits"][:, 0], t2["d_logits"][:, 0]], axis=0)
        d_local = 0.5 * (t1["d_logits"][:, 1:] + t2["d_logits"][:, 1:])

    if not np.isfinite(loss):
        raise TrainingError(f"non-finite loss at step {state.step} (phase {state.phase})")

    grads = {}

    def accumulate(g):
        for k, val in g.items():
            grads[k] = grads.get(k, 0.0) + val

    accumulate(backward(cache_g, d_global, trainable=state.mask))
    if u > 0:
        accumulate(backward(cache_l, d_local.reshape(v * 2 * u, -1), trainable=state.mask))

    grad_norm = global_grad_norm(grads)
    if state.clip_grad_norm is not None:
        grads = clip_grads(grads, state.clip_grad_norm)
    state.opt.step(state.params, state.adapters, grads, lr)

    m = state.ema_momentum if state.ema_momentum is not None else loss_cfg.ema_momentum
    effective = merge_adapters(state.params, state.adapters)
    state.teacher.params = ema_update(state.teacher.params, effective, m)
    state.teacher.center = center_update(state.teacher.center, raw_teacher_logits,
                                         loss_cfg.center_momentum)
    state.step += 1
    metrics = {
        "step": state.step,
        "phase": state.phase,
        "loss": float(loss),
        "mean_entropy": float(np.mean(entropies)),
        "mean_weight": float(np.mean(weights)),
        "grad_norm": float(grad_norm),
        "lr": float(lr),
    }
    return state, metrics


class MetricsLog:
    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text("")

    def append(self, record: dict):
        with open(self.path, "a") as f:
            f.write(json.dumps(record, sort_keys=True) + "\n")


def _fresh_teacher(params, adapters, loss_cfg, num_prototypes, dtype=np.float32):
    eff = {k: v.copy() for k, v in merge_adapters(params, adapters).items()}
    return TeacherState(params=eff, center=np.zeros(num_prototypes, dtype=dtype), cfg=loss_cfg)


def _check_compat(clips, sampler_cfg: SamplerConfig, vit: ViTConfig):
    if not clips:
        raise ConfigError("empty dataset")
    sizes = {c.frames.shape[1] for c in clips} | {c.frames.shape[2] for c in clips}
    if sizes != {vit.image_size}:
        raise ConfigError(f"clip frame sizes {sizes} do not match model image_size {vit.image_size}")
    short = [c.video_id for c in clips if c.num_frames <= sampler_cfg.delta_max]
    if short:
        raise ConfigError(f"{len(short)} clip(s) shorter than delta_max+1; "
                          f"first: {short[0]}")
    if batches_per_epoch(len(clips), sampler_cfg) < 1:
        raise ConfigError("batch_size exceeds pairs per epoch; no full batch can be formed")


def _run_epochs(state, clips, sampler_cfg, aug_cfg, seed, epochs, base_lr, warmup_frac,
                log, phase_steps=None):
    n_batches = batches_per_epoch(len(clips), sampler_cfg)
    total = phase_steps if phase_steps is not None else len(epochs) * n_batches
    step_in_phase = 0
    sampler_seed = sampler_cfg.seed if sampler_cfg.seed is not None else seed
    for epoch in epochs:
        state.epoch = epoch
        for b, raw in enumerate(build_epoch(clips, sampler_cfg, sampler_seed, epoch)):
            aug_rng = derive_rng(seed, STREAM_AUGMENT, epoch, b)
            batch = augment_batch(raw, aug_cfg, aug_rng)
            lr = cosine_lr(step_in_phase, total, base_lr, warmup_frac)
            try:
                state, metrics = train_step(state, batch, lr)
            except TrainingError as exc:
                raise TrainingError(f"{exc} [epoch {epoch}, batch {b}]") from exc
            log.append(metrics)
            step_in_phase += 1
    return state


def _make_ckpt(state, seed, config_dict) -> Checkpoint:
    return Checkpoint(config=config_dict, phase=state.phase, epoch=state.epoch,
                      step=state.step, seed=seed,
                      params={k: v.copy() for k, v in state.params.items()},
                      adapters=copy.deepcopy(state.adapters),
                      teacher_params={k: v.copy() for k, v in state.teacher.params.items()},
                      center=state.teacher.center.copy())


def pretrain_source(vit: ViTConfig, schedule: FreezeSchedule, loss_cfg: LossConfig,
                    train_cfg: TrainConfig, sampler_cfg: SamplerConfig,
                    aug_cfg: AugmentConfig, clips, seed: int, out_dir) -> Path:
    """Self-distillation pretraining from random init on the source corpus.

    Runs with gamma = 0, the static single-frame pipeline, and symmetric view
    assignment; produces the checkpoint the adaptation stage starts from.
    """
    train_cfg.validate()
    vit.validate()
    out_dir = Path(out_dir)
    sampler_cfg.validate()
    _check_compat(clips, sampler_cfg, vit)

    pre_tt = (train_cfg.pretrain_teacher_temp if train_cfg.pretrain_teacher_temp is not None
              else loss_cfg.teacher_temp)
    pre_loss = LossConfig(gamma=0.0, student_temp=loss_cfg.student_temp,
                          teacher_temp=pre_tt,
                          center_momentum=loss_cfg.center_momentum,
                          ema_momentum=loss_cfg.ema_momentum, symmetric_views=True)
    pre_aug = copy.deepcopy(aug_cfg)
    pre_aug.static_baseline = True
    pre_aug.motion_sim = False

    params = init_params(vit, derive_rng(seed, STREAM_MODEL_INIT), np.float32)
    mask = set(params)
    opt = AdamW(mask, params, {}, weight_decay=train_cfg.weight_decay)
    state = TrainState(vit=vit, loss_cfg=pre_loss, params=params, adapters={},
                       teacher=_fresh_teacher(params, {}, pre_loss, vit.num_prototypes),
                       opt=opt, mask=mask, phase="pretrain",
                       clip_grad_norm=train_cfg.clip_grad_norm,
                       ema_momentum=train_cfg.pretrain_ema_momentum)
    log = MetricsLog(out_dir / "metrics.jsonl")
    state = _run_epochs(state, clips, sampler_cfg, pre_aug, seed,
                        range(train_cfg.pretrain_epochs), train_cfg.lr_pretrain,
                        train_cfg.warmup_frac, log)
    ckpt_path = out_dir / "checkpoints" / "pretrain.ckpt"
    save_checkpoint(ckpt_path, _make_ckpt(state, seed, {"vit": vars(vit)}))
    return ckpt_path


def run_pipeline(vit: ViTConfig, schedule: FreezeSchedule, loss_cfg: LossConfig,
                 train_cfg: TrainConfig, sampler_cfg: SamplerConfig,
                 aug_cfg: AugmentConfig, clips, seed: int, out_dir,
                 init_params_dict: dict | None = None, resume_from=None) -> dict:
    """Two-phase adaptation; returns paths of the checkpoints and metrics log.

    The student starts from the supplied pretrained backbone weights with a
    freshly initialized head. `resume_from` may point at the phase-boundary
    checkpoint to continue with phase 2 only; the continuation is bit-exact
    against a straight-through run because all randomness is derived from
    (seed, epoch, batch) rather than sequential generator state.
    """
    train_cfg.validate()
    vit.validate()
    schedule.validate(vit.depth)
    loss_cfg.validate()
    sampler_cfg.validate()
    _check_compat(clips, sampler_cfg, vit)
    out_dir = Path(out_dir)
    config_dict = {"vit": vars(vit), "freeze": vars(schedule)}
    n_batches = batches_per_epoch(len(clips), sampler_cfg)

    if resume_from is None:
        if init_params_dict is None:
            raise ConfigError("adaptation requires pretrained weights (or resume_from)")
        params = {k: v.copy() for k, v in init_params_dict.items()}
        params.update(init_head_params(vit, derive_rng(seed, STREAM_HEAD_INIT), np.float32))
        log = MetricsLog(out_dir / "metrics.jsonl")
        mask1 = trainable_mask(schedule, "head_only", vit.depth, params)
        state = TrainState(vit=vit, loss_cfg=loss_cfg, params=params, adapters={},
                           teacher=_fresh_teacher(params, {}, loss_cfg, vit.num_prototypes),
                           opt=AdamW(mask1, params, {}, weight_decay=train_cfg.weight_decay),
                           mask=mask1, phase="head_only",
                           clip_grad_norm=train_cfg.clip_grad_norm)
        state = _run_epochs(state, clips, sampler_cfg, aug_cfg, seed,
                            range(schedule.head_only_epochs), train_cfg.lr_phase1,
                            train_cfg.warmup_frac, log,
                            phase_steps=schedule.head_only_epochs * n_batches)
        boundary_path = out_dir / "checkpoints" / "phase1.ckpt"
        save_checkpoint(boundary_path, _make_ckpt(state, seed, config_dict))
    else:
        ck = load_checkpoint(resume_from)
        params = ck.params
        log = MetricsLog(out_dir / "metrics.jsonl")
        state = TrainState(vit=vit, loss_cfg=loss_cfg, params=params, adapters={},
                           teacher=TeacherState(params=ck.teacher_params, center=ck.center,
                                                cfg=loss_cfg),
                           opt=AdamW(set(), params, {}), mask=set(), phase=ck.phase,
                           epoch=ck.epoch, step=ck.step,
                           clip_grad_norm=train_cfg.clip_grad_norm)
        boundary_path = Path(resume_from)

    # phase 2: staged unfreezing with low-rank adapters on the leading blocks
    state.phase = "staged"
    if schedule.lora_layers > 0:
        state.adapters = inject_lora(state.params, schedule.lora_rank,
                                     default_lora_targets(schedule.lora_layers),
                                     derive_rng(seed, STREAM_MODEL_INIT, 1))
    mask2 = trainable_mask(schedule, "staged", vit.depth, state.params, state.adapters)
    state.mask = mask2
    state.opt = AdamW(mask2, state.params, state.adapters, weight_decay=train_cfg.weight_decay)
    epochs = range(schedule.head_only_epochs, schedule.head_only_epochs + train_cfg.full_epochs)
    state = _run_epochs(state, clips, sampler_cfg, aug_cfg, seed, epochs,
                        train_cfg.lr_phase2, train_cfg.warmup_frac, log,
                        phase_steps=train_cfg.full_epochs * n_batches)
    final_path = out_dir / "checkpoints" / "final.ckpt"
    save_checkpoint(final_path, _make_ckpt(state, seed, config_dict))
    return {"phase1_checkpoint": str(boundary_path), "final_checkpoint": str(final_path),
            "metrics": str(out_dir / "metrics.jsonl"), "steps": state.step}
