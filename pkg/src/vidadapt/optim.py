"""Decoupled-weight-decay Adam and the warmup/cosine learning-rate schedule."""

import numpy as np

from .model import get_param, is_lora_key, set_param


def decay_applies(key: str) -> bool:
    """Weight decay hits dense weight matrices only; biases, norms, tokens,
    positional embeddings and adapter factors are exempt."""
    return not is_lora_key(key) and (key.endswith(".w") or key == "head.protos.v")


class AdamW:
    def __init__(self, keys, params, adapters, betas=(0.9, 0.999), eps=1e-8,
                 weight_decay=0.0):
        self.keys = sorted(keys)
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(get_param(params, adapters, k)) for k in self.keys}
        self.v = {k: np.zeros_like(get_param(params, adapters, k)) for k in self.keys}

    def step(self, params, adapters, grads, lr):
        self.t += 1
        b1, b2 = self.betas
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for k in self.keys:
            g = grads.get(k)
            if g is None:
                continue
            p = get_param(params, adapters, k)
            g = g.astype(p.dtype, copy=False)
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * (g * g)
            update = (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)
            if self.weight_decay and decay_applies(k):
                update = update + self.weight_decay * p
            set_param(params, adapters, k, (p - lr * update).astype(p.dtype))


def cosine_lr(step: int, total_steps: int, base_lr: float, warmup_frac: float) -> float:
    """Linear warmup for the first warmup_frac of steps, cosine decay to zero after."""
    if total_steps <= 0:
        return base_lr
    warmup = int(round(total_steps * warmup_frac))
    if step < warmup:
        return base_lr * (step + 1) / warmup
    span = max(total_steps - warmup, 1)
    progress = (step - warmup) / span
    return base_lr * 0.5 * (1.0 + float(np.cos(np.pi * progress)))


def global_grad_norm(grads: dict) -> float:
    total = 0.0
    for g in grads.values():
        total += float(np.sum(np.asarray(g, dtype=np.float64) ** 2))
    return float(np.sqrt(total))


def clip_grads(grads: dict, max_norm: float) -> dict:
    norm = global_grad_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return grads
    scale = max_norm / norm
    return {k: (g * scale).astype(g.dtype) for k, g in grads.items()}
