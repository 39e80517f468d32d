"""Self-distillation losses and teacher bookkeeping.

The teacher's distribution q is produced by centering and sharpening its
logits; the student is trained to match q with a cross-entropy over its own
temperature-softened log-probabilities. Each pair's contribution is scaled by
w(q) = 1 + gamma * H(q), so high-entropy (uncertain) teacher targets count
more. q and w(q) are constants with respect to the gradient: only student
terms propagate.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError


@dataclass
class LossConfig:
    gamma: float = 1.0
    student_temp: float = 0.1
    teacher_temp: float = 0.04
    center_momentum: float = 0.9
    ema_momentum: float = 0.996
    symmetric_views: bool = False

    def validate(self):
        if self.gamma < 0:
            raise ConfigError("gamma must be >= 0")
        if not 0 < self.teacher_temp < self.student_temp:
            raise ConfigError("need 0 < teacher_temp < student_temp, got "
                              f"{self.teacher_temp} vs {self.student_temp}")
        for name in ("center_momentum", "ema_momentum"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {val}")


@dataclass
class TeacherState:
    params: dict                      # dense copy of the student's effective weights
    center: np.ndarray                # [K] running mean of raw teacher logits
    cfg: LossConfig = field(default_factory=LossConfig)


def _softmax(x):
    m = x.max(axis=-1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(x):
    m = x.max(axis=-1, keepdims=True)
    s = x - m
    return s - np.log(np.exp(s).sum(axis=-1, keepdims=True))


def teacher_probs(logits: np.ndarray, state: TeacherState) -> np.ndarray:
    """softmax((logits - center) / teacher_temp); works on [K] or [B, K]."""
    logits = np.asarray(logits)
    if not np.all(np.isfinite(logits)):
        raise NumericError("teacher logits contain non-finite values")
    return _softmax((logits - state.center) / state.cfg.teacher_temp)


def dino_ce(q: np.ndarray, student_logits: np.ndarray, student_temp: float) -> float:
    """-sum_j q_j log softmax(s / temp)_j with a stabilized log-softmax."""
    return float(np.sum(-q * _log_softmax(np.asarray(student_logits) / student_temp), axis=-1))


def entropy(q: np.ndarray) -> float:
    q = np.asarray(q)
    return float(np.sum(np.where(q > 0, -q * np.log(np.where(q > 0, q, 1.0)), 0.0), axis=-1))


def uwsd_weight(q: np.ndarray, gamma: float) -> float:
    return 1.0 + gamma * entropy(q)


def _rows_entropy(q):
    return np.sum(np.where(q > 0, -q * np.log(np.where(q > 0, q, 1.0)), 0.0), axis=-1)


def _rows_ce(q, logits, temp):
    # q: [v, K]; logits: [v, m, K] -> [v, m]
    return np.sum(-q[:, None, :] * _log_softmax(logits / temp), axis=-1)


def uwsd_terms(teacher_q: np.ndarray, student_logits: np.ndarray, cfg: LossConfig) -> dict:
    """Loss plus everything the trainer logs and backpropagates.

    teacher_q: [v, K] probability rows; student_logits: [v, m, K] where m
    counts the student views per pair (global view first, then local crops).
    Returns {loss, weights[v], entropies[v], d_logits[v, m, K]}.
    """
    teacher_q = np.asarray(teacher_q, dtype=np.float64)
    logits = np.asarray(student_logits, dtype=np.float64)
    if teacher_q.ndim != 2 or logits.ndim != 3 or logits.shape[0] != teacher_q.shape[0]:
        raise ConfigError(f"mismatched loss inputs: q {teacher_q.shape}, s {logits.shape}")
    v, m = logits.shape[0], logits.shape[1]
    if v == 0 or m == 0:
        raise ConfigError("uwsd loss needs at least one pair and one student view")
    ent = _rows_entropy(teacher_q)
    weights = 1.0 + cfg.gamma * ent
    ces = _rows_ce(teacher_q, logits, cfg.student_temp)          # [v, m]
    loss = float(np.mean(weights * ces.mean(axis=1)))
    probs = _softmax(logits / cfg.student_temp)
    d_logits = (weights[:, None, None] / (v * m)) * (probs - teacher_q[:, None, :]) / cfg.student_temp
    return {"loss": loss, "weights": weights, "entropies": ent, "d_logits": d_logits}


def uwsd_loss(teacher_q: np.ndarray, student_logits: np.ndarray, cfg: LossConfig) -> float:
    """Batch loss: mean over pairs of w(q) times the mean student-view
    cross-entropy against that pair's teacher distribution."""
    return uwsd_terms(teacher_q, student_logits, cfg)["loss"]


def ema_update(teacher_params: dict, student_params: dict, m: float) -> dict:
    """theta_t <- m * theta_t + (1 - m) * theta_s, elementwise per tensor."""
    if not 0.0 <= m <= 1.0:
        raise ConfigError(f"ema momentum must be in [0, 1], got {m}")
    out = {}
    for key, tv in teacher_params.items():
        sv = student_params[key]
        out[key] = (m * tv + (1.0 - m) * sv).astype(tv.dtype)
    return out


def center_update(center: np.ndarray, batch_teacher_logits: np.ndarray,
                  center_momentum: float) -> np.ndarray:
    """center <- cm * center + (1 - cm) * batch mean of raw teacher logits."""
    if not 0.0 <= center_momentum <= 1.0:
        raise ConfigError(f"center momentum must be in [0, 1], got {center_momentum}")
    batch_mean = np.asarray(batch_teacher_logits).reshape(-1, center.shape[-1]).mean(axis=0)
    return (center_momentum * center + (1.0 - center_momentum) * batch_mean).astype(center.dtype)
