"""Temporal frame-pair sampling and epoch batch construction.

A pair is built by first drawing the start index t uniformly from
{1, ..., T - delta_max} (1-based) and then the offset delta uniformly from
{delta_min, ..., delta_max}, so t + delta <= T holds for every draw. Clips
shorter than delta_max + 1 frames are rejected outright rather than silently
sampled with a shrunken offset.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SamplingError
from .rng import STREAM_SAMPLER, derive_rng, stable_hash


@dataclass
class SamplerConfig:
    delta_min: int = 1
    delta_max: int = 10
    pairs_per_video: int = 3
    batch_size: int = 32
    seed: int | None = None     # optional override of the experiment seed

    def validate(self):
        if self.delta_min < 1 or self.delta_max < self.delta_min:
            raise ConfigError("need 1 <= delta_min <= delta_max "
                              f"(got {self.delta_min}, {self.delta_max})")
        if self.pairs_per_video < 1:
            raise ConfigError("pairs_per_video must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")


@dataclass
class FramePair:
    video_id: str
    class_id: int
    t: int                      # 1-based start index
    delta: int
    frame_a: np.ndarray
    frame_b: np.ndarray


@dataclass
class RawBatch:
    pairs: list                 # list[FramePair], length = batch size


def sample_pair_ranged(clip, delta_min: int, delta_max: int, rng) -> FramePair:
    """Draw one pair with offset uniform on {delta_min, ..., delta_max}."""
    if delta_min < 1 or delta_max < delta_min:
        raise ConfigError(f"invalid offset range [{delta_min}, {delta_max}]")
    T = clip.num_frames
    if T <= delta_max:
        raise SamplingError(
            f"clip {clip.video_id} has {T} frames; needs more than delta_max={delta_max}")
    t = int(rng.integers(1, T - delta_max + 1))          # uniform on {1..T-delta_max}
    delta = int(rng.integers(delta_min, delta_max + 1))
    return FramePair(video_id=clip.video_id, class_id=clip.class_id, t=t, delta=delta,
                     frame_a=clip.frames[t - 1], frame_b=clip.frames[t - 1 + delta])


def sample_pair(clip, delta_max: int, rng) -> FramePair:
    """Draw one pair with offset uniform on {1, ..., delta_max}."""
    return sample_pair_ranged(clip, 1, delta_max, rng)


def build_epoch(clips: list, cfg: SamplerConfig, seed: int, epoch: int):
    """Yield floor(n * |clips| / v) batches; each clip contributes exactly n pairs.

    Per-pair generators are derived from (seed, epoch, clip id, pair index),
    so a parallel producer would emit the same pairs as this serial loop.
    """
    cfg.validate()
    if not clips:
        raise SamplingError("no clips to sample from")
    too_short = [c.video_id for c in clips if c.num_frames <= cfg.delta_max]
    if too_short:
        raise SamplingError(
            f"clips too short for delta_max={cfg.delta_max}: {', '.join(sorted(too_short))}")

    pairs = []
    for clip in clips:
        for j in range(cfg.pairs_per_video):
            rng = derive_rng(seed, STREAM_SAMPLER, epoch, stable_hash(clip.video_id), j)
            pairs.append(sample_pair_ranged(clip, cfg.delta_min, cfg.delta_max, rng))

    shuffle_rng = derive_rng(seed, STREAM_SAMPLER, epoch, 0xC0FFEE)
    order = shuffle_rng.permutation(len(pairs))
    num_batches = len(pairs) // cfg.batch_size
    for b in range(num_batches):
        idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
        yield RawBatch(pairs=[pairs[i] for i in idx])


def batches_per_epoch(num_clips: int, cfg: SamplerConfig) -> int:
    return (num_clips * cfg.pairs_per_video) // cfg.batch_size
