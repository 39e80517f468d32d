import numpy as np
import pytest
from scipy import stats

from vidadapt.data import SynthSpec, generate_video
from vidadapt.errors import ConfigError, SamplingError
from vidadapt.rng import derive_rng
from vidadapt.sampler import (RawBatch, SamplerConfig, batches_per_epoch, build_epoch,
                              sample_pair, sample_pair_ranged)


def make_clip(T, class_id=0, seed=0):
    spec = SynthSpec(num_classes=2, videos_per_class=1, frames_per_video=T, image_size=32,
                     domain_tag="source", seed=17)
    return generate_video(spec, class_id, seed)


def test_pair_within_bounds(rng):
    clip = make_clip(10)
    for _ in range(500):
        p = sample_pair(clip, 3, rng)
        assert 1 <= p.t <= 7
        assert 1 <= p.delta <= 3
        assert p.t + p.delta <= 10
        assert np.array_equal(p.frame_a, clip.frames[p.t - 1])
        assert np.array_equal(p.frame_b, clip.frames[p.t - 1 + p.delta])


def test_minimal_clip_single_outcome(rng):
    clip = make_clip(2)
    for _ in range(20):
        p = sample_pair(clip, 1, rng)
        assert (p.t, p.delta) == (1, 1)


def test_too_short_clip_rejected(rng):
    clip = make_clip(5)
    with pytest.raises(SamplingError, match="delta_max"):
        sample_pair(clip, 5, rng)


def test_chi_square_uniformity():
    # 100k draws over the 7x3 (t, delta) grid at significance 0.01
    clip = make_clip(10)
    rng = derive_rng(99, 0)
    counts = np.zeros((7, 3))
    n = 100_000
    for _ in range(n):
        p = sample_pair(clip, 3, rng)
        counts[p.t - 1, p.delta - 1] += 1
    expected = n / 21
    chi2 = ((counts - expected) ** 2 / expected).sum()
    assert chi2 < stats.chi2.ppf(0.99, df=20), f"chi2={chi2:.1f}"


def test_ranged_fixed_offset(rng):
    clip = make_clip(20)
    for _ in range(100):
        p = sample_pair_ranged(clip, 5, 5, rng)
        assert p.delta == 5


def test_ranged_frequencies():
    clip = make_clip(20)
    rng = derive_rng(5, 0)
    deltas = [sample_pair_ranged(clip, 5, 10, rng).delta for _ in range(10_000)]
    counts = np.bincount(deltas, minlength=11)[5:11]
    freqs = counts / 10_000
    assert np.all(np.abs(freqs - 1 / 6) <= 0.02), freqs


def test_ranged_invalid_range(rng):
    clip = make_clip(20)
    with pytest.raises(ConfigError):
        sample_pair_ranged(clip, 0, 3, rng)
    with pytest.raises(ConfigError):
        sample_pair_ranged(clip, 4, 3, rng)


def make_clips(n, T=12):
    return [make_clip(T, class_id=i % 2, seed=i) for i in range(n)]


def test_epoch_batch_counts():
    clips = make_clips(8)
    cfg = SamplerConfig(delta_min=1, delta_max=3, pairs_per_video=3, batch_size=6)
    batches = list(build_epoch(clips, cfg, seed=0, epoch=0))
    assert len(batches) == 4 == batches_per_epoch(8, cfg)
    assert all(len(b.pairs) == 6 for b in batches)


def test_epoch_identity_case():
    clips = make_clips(5)
    cfg = SamplerConfig(delta_max=3, pairs_per_video=1, batch_size=5)
    batches = list(build_epoch(clips, cfg, seed=0, epoch=0))
    assert len(batches) == 1
    assert sorted(p.video_id for p in batches[0].pairs) == sorted(c.video_id for c in clips)


def test_epoch_each_video_n_times():
    clips = make_clips(8)
    cfg = SamplerConfig(delta_max=3, pairs_per_video=3, batch_size=6)
    tally = {}
    for batch in build_epoch(clips, cfg, seed=0, epoch=0):
        for p in batch.pairs:
            tally[p.video_id] = tally.get(p.video_id, 0) + 1
    assert set(tally.values()) == {3}
    assert len(tally) == 8


def test_epoch_rejects_short_clips():
    clips = make_clips(4, T=12) + [make_clip(3, seed=50)]
    cfg = SamplerConfig(delta_max=5, pairs_per_video=1, batch_size=4)
    with pytest.raises(SamplingError, match=clips[-1].video_id):
        list(build_epoch(clips, cfg, seed=0, epoch=0))


def test_epoch_deterministic():
    clips = make_clips(6)
    cfg = SamplerConfig(delta_max=3, pairs_per_video=2, batch_size=4)

    def flatten(epoch):
        return [(p.video_id, p.t, p.delta)
                for b in build_epoch(clips, cfg, seed=4, epoch=epoch) for p in b.pairs]

    assert flatten(0) == flatten(0)
    assert flatten(0) != flatten(1)


def test_epoch_invariant_to_clip_order():
    clips = make_clips(6)
    cfg = SamplerConfig(delta_max=3, pairs_per_video=2, batch_size=4)

    def draws(cs):
        out = {}
        for b in build_epoch(cs, cfg, seed=4, epoch=0):
            for p in b.pairs:
                out.setdefault(p.video_id, []).append((p.t, p.delta))
        return {k: sorted(v) for k, v in out.items()}

    assert draws(clips) == draws(list(reversed(clips)))
