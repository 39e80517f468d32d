import numpy as np
import pytest

from vidadapt.augment import (AugmentConfig, augment_batch, color_jitter, crop_params,
                              draw_motion_params, global_view_1, global_view_2,
                              local_crop_pair, motion_sim, solarize)
from vidadapt.data import SynthSpec, generate_video
from vidadapt.errors import ConfigError
from vidadapt.imageops import affine_warp, resize_bilinear
from vidadapt.rng import derive_rng
from vidadapt.sampler import SamplerConfig, build_epoch


def photometric_off(**kw):
    base = dict(global_size=32, local_size=16, global_scale=(1.0, 1.0), crop_ratio=(1.0, 1.0),
                flip_p=0.0, jitter_strength=0.0, grayscale_p=0.0,
                blur_p_view1=1.0, blur_p_view2=0.0, blur_p_local=0.0,
                blur_sigma=(1e-9, 1e-9), solarize_p=0.0)
    base.update(kw)
    return AugmentConfig(**base)


def probe_frame(size=32, seed=0):
    rng = derive_rng(seed, 42)
    return rng.uniform(0, 1, (size, size, 3)).astype(np.float32)


def test_identity_limit():
    # full-frame crop, photometric off, blur sigma -> 0: output equals the input
    frame = probe_frame()
    out = global_view_1(frame, photometric_off(), derive_rng(0, 0))
    assert np.array_equal(out, frame)


def test_identity_limit_resized():
    frame = probe_frame(48)
    out = global_view_1(frame, photometric_off(), derive_rng(0, 0))
    assert np.array_equal(out, resize_bilinear(frame, 32, 32))


def test_view_determinism():
    frame = probe_frame()
    cfg = AugmentConfig(global_size=32, local_size=16)
    a = global_view_1(frame, cfg, derive_rng(3, 1))
    b = global_view_1(frame, cfg, derive_rng(3, 1))
    assert np.array_equal(a, b)


def test_flip_frequency():
    frame = np.zeros((32, 32, 3), np.float32)
    frame[:, :16] = 1.0
    cfg = photometric_off(flip_p=0.5)
    rng = derive_rng(8, 0)
    flips = sum(not np.array_equal(global_view_1(frame, cfg, rng), frame)
                for _ in range(10_000))
    assert abs(flips / 10_000 - 0.5) <= 0.02


def test_view2_blur_frequency():
    # sigma >= 1 so an applied blur is always detectable on a checkerboard
    frame = np.indices((32, 32)).sum(axis=0) % 2
    frame = np.repeat(frame[:, :, None], 3, axis=2).astype(np.float32)
    cfg = photometric_off(blur_p_view2=0.1, blur_sigma=(1.0, 2.0))
    rng = derive_rng(9, 0)
    blurred = sum(not np.array_equal(global_view_2(frame, cfg, rng), frame)
                  for _ in range(10_000))
    assert abs(blurred / 10_000 - 0.1) <= 0.01


def test_solarize_definition():
    img = np.array([[[0.2, 0.5, 0.9]]], np.float32)
    out = solarize(img, 0.5)
    assert np.allclose(out, [[[0.2, 0.5, 0.1]]])


def test_view2_constant_frame_stays_constant():
    frame = np.full((32, 32, 3), 0.5, np.float32)
    cfg = photometric_off(blur_p_view2=1.0, blur_sigma=(0.5, 2.0), solarize_p=1.0,
                          grayscale_p=1.0, flip_p=1.0)
    out = global_view_2(frame, cfg, derive_rng(1, 1))
    assert np.allclose(out, out.flat[0])


def test_jitter_identity_at_zero_strength(rng):
    frame = probe_frame()
    assert np.array_equal(color_jitter(frame, rng, 0.0), frame)


def test_jitter_changes_image(rng):
    frame = probe_frame()
    out = color_jitter(frame, rng, 0.8)
    assert out.shape == frame.shape
    assert not np.array_equal(out, frame)
    assert out.min() >= 0 and out.max() <= 1


def test_crop_params_within_bounds(rng):
    for _ in range(500):
        top, left, ch, cw = crop_params(rng, 32, 32, (0.05, 0.25), (0.75, 4 / 3))
        assert 0 <= top and top + ch <= 32
        assert 0 <= left and left + cw <= 32
        assert ch > 0 and cw > 0


def test_local_pair_shapes_and_bounds(rng):
    cfg = AugmentConfig(global_size=32, local_size=16)
    a, b = local_crop_pair(probe_frame(), probe_frame(seed=1), cfg, rng)
    assert a.shape == (16, 16, 3) and b.shape == (16, 16, 3)
    for t in (a, b):
        assert t.min() >= 0 and t.max() <= 1


def test_local_reference_size(rng):
    cfg = AugmentConfig(global_size=224, local_size=96)
    a, b = local_crop_pair(probe_frame(224), probe_frame(224, seed=1), cfg, rng)
    assert a.shape == (96, 96, 3) and b.shape == (96, 96, 3)


def test_motion_sim_identity_params(rng):
    frame = probe_frame()
    out = motion_sim(frame, rng, max_translate=0.0, max_rotate_deg=0.0,
                     scale_range=(1.0, 1.0), max_brightness=0.0, contrast_range=(1.0, 1.0))
    assert np.array_equal(out, frame)


def test_translation_shifts_content():
    rng = derive_rng(2, 0)
    frame = rng.uniform(0, 1, (50, 100, 3)).astype(np.float32)
    out = affine_warp(frame, translate=(10.0, 0.0))
    assert np.allclose(out[:, 10:], frame[:, :-10], atol=1e-6)


def test_motion_param_bounds():
    rng = derive_rng(3, 0)
    for _ in range(1000):
        p = draw_motion_params(rng)
        assert abs(p.rotate_deg) <= 10.0
        assert abs(p.translate_frac[0]) <= 0.1 and abs(p.translate_frac[1]) <= 0.1
        assert 0.95 <= p.scale <= 1.05
        assert abs(p.brightness_shift) <= 0.1
        assert 0.9 <= p.contrast_factor <= 1.1


def _raw_batch(static_pairs=4):
    spec = SynthSpec(num_classes=2, videos_per_class=2, frames_per_video=8, image_size=32,
                     domain_tag="source", seed=5)
    clips = [generate_video(spec, c, i) for c in range(2) for i in range(2)]
    cfg = SamplerConfig(delta_max=3, pairs_per_video=1, batch_size=4)
    return next(iter(build_epoch(clips, cfg, seed=0, epoch=0)))


def test_augment_batch_shapes():
    raw = _raw_batch()
    cfg = AugmentConfig(global_size=32, local_size=16, num_local_pairs=2)
    out = augment_batch(raw, cfg, derive_rng(0, 0))
    assert out.globals_a.shape == (4, 32, 32, 3)
    assert out.globals_b.shape == (4, 32, 32, 3)
    assert out.locals_a.shape == (4, 2, 16, 16, 3)
    assert out.locals_b.shape == (4, 2, 16, 16, 3)
    for arr in (out.globals_a, out.globals_b, out.locals_a, out.locals_b):
        assert arr.min() >= 0 and arr.max() <= 1


def test_augment_batch_no_locals():
    raw = _raw_batch()
    cfg = AugmentConfig(global_size=32, local_size=16, num_local_pairs=0)
    out = augment_batch(raw, cfg, derive_rng(0, 0))
    assert out.locals_a.shape == (4, 0, 16, 16, 3)


def test_static_mode_uses_first_frame():
    raw = _raw_batch()
    cfg = photometric_off(static_baseline=True)
    out = augment_batch(raw, cfg, derive_rng(0, 0))
    for k, pair in enumerate(raw.pairs):
        assert np.array_equal(out.globals_b[k], pair.frame_a)
        assert not np.array_equal(pair.frame_a, pair.frame_b)


def test_motion_sim_requires_static():
    with pytest.raises(ConfigError):
        AugmentConfig(motion_sim=True).validate()
    cfg = AugmentConfig(static_baseline=True, motion_sim=True)
    cfg.validate()


def test_augment_determinism():
    raw = _raw_batch()
    cfg = AugmentConfig(global_size=32, local_size=16)
    a = augment_batch(raw, cfg, derive_rng(6, 0))
    b = augment_batch(raw, cfg, derive_rng(6, 0))
    assert np.array_equal(a.globals_a, b.globals_a)
    assert np.array_equal(a.locals_b, b.locals_b)
