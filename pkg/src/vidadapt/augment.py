"""Paired-view augmentation pipelines.

Per frame pair the batch carries two global views (one pipeline per frame) and
u pairs of local crops, one crop drawn from each frame of the pair so local
views stay temporally matched. The static-baseline variant replaces the second
frame with the first before any augmentation; optionally a motion-simulating
affine/photometric transform is applied to that copy.

View pipelines (unit-interval images):
  view 1: random resized crop -> flip p=0.5 -> colour jitter (strength 0.8)
          -> grayscale p=0.2 -> Gaussian blur p=1.0
  view 2: same but blur p=0.1 and solarization p=0.2 appended
  local:  crop in the local scale range -> jitter -> grayscale p=0.2 -> blur p=0.5
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .imageops import affine_warp, gaussian_blur, hsv_to_rgb, resize_bilinear, rgb_to_hsv, to_grayscale

JITTER_BASE = (0.4, 0.4, 0.2, 0.1)  # brightness, contrast, saturation, hue


@dataclass
class AugmentConfig:
    global_size: int = 64
    local_size: int = 32
    global_scale: tuple = (0.4, 1.0)
    local_scale: tuple = (0.05, 0.25)
    crop_ratio: tuple = (3.0 / 4.0, 4.0 / 3.0)
    num_local_pairs: int = 2
    flip_p: float = 0.5
    jitter_strength: float = 0.8
    grayscale_p: float = 0.2
    blur_p_view1: float = 1.0
    blur_p_view2: float = 0.1
    blur_p_local: float = 0.5
    blur_sigma: tuple = (0.1, 2.0)
    solarize_p: float = 0.2
    solarize_threshold: float = 0.5
    static_baseline: bool = False
    motion_sim: bool = False

    def validate(self):
        for name, (lo, hi) in (("global_scale", self.global_scale),
                               ("local_scale", self.local_scale)):
            if not 0.0 < lo <= hi <= 1.0:
                raise ConfigError(f"{name} must satisfy 0 < lo <= hi <= 1, got ({lo}, {hi})")
        if self.global_size < 8 or self.local_size < 8:
            raise ConfigError("view sizes must be >= 8")
        if self.num_local_pairs < 0:
            raise ConfigError("num_local_pairs must be >= 0")
        if self.motion_sim and not self.static_baseline:
            raise ConfigError("motion_sim is only meaningful with static_baseline")


@dataclass
class AugmentedBatch:
    globals_a: np.ndarray       # [v, S, S, C]
    globals_b: np.ndarray       # [v, S, S, C]
    locals_a: np.ndarray        # [v, u, s, s, C]
    locals_b: np.ndarray        # [v, u, s, s, C]

    @property
    def num_pairs(self) -> int:
        return self.globals_a.shape[0]

    @property
    def num_local_pairs(self) -> int:
        return self.locals_a.shape[1]


def crop_params(rng, h: int, w: int, scale: tuple, ratio: tuple) -> tuple:
    """Random-resized-crop box (top, left, ch, cw); area in `scale`, aspect in `ratio`."""
    area = float(h * w)
    log_lo, log_hi = np.log(ratio[0]), np.log(ratio[1])
    for _ in range(10):
        target = area * rng.uniform(scale[0], scale[1])
        aspect = float(np.exp(rng.uniform(log_lo, log_hi)))
        cw = int(round(np.sqrt(target * aspect)))
        ch = int(round(np.sqrt(target / aspect)))
        if 0 < cw <= w and 0 < ch <= h:
            top = int(rng.integers(0, h - ch + 1))
            left = int(rng.integers(0, w - cw + 1))
            return top, left, ch, cw
    # fallback: central crop at the nearest feasible aspect
    in_ratio = w / h
    if in_ratio < ratio[0]:
        cw, ch = w, min(h, int(round(w / ratio[0])))
    elif in_ratio > ratio[1]:
        cw, ch = min(w, int(round(h * ratio[1]))), h
    else:
        cw, ch = w, h
    return (h - ch) // 2, (w - cw) // 2, ch, cw


def random_resized_crop(img, rng, scale, ratio, out_size):
    top, left, ch, cw = crop_params(rng, img.shape[0], img.shape[1], scale, ratio)
    return resize_bilinear(img[top:top + ch, left:left + cw], out_size, out_size)


def color_jitter(img, rng, strength: float):
    """Brightness/contrast/saturation/hue jitter scaled by `strength`."""
    mb, mc, ms, mh = (strength * b for b in JITTER_BASE)
    if mb > 0:
        img = np.clip(img * rng.uniform(max(0.0, 1 - mb), 1 + mb), 0.0, 1.0)
    if mc > 0:
        f = rng.uniform(max(0.0, 1 - mc), 1 + mc)
        mean = to_grayscale(img).mean()
        img = np.clip(mean + (img - mean) * f, 0.0, 1.0)
    if ms > 0:
        f = rng.uniform(max(0.0, 1 - ms), 1 + ms)
        gray = to_grayscale(img)
        img = np.clip(gray + (img - gray) * f, 0.0, 1.0)
    if mh > 0:
        shift = rng.uniform(-mh, mh)
        hsv = rgb_to_hsv(np.clip(img, 0.0, 1.0))
        hsv[..., 0] = (hsv[..., 0] + shift) % 1.0
        img = hsv_to_rgb(hsv)
    return img.astype(np.float32, copy=False)


def solarize(img, threshold: float):
    return np.where(img >= threshold, 1.0 - img, img).astype(img.dtype)


def _maybe_blur(img, rng, p, sigma_range):
    if rng.uniform() < p:
        return gaussian_blur(img, float(rng.uniform(sigma_range[0], sigma_range[1])))
    return img


def global_view_1(frame, cfg: AugmentConfig, rng):
    out = random_resized_crop(frame, rng, cfg.global_scale, cfg.crop_ratio, cfg.global_size)
    if rng.uniform() < cfg.flip_p:
        out = out[:, ::-1, :]
    out = color_jitter(out, rng, cfg.jitter_strength)
    if rng.uniform() < cfg.grayscale_p:
        out = to_grayscale(out)
    out = _maybe_blur(out, rng, cfg.blur_p_view1, cfg.blur_sigma)
    return np.clip(out, 0.0, 1.0).astype(np.float32, copy=False)


def global_view_2(frame, cfg: AugmentConfig, rng):
    out = random_resized_crop(frame, rng, cfg.global_scale, cfg.crop_ratio, cfg.global_size)
    if rng.uniform() < cfg.flip_p:
        out = out[:, ::-1, :]
    out = color_jitter(out, rng, cfg.jitter_strength)
    if rng.uniform() < cfg.grayscale_p:
        out = to_grayscale(out)
    out = _maybe_blur(out, rng, cfg.blur_p_view2, cfg.blur_sigma)
    if rng.uniform() < cfg.solarize_p:
        out = solarize(out, cfg.solarize_threshold)
    return np.clip(out, 0.0, 1.0).astype(np.float32, copy=False)


def _local_view(frame, cfg: AugmentConfig, rng):
    out = random_resized_crop(frame, rng, cfg.local_scale, cfg.crop_ratio, cfg.local_size)
    out = color_jitter(out, rng, cfg.jitter_strength)
    if rng.uniform() < cfg.grayscale_p:
        out = to_grayscale(out)
    out = _maybe_blur(out, rng, cfg.blur_p_local, cfg.blur_sigma)
    return np.clip(out, 0.0, 1.0).astype(np.float32, copy=False)


def local_crop_pair(frame_a, frame_b, cfg: AugmentConfig, rng):
    """One local crop from each frame of the pair (independently transformed)."""
    return _local_view(frame_a, cfg, rng), _local_view(frame_b, cfg, rng)


@dataclass
class MotionParams:
    translate_frac: tuple = (0.0, 0.0)
    rotate_deg: float = 0.0
    scale: float = 1.0
    brightness_shift: float = 0.0
    contrast_factor: float = 1.0


def draw_motion_params(rng, max_translate=0.1, max_rotate_deg=10.0,
                       scale_range=(0.95, 1.05), max_brightness=0.1,
                       contrast_range=(0.9, 1.1)) -> MotionParams:
    return MotionParams(
        translate_frac=(float(rng.uniform(-max_translate, max_translate)),
                        float(rng.uniform(-max_translate, max_translate))),
        rotate_deg=float(rng.uniform(-max_rotate_deg, max_rotate_deg)),
        scale=float(rng.uniform(scale_range[0], scale_range[1])),
        brightness_shift=float(rng.uniform(-max_brightness, max_brightness)),
        contrast_factor=float(rng.uniform(contrast_range[0], contrast_range[1])),
    )


def apply_motion_params(frame, p: MotionParams):
    h, w = frame.shape[:2]
    out = frame
    if p.rotate_deg != 0.0 or p.translate_frac != (0.0, 0.0) or p.scale != 1.0:
        out = affine_warp(out, rotate_deg=p.rotate_deg,
                          translate=(p.translate_frac[0] * w, p.translate_frac[1] * h),
                          scale=p.scale)
    if p.brightness_shift != 0.0:
        out = out + p.brightness_shift
    if p.contrast_factor != 1.0:
        mean = to_grayscale(out).mean()
        out = mean + (out - mean) * p.contrast_factor
    return np.clip(out, 0.0, 1.0).astype(np.float32, copy=False)


def motion_sim(frame, rng, **ranges):
    """Small viewpoint-mimicking transform: translate/rotate/scale plus
    brightness and contrast shifts within the configured bounds."""
    return apply_motion_params(frame, draw_motion_params(rng, **ranges))


def augment_batch(raw, cfg: AugmentConfig, rng) -> AugmentedBatch:
    """Augment a RawBatch; per-pair child generators keep pairs independent."""
    cfg.validate()
    v = len(raw.pairs)
    if v == 0:
        raise ConfigError("cannot augment an empty batch")
    u = cfg.num_local_pairs
    c = raw.pairs[0].frame_a.shape[-1]
    ga = np.empty((v, cfg.global_size, cfg.global_size, c), np.float32)
    gb = np.empty_like(ga)
    la = np.empty((v, u, cfg.local_size, cfg.local_size, c), np.float32)
    lb = np.empty_like(la)
    for k, (pair, child) in enumerate(zip(raw.pairs, rng.spawn(v))):
        fa = pair.frame_a
        fb = fa if cfg.static_baseline else pair.frame_b
        if cfg.static_baseline and cfg.motion_sim:
            fb = motion_sim(fb, child)
        ga[k] = global_view_1(fa, cfg, child)
        gb[k] = global_view_2(fb, cfg, child)
        for i in range(u):
            la[k, i], lb[k, i] = local_crop_pair(fa, fb, cfg, child)
    return AugmentedBatch(globals_a=ga, globals_b=gb, locals_a=la, locals_b=lb)
