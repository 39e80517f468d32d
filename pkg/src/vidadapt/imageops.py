"""Low-level image operations shared by the synthesis, augmentation and eval code.

All images are float arrays shaped [H, W, C] with values in [0, 1]. Resampling
uses half-pixel-center bilinear interpolation with clamp-to-edge, expressed as
explicit interpolation matrices so the same linear operator (and its adjoint)
can be reused for positional-embedding resizing inside the model.
"""

from functools import lru_cache

import numpy as np
from scipy import ndimage


@lru_cache(maxsize=64)
def interp_matrix(n_src: int, n_dst: int) -> np.ndarray:
    """Dense [n_dst, n_src] bilinear resampling matrix (float64).

    Half-pixel-center convention: dst index i samples source coordinate
    (i + 0.5) * n_src / n_dst - 0.5, clamped to the valid range. For
    n_dst == n_src this is exactly the identity.
    """
    if n_src < 1 or n_dst < 1:
        raise ValueError("interp_matrix requires positive sizes")
    m = np.zeros((n_dst, n_src))
    coords = (np.arange(n_dst) + 0.5) * (n_src / n_dst) - 0.5
    coords = np.clip(coords, 0.0, n_src - 1.0)
    lo = np.floor(coords).astype(int)
    hi = np.minimum(lo + 1, n_src - 1)
    frac = coords - lo
    m[np.arange(n_dst), lo] += 1.0 - frac
    m[np.arange(n_dst), hi] += frac
    return m


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize [H, W, C] (or [H, W]) to [out_h, out_w, ...]."""
    h, w = img.shape[:2]
    my = interp_matrix(h, out_h).astype(img.dtype)
    mx = interp_matrix(w, out_w).astype(img.dtype)
    tmp = np.tensordot(my, img, axes=(1, 0))          # [out_h, W, ...]
    out = np.tensordot(mx, tmp, axes=(1, 1))          # [out_w, out_h, ...]
    return np.swapaxes(out, 0, 1)


def blur_kernel(sigma: float) -> np.ndarray:
    """1D Gaussian taps; length ceil(4*sigma) rounded up to odd."""
    size = int(np.ceil(4.0 * sigma))
    if size % 2 == 0:
        size += 1
    size = max(size, 1)
    r = (size - 1) // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with reflect padding; sigma <= 0 is a no-op."""
    if sigma <= 0:
        return img.copy()
    k = blur_kernel(sigma).astype(img.dtype)
    if k.size == 1:
        return img.copy()
    out = ndimage.convolve1d(img, k, axis=0, mode="reflect")
    out = ndimage.convolve1d(out, k, axis=1, mode="reflect")
    return out


def _sample_clamped(img: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = np.clip(ys, 0, h - 1) - y0
    fx = np.clip(xs, 0, w - 1) - x0
    fy = fy[..., None].astype(img.dtype)
    fx = fx[..., None].astype(img.dtype)
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def affine_warp(img: np.ndarray, rotate_deg: float = 0.0, translate: tuple = (0.0, 0.0),
                scale: float = 1.0) -> np.ndarray:
    """Rotate/scale about the image centre then translate by (dx, dy) pixels.

    Inverse-mapped bilinear sampling with clamp-to-edge borders; a pure
    integer translation moves content by exactly that many pixels.
    """
    h, w = img.shape[:2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = np.deg2rad(rotate_deg)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    # invert: out = R*s*(src - c) + c + t
    dx = xx - cx - translate[0]
    dy = yy - cy - translate[1]
    xs = (cos_t * dx + sin_t * dy) / scale + cx
    ys = (-sin_t * dx + cos_t * dy) / scale + cy
    return _sample_clamped(img, ys, xs)


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """Replicate ITU-R 601 luma across all channels."""
    weights = np.array([0.299, 0.587, 0.114], dtype=img.dtype)
    y = img @ weights
    return np.repeat(y[..., None], img.shape[-1], axis=-1)


def rgb_to_hsv(img: np.ndarray) -> np.ndarray:
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    maxc = np.max(img, axis=-1)
    minc = np.min(img, axis=-1)
    v = maxc
    delta = maxc - minc
    s = np.where(maxc > 0, delta / np.maximum(maxc, 1e-12), 0.0)
    dz = np.maximum(delta, 1e-12)
    rc = (maxc - r) / dz
    gc = (maxc - g) / dz
    bc = (maxc - b) / dz
    h = np.where(maxc == r, bc - gc, np.where(maxc == g, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(delta > 0, (h / 6.0) % 1.0, 0.0)
    return np.stack([h, s, v], axis=-1).astype(img.dtype)


def hsv_to_rgb(img: np.ndarray) -> np.ndarray:
    h, s, v = img[..., 0], img[..., 1], img[..., 2]
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    i = i.astype(int) % 6
    choices = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)]
    r = np.select([i == k for k in range(6)], [c[0] for c in choices])
    g = np.select([i == k for k in range(6)], [c[1] for c in choices])
    b = np.select([i == k for k in range(6)], [c[2] for c in choices])
    return np.stack([r, g, b], axis=-1).astype(img.dtype)
