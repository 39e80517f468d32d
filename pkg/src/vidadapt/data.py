"""Synthetic object-centric video generation and on-disk dataset handling.

Each clip shows one procedurally generated 2D object (the class decides the
shape family, the instance seed decides its colours and size) moving smoothly
over a background: per-frame rotation, translation, scale drift and a global
illumination oscillation. Two domain variants exist: "source" uses flat
backgrounds and solid fills, "target" uses sinusoidal textures and striped
fills, giving a real distribution shift between the two corpora.

Frames are quantized to the 8-bit grid at generation time so that the PNG
round trip through save_dataset/load_dataset is bit-exact.
"""

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError, IngestionError, SplitError
from .rng import STREAM_DATA, derive_rng

DOMAIN_TAGS = ("source", "target")


@dataclass
class SynthSpec:
    num_classes: int = 6
    videos_per_class: int = 12
    frames_per_video: int = 30
    image_size: int = 64
    domain_tag: str = "target"
    seed: int = 0

    def validate(self):
        if self.frames_per_video < 2:
            raise ConfigError("frames_per_video must be >= 2")
        if self.image_size < 16:
            raise ConfigError("image_size must be >= 16")
        if self.num_classes < 1 or self.videos_per_class < 1:
            raise ConfigError("num_classes and videos_per_class must be >= 1")
        if self.domain_tag not in DOMAIN_TAGS:
            raise ConfigError(f"domain_tag must be one of {DOMAIN_TAGS}")


@dataclass
class VideoClip:
    frames: np.ndarray          # [T, H, W, C] float32 in [0, 1]
    video_id: str
    class_id: int

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


@dataclass
class TestFrame:
    frame: np.ndarray           # [H, W, C]
    class_id: int
    video_id: str
    frame_index: int


@dataclass
class DatasetSplit:
    train: list = field(default_factory=list)   # list[VideoClip]
    test: list = field(default_factory=list)    # list[TestFrame]


def _shape_vertices(class_id: int) -> np.ndarray:
    """Vertices (unit circumradius) of the shape family for a class.

    Even classes are regular polygons, odd classes are stars; the vertex
    count grows with the class index so every class is geometrically distinct.
    """
    k = 3 + class_id
    if class_id % 2 == 0:
        ang = 2 * np.pi * np.arange(k) / k
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    ang = 2 * np.pi * np.arange(2 * k) / (2 * k)
    radii = np.where(np.arange(2 * k) % 2 == 0, 1.0, 0.4)
    return np.stack([radii * np.cos(ang), radii * np.sin(ang)], axis=1)


def _points_in_polygon(px: np.ndarray, py: np.ndarray, verts: np.ndarray) -> np.ndarray:
    """Even-odd rule inside test, vectorized over pixel arrays."""
    inside = np.zeros(px.shape, dtype=bool)
    x1, y1 = verts[:, 0], verts[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    for ex1, ey1, ex2, ey2 in zip(x1, y1, x2, y2):
        crosses = (ey1 > py) != (ey2 > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = ex1 + (py - ey1) * (ex2 - ex1) / (ey2 - ey1)
        inside ^= crosses & (px < xint)
    return inside


def _quantize(frame: np.ndarray) -> np.ndarray:
    return (np.round(np.clip(frame, 0.0, 1.0) * 255.0) / 255.0).astype(np.float32)


def generate_video(spec: SynthSpec, class_id: int, instance_seed: int) -> VideoClip:
    """Render one deterministic clip of a moving object of the given class."""
    spec.validate()
    if not 0 <= class_id < spec.num_classes:
        raise ConfigError(f"class_id {class_id} out of range for {spec.num_classes} classes")
    domain_code = DOMAIN_TAGS.index(spec.domain_tag)
    rng = derive_rng(spec.seed, STREAM_DATA, domain_code, class_id, instance_seed)

    size = spec.image_size
    T = spec.frames_per_video
    ss = 2 * size  # 2x supersampling for soft edges
    verts = _shape_vertices(class_id)

    # instance appearance; the source domain is achromatic so the only signal
    # stable under photometric augmentation is the object's shape
    if spec.domain_tag == "source":
        fill_v = rng.uniform(0.35, 0.9)
        delta = rng.choice([-1.0, 1.0]) * rng.uniform(0.3, 0.55)
        bg_v = fill_v + delta
        if not 0.05 <= bg_v <= 0.95:
            bg_v = fill_v - delta
        fill_a = np.full(3, fill_v)
        fill_b = fill_a
        bg_a = np.full(3, bg_v)
        bg_b = bg_a
    else:
        fill_a = rng.uniform(0.1, 0.9, size=3)
        fill_b = rng.uniform(0.1, 0.9, size=3)
        bg_a = rng.uniform(0.15, 0.85, size=3)
        bg_b = rng.uniform(0.15, 0.85, size=3)
    base_scale = rng.uniform(0.38, 0.5)             # circumradius, fraction of half-extent

    # instance motion: linear rotation/drift plus slow oscillations, so frames
    # further apart keep diverging within the usual temporal offsets
    theta0 = rng.uniform(0.0, 2 * np.pi)
    omega = rng.choice([-1.0, 1.0]) * rng.uniform(0.03, 0.08)   # rad/frame
    c0 = rng.uniform(-0.12, 0.12, size=2)
    drift = rng.uniform(-1.0, 1.0, size=2)
    drift = 0.012 * drift / max(np.linalg.norm(drift), 1e-9)    # per frame, normalized units
    scale_amp = rng.uniform(0.03, 0.08)
    scale_phase = rng.uniform(0.0, 2 * np.pi)
    illum_amp = rng.uniform(0.06, 0.14)
    illum_phase = rng.uniform(0.0, 2 * np.pi)
    slow = 2 * np.pi / (2.2 * T)                    # oscillation slower than the clip

    # domain-dependent background / fill textures
    if spec.domain_tag == "target":
        bg_freq = rng.uniform(2.0, 5.0)
        bg_dir = rng.uniform(0.0, np.pi)
        bg_phase = rng.uniform(0.0, 2 * np.pi)
        stripe_freq = rng.uniform(3.0, 6.0)
        stripe_phase = rng.uniform(0.0, 2 * np.pi)

    ys, xs = np.meshgrid(np.linspace(-1, 1, ss), np.linspace(-1, 1, ss), indexing="ij")
    frames = np.empty((T, size, size, 3), dtype=np.float32)
    for t in range(T):
        theta = theta0 + omega * t
        centre = c0 + drift * t
        scale = base_scale * (1.0 + scale_amp * np.sin(slow * t + scale_phase))
        illum = 1.0 + illum_amp * np.sin(slow * t + illum_phase)

        # object-frame coordinates
        dx, dy = xs - centre[0], ys - centre[1]
        ox = (np.cos(-theta) * dx - np.sin(-theta) * dy) / scale
        oy = (np.sin(-theta) * dx + np.cos(-theta) * dy) / scale
        mask = _points_in_polygon(ox, oy, verts).astype(np.float64)

        if spec.domain_tag == "source":
            bg = np.broadcast_to(bg_a, (ss, ss, 3))
            fill = np.broadcast_to(fill_a, (ss, ss, 3))
        else:
            wave = 0.5 + 0.5 * np.sin(
                np.pi * bg_freq * (np.cos(bg_dir) * xs + np.sin(bg_dir) * ys) + bg_phase)
            bg = bg_a[None, None] + (bg_b - bg_a)[None, None] * wave[..., None]
            stripes = 0.5 + 0.5 * np.sin(np.pi * stripe_freq * ox + stripe_phase)
            fill = fill_a[None, None] + (fill_b - fill_a)[None, None] * stripes[..., None]

        frame = bg * (1.0 - mask[..., None]) + fill * mask[..., None]
        frame = frame * illum
        # box downsample 2x back to the nominal resolution
        frame = frame.reshape(size, 2, size, 2, 3).mean(axis=(1, 3))
        frames[t] = _quantize(frame)

    return VideoClip(frames=frames, video_id=f"c{class_id:03d}_i{instance_seed:04d}",
                     class_id=class_id)


def generate_dataset(spec: SynthSpec) -> list:
    """All clips for a spec; instance seeds are simply 0..videos_per_class-1."""
    spec.validate()
    return [generate_video(spec, c, i)
            for c in range(spec.num_classes)
            for i in range(spec.videos_per_class)]


def split_dataset(clips: list, ratio: float, seed: int) -> DatasetSplit:
    """Per-class video-level split; test side keeps one middle frame per video."""
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"split ratio must be in (0, 1), got {ratio}")
    by_class = {}
    for clip in clips:
        by_class.setdefault(clip.class_id, []).append(clip)
    split = DatasetSplit()
    for class_id in sorted(by_class):
        members = sorted(by_class[class_id], key=lambda c: c.video_id)
        if len(members) < 2:
            raise SplitError(f"class {class_id} has {len(members)} clip(s); need >= 2 to split")
        rng = derive_rng(seed, STREAM_DATA, 7, class_id)
        order = rng.permutation(len(members))
        n_train = int(len(members) * ratio)
        n_train = min(max(n_train, 1), len(members) - 1)
        for j, idx in enumerate(order):
            clip = members[idx]
            if j < n_train:
                split.train.append(clip)
            else:
                mid = clip.num_frames // 2
                split.test.append(TestFrame(frame=clip.frames[mid], class_id=clip.class_id,
                                            video_id=clip.video_id, frame_index=mid))
    return split


def save_dataset(clips: list, root) -> None:
    """Write `root/<class_name>/<video_id>/frame_*.png` plus a manifest."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    classes = {}
    videos = []
    for clip in clips:
        class_name = f"class_{clip.class_id:03d}"
        classes[class_name] = clip.class_id
        vdir = root / class_name / clip.video_id
        vdir.mkdir(parents=True, exist_ok=True)
        for t in range(clip.num_frames):
            arr = np.round(clip.frames[t] * 255.0).astype(np.uint8)
            Image.fromarray(arr).save(vdir / f"frame_{t:05d}.png")
        videos.append({"video_id": clip.video_id, "class_name": class_name,
                       "frames": int(clip.num_frames)})
    manifest = {"classes": classes, "videos": videos}
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load_dataset(root) -> list:
    """Read a dataset written by save_dataset (or matching its layout)."""
    root = Path(root)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise IngestionError(f"missing manifest: {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    clips = []
    for entry in manifest["videos"]:
        vdir = root / entry["class_name"] / entry["video_id"]
        if not vdir.is_dir():
            raise IngestionError(f"missing video directory: {vdir}")
        paths = sorted(vdir.glob("frame_*.png"))
        if len(paths) < 2:
            raise IngestionError(f"video {vdir} has {len(paths)} frame(s); need >= 2")
        frames = []
        for p in paths:
            try:
                arr = np.asarray(Image.open(p).convert("RGB"))
            except Exception as exc:
                raise IngestionError(f"cannot decode frame {p}: {exc}") from exc
            frames.append(arr.astype(np.float32) / 255.0)
        shapes = {f.shape for f in frames}
        if len(shapes) != 1:
            raise IngestionError(f"video {vdir} mixes frame shapes {shapes}")
        clips.append(VideoClip(frames=np.stack(frames), video_id=entry["video_id"],
                               class_id=int(manifest["classes"][entry["class_name"]])))
    return clips


def dataset_fingerprint(clips: list) -> str:
    """SHA-256 over frame bytes and ids; identifies a corpus for run manifests."""
    h = hashlib.sha256()
    for clip in sorted(clips, key=lambda c: c.video_id):
        h.update(clip.video_id.encode())
        h.update(np.int64(clip.class_id).tobytes())
        h.update(np.round(clip.frames * 255.0).astype(np.uint8).tobytes())
    return h.hexdigest()
