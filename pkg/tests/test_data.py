import numpy as np
import pytest

from vidadapt.data import (SynthSpec, dataset_fingerprint, generate_dataset, generate_video,
                           load_dataset, save_dataset, split_dataset)
from vidadapt.errors import ConfigError, IngestionError, SplitError


def spec(**kw):
    base = dict(num_classes=4, videos_per_class=2, frames_per_video=6, image_size=32,
                domain_tag="source", seed=3)
    base.update(kw)
    return SynthSpec(**base)


def test_minimum_length_clip():
    clip = generate_video(spec(frames_per_video=2), 0, 0)
    assert clip.num_frames == 2
    assert clip.frames.shape == (2, 32, 32, 3)
    assert clip.frames.min() >= 0.0 and clip.frames.max() <= 1.0


def test_seeded_determinism():
    a = generate_video(spec(), 1, 5)
    b = generate_video(spec(), 1, 5)
    assert a.video_id == b.video_id
    assert np.array_equal(a.frames, b.frames)


def test_different_seeds_differ():
    a = generate_video(spec(), 1, 5)
    b = generate_video(spec(), 1, 6)
    assert not np.array_equal(a.frames, b.frames)


def test_invalid_spec_rejected():
    with pytest.raises(ConfigError):
        generate_video(spec(frames_per_video=1), 0, 0)
    with pytest.raises(ConfigError):
        generate_video(spec(image_size=8), 0, 0)
    with pytest.raises(ConfigError):
        generate_video(spec(), 99, 0)
    with pytest.raises(ConfigError):
        generate_video(spec(domain_tag="other"), 0, 0)


def test_frames_quantized_to_8bit_grid():
    clip = generate_video(spec(), 0, 0)
    assert np.array_equal(clip.frames, np.round(clip.frames * 255) / 255)


@pytest.mark.parametrize("domain", ["source", "target"])
def test_monotone_dissimilarity(domain):
    # averaged over 100 instances, frames 10 apart differ more than adjacent ones
    s = spec(num_classes=2, frames_per_video=12, image_size=32, domain_tag=domain)
    gap1, gap10 = [], []
    for i in range(100):
        clip = generate_video(s, i % 2, i)
        f = clip.frames.astype(np.float64)
        gap1.append(np.abs(f[1:] - f[:-1]).mean())
        gap10.append(np.abs(f[10:] - f[:-10]).mean())
    assert np.mean(gap10) > np.mean(gap1)


def test_split_75_25():
    clips = [generate_video(spec(videos_per_class=4), 0, i) for i in range(4)]
    split = split_dataset(clips, 0.75, seed=0)
    assert len(split.train) == 3 and len(split.test) == 1


def test_split_even():
    clips = [generate_video(spec(), 0, i) for i in range(2)]
    split = split_dataset(clips, 0.5, seed=0)
    assert len(split.train) == 1 and len(split.test) == 1


def test_split_partitions_by_video():
    s = spec(num_classes=4, videos_per_class=10)
    clips = generate_dataset(s)
    assert len(clips) == 40
    split = split_dataset(clips, 0.75, seed=1)
    train_ids = {c.video_id for c in split.train}
    test_ids = {t.video_id for t in split.test}
    assert not train_ids & test_ids
    assert len(train_ids) + len(test_ids) == 40


def test_split_test_frame_is_middle():
    clips = [generate_video(spec(frames_per_video=7), 0, i) for i in range(2)]
    split = split_dataset(clips, 0.5, seed=0)
    t = split.test[0]
    assert t.frame_index == 3
    src = next(c for c in clips if c.video_id == t.video_id)
    assert np.array_equal(t.frame, src.frames[3])


def test_split_errors():
    clips = [generate_video(spec(), 0, 0)]
    with pytest.raises(SplitError, match="class 0"):
        split_dataset(clips, 0.75, seed=0)
    with pytest.raises(ConfigError):
        split_dataset(clips, 1.5, seed=0)


def test_save_load_roundtrip(tmp_path):
    clips = [generate_video(spec(), c, i) for c in range(2) for i in range(2)]
    save_dataset(clips, tmp_path)
    loaded = load_dataset(tmp_path)
    assert len(loaded) == len(clips)
    by_id = {c.video_id: c for c in loaded}
    for clip in clips:
        got = by_id[clip.video_id]
        assert got.class_id == clip.class_id
        assert np.array_equal(got.frames, clip.frames)


def test_load_single_video(tmp_path):
    clip = generate_video(spec(num_classes=1, frames_per_video=5), 0, 0)
    save_dataset([clip], tmp_path)
    loaded = load_dataset(tmp_path)
    assert len(loaded) == 1 and loaded[0].num_frames == 5


def test_load_empty_dir(tmp_path):
    with pytest.raises(IngestionError, match="manifest"):
        load_dataset(tmp_path)


def test_load_missing_video_dir(tmp_path):
    clip = generate_video(spec(), 0, 0)
    save_dataset([clip], tmp_path)
    import shutil
    shutil.rmtree(tmp_path / "class_000" / clip.video_id)
    with pytest.raises(IngestionError, match=clip.video_id):
        load_dataset(tmp_path)


def test_load_undecodable_frame(tmp_path):
    clip = generate_video(spec(), 0, 0)
    save_dataset([clip], tmp_path)
    bad = tmp_path / "class_000" / clip.video_id / "frame_00001.png"
    bad.write_bytes(b"not a png")
    with pytest.raises(IngestionError, match="frame_00001"):
        load_dataset(tmp_path)


def test_fingerprint_sensitive_to_content():
    clips_a = [generate_video(spec(), 0, 0)]
    clips_b = [generate_video(spec(), 0, 1)]
    assert dataset_fingerprint(clips_a) == dataset_fingerprint(clips_a)
    assert dataset_fingerprint(clips_a) != dataset_fingerprint(clips_b)
