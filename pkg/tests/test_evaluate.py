import json

import numpy as np
import pytest

from vidadapt.data import SynthSpec, generate_dataset, split_dataset
from vidadapt.errors import EvalError
from vidadapt.evaluate import (EmbeddingIndex, build_index, extract, forgetting_probe,
                               index_entries_from_split, knn_accuracy, knn_predict, knn_report,
                               pairwise_distances, retrieval_grid)
from vidadapt.model import ViTConfig, init_params
from vidadapt.rng import derive_rng

VIT = ViTConfig(image_size=32, patch_size=8, embed_dim=16, depth=2, num_heads=2,
                mlp_ratio=2.0, head_hidden_dim=32, head_bottleneck_dim=16, num_prototypes=16)


@pytest.fixture(scope="module")
def params():
    return init_params(VIT, derive_rng(2, 0))


@pytest.fixture(scope="module")
def split32(small_clips_32):
    return split_dataset(small_clips_32, 0.75, 9)


@pytest.fixture(scope="module")
def small_clips_32():
    spec = SynthSpec(num_classes=3, videos_per_class=4, frames_per_video=8, image_size=32,
                     domain_tag="target", seed=51)
    return generate_dataset(spec)


def index_from(vectors, labels, ids=None):
    ids = ids or [(f"v{i}", 0) for i in range(len(vectors))]
    return EmbeddingIndex(vectors=np.asarray(vectors, np.float64),
                          labels=np.asarray(labels, np.int64), ids=ids)


def test_extract_shapes_and_determinism(params, rng):
    frames = rng.uniform(0, 1, (5, 32, 32, 3)).astype(np.float32)
    frames[1] = frames[0]
    emb = extract(params, frames, VIT)
    assert emb.shape == (5, 16)
    assert np.array_equal(emb[0], emb[1])


def test_extract_resizes_input(params, rng):
    frames = rng.uniform(0, 1, (2, 48, 48, 3)).astype(np.float32)
    assert extract(params, frames, VIT).shape == (2, 16)


def test_extract_batch_partition_invariance(params, rng):
    frames = rng.uniform(0, 1, (10, 32, 32, 3)).astype(np.float32)
    a = extract(params, frames, VIT, batch_size=3)
    b = extract(params, frames, VIT, batch_size=10)
    assert np.max(np.abs(a - b)) < 1e-6


def test_index_rejects_duplicates():
    with pytest.raises(EvalError, match="duplicate"):
        index_from(np.zeros((2, 4)), [0, 1], ids=[("v", 0), ("v", 0)])


def test_knn_self_match():
    rng = derive_rng(3, 0)
    vec = rng.normal(size=(10, 8))
    idx = index_from(vec, rng.integers(0, 3, 10))
    assert knn_accuracy(idx, idx, k=1) == 1.0


def brute_force_predict(train, test, k=1):
    preds = []
    for q in test.vectors:
        d = [float(np.linalg.norm(q - r)) for r in train.vectors]
        order = sorted(range(len(d)), key=lambda j: (d[j], j))[:k]
        if k == 1:
            preds.append(train.labels[order[0]])
        else:
            votes = {}
            for rank, j in enumerate(order):
                votes.setdefault(int(train.labels[j]), []).append(rank)
            top = max(len(v) for v in votes.values())
            tied = [(min(r), lab) for lab, r in votes.items() if len(r) == top]
            preds.append(min(tied)[1])
    return np.array(preds)


@pytest.mark.parametrize("k", [1, 3, 5])
def test_knn_matches_brute_force(k):
    rng = derive_rng(4, k)
    train = index_from(rng.normal(size=(60, 6)), rng.integers(0, 4, 60))
    test = index_from(rng.normal(size=(25, 6)), rng.integers(0, 4, 25),
                      ids=[(f"q{i}", 0) for i in range(25)])
    assert np.array_equal(knn_predict(train, test, k=k), brute_force_predict(train, test, k))


def test_knn_tie_breaks_to_lower_index():
    train = index_from([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]], [2, 1, 0])
    test = index_from([[0.0, 0.0]], [2], ids=[("q", 0)])
    assert knn_predict(train, test, k=1)[0] == 2  # first of the equidistant pair


def test_knn_single_class():
    rng = derive_rng(5, 0)
    train = index_from(rng.normal(size=(8, 4)), np.zeros(8))
    test = index_from(rng.normal(size=(4, 4)), np.zeros(4), ids=[(f"q{i}", 0) for i in range(4)])
    assert knn_accuracy(train, test) == 1.0


def test_knn_errors():
    idx = index_from(np.zeros((2, 3)), [0, 1])
    with pytest.raises(EvalError):
        knn_predict(idx, idx, k=0)
    with pytest.raises(EvalError):
        pairwise_distances(np.zeros((1, 2)), np.zeros((1, 2)), metric="manhattan")


def test_distance_symmetry():
    rng = derive_rng(6, 0)
    x = rng.normal(size=(7, 5))
    d = pairwise_distances(x, x)
    assert np.max(np.abs(d - d.T)) < 1e-7
    assert np.allclose(np.diag(d), 0.0)


def test_cosine_metric():
    a = np.array([[1.0, 0.0], [0.0, 2.0]])
    d = pairwise_distances(a, a, metric="cosine")
    assert d[0, 1] == pytest.approx(1.0)
    assert d[0, 0] == pytest.approx(0.0, abs=1e-12)


def test_knn_report_schema(params, split32):
    train_e, test_e = index_entries_from_split(split32)
    report = knn_report(build_index(params, train_e, VIT),
                        build_index(params, test_e, VIT), 1, "euclidean")
    assert set(report) == {"accuracy", "per_class_accuracy", "num_train", "num_test",
                           "k", "metric"}
    assert 0.0 <= report["accuracy"] <= 1.0
    assert report["num_train"] == len(split32.train)
    assert report["num_test"] == len(split32.test)


def test_index_entries_use_middle_frames(split32):
    train_e, _ = index_entries_from_split(split32)
    clip = split32.train[0]
    assert np.array_equal(train_e[0][0], clip.frames[clip.num_frames // 2])


def test_forgetting_probe_bounds(params, split32):
    src, tgt = forgetting_probe(params, VIT, split32, split32)
    assert 0.0 <= src <= 1.0 and src == tgt  # same split on both sides
    again = forgetting_probe(params, VIT, split32, split32)
    assert (src, tgt) == again


def test_retrieval_grid(params, split32, tmp_path):
    train_e, test_e = index_entries_from_split(split32)
    tr = build_index(params, train_e, VIT, keep_frames=True)
    te = build_index(params, test_e, VIT, keep_frames=True)
    out_png = tmp_path / "grid.png"
    out_json = tmp_path / "grid.json"
    result = retrieval_grid(tr, te, top_k=3, out_png=out_png, out_json=out_json)
    assert out_png.is_file()
    sidecar = json.loads(out_json.read_text())
    assert sidecar == result
    preds = knn_predict(tr, te, k=1)
    for i, entry in enumerate(result["queries"]):
        dists = [r["distance"] for r in entry["retrieved"]]
        assert dists == sorted(dists)
        assert entry["retrieved"][0]["label"] == preds[i]
        assert entry["retrieved"][0]["correct"] == (preds[i] == te.labels[i])


def test_retrieval_query_in_train_retrieves_itself(params, split32, tmp_path):
    train_e, _ = index_entries_from_split(split32)
    tr = build_index(params, train_e, VIT, keep_frames=True)
    result = retrieval_grid(tr, tr, top_k=1, out_png=tmp_path / "g.png")
    for i, entry in enumerate(result["queries"]):
        assert tuple(entry["retrieved"][0]["id"]) == tr.ids[i]
        assert entry["retrieved"][0]["distance"] == pytest.approx(0.0, abs=1e-5)
