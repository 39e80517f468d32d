"""Embedding extraction and k-NN evaluation harness.

Frames are resized to the model's global input size (no training
augmentations), passed through the backbone, and the class-token embedding is
indexed. Classification assigns each held-out frame the label of its nearest
training-video embedding; both sides of the index hold one middle frame per
video. Checkpoints are evaluated on the student's effective weights (adapters
merged into the base matrices).
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .data import split_dataset
from .errors import EvalError
from .imageops import resize_bilinear
from .model import forward, merge_adapters

EVAL_BATCH = 64


@dataclass
class EmbeddingIndex:
    vectors: np.ndarray         # [M, D]
    labels: np.ndarray          # [M] int class ids
    ids: list                   # [(video_id, frame_index)]
    frames: np.ndarray | None = None   # optional [M, H, W, C] for retrieval sheets

    def __post_init__(self):
        if len(self.ids) != len(set(self.ids)):
            raise EvalError("duplicate (video_id, frame_index) entries in index")

    def __len__(self):
        return self.vectors.shape[0]


def extract(params: dict, frames: np.ndarray, vit, adapters=None,
            batch_size: int = EVAL_BATCH) -> np.ndarray:
    """Backbone class-token embeddings for [M, H, W, C] frames (head excluded)."""
    eff = merge_adapters(params, adapters) if adapters else params
    size = vit.image_size
    prepped = np.stack([
        f if f.shape[0] == size and f.shape[1] == size else resize_bilinear(f, size, size)
        for f in frames
    ]).astype(np.float32)
    out = []
    for start in range(0, len(prepped), batch_size):
        emb, _ = forward(eff, None, prepped[start:start + batch_size], vit)
        out.append(emb)
    return np.concatenate(out, axis=0)


def build_index(params: dict, entries, vit, adapters=None, keep_frames=False) -> EmbeddingIndex:
    """entries: iterable of (frame, class_id, video_id, frame_index)."""
    entries = list(entries)
    if not entries:
        raise EvalError("cannot build an index from zero frames")
    frames = np.stack([e[0] for e in entries])
    vectors = extract(params, frames, vit, adapters=adapters)
    return EmbeddingIndex(vectors=vectors,
                          labels=np.array([e[1] for e in entries], dtype=np.int64),
                          ids=[(e[2], e[3]) for e in entries],
                          frames=frames if keep_frames else None)


def index_entries_from_split(split):
    """Train side: middle frame of each training video. Test side: the split's
    held-out frames."""
    train = [(c.frames[c.num_frames // 2], c.class_id, c.video_id, c.num_frames // 2)
             for c in split.train]
    test = [(t.frame, t.class_id, t.video_id, t.frame_index) for t in split.test]
    return train, test


def pairwise_distances(queries: np.ndarray, refs: np.ndarray, metric: str = "euclidean",
                       block: int = 128) -> np.ndarray:
    """[Q, R] distance matrix in float64, computed by direct differences."""
    q = np.asarray(queries, dtype=np.float64)
    r = np.asarray(refs, dtype=np.float64)
    if metric == "cosine":
        qn = q / np.maximum(np.linalg.norm(q, axis=1, keepdims=True), 1e-12)
        rn = r / np.maximum(np.linalg.norm(r, axis=1, keepdims=True), 1e-12)
        return 1.0 - qn @ rn.T
    if metric != "euclidean":
        raise EvalError(f"unknown metric {metric!r}")
    out = np.empty((q.shape[0], r.shape[0]))
    for start in range(0, q.shape[0], block):
        diff = q[start:start + block, None, :] - r[None, :, :]
        out[start:start + block] = np.sqrt((diff * diff).sum(-1))
    return out


def knn_predict(train_index: EmbeddingIndex, test_index: EmbeddingIndex, k: int = 1,
                metric: str = "euclidean") -> np.ndarray:
    """Predicted labels; k > 1 uses majority vote, ties broken by the nearest
    member of the tied classes, equidistant neighbors by lower index."""
    if len(train_index) == 0 or len(test_index) == 0:
        raise EvalError("knn needs non-empty train and test indexes")
    if k < 1:
        raise EvalError("k must be >= 1")
    dists = pairwise_distances(test_index.vectors, train_index.vectors, metric)
    labels = train_index.labels
    if k == 1:
        return labels[np.argmin(dists, axis=1)]
    preds = np.empty(len(test_index), dtype=np.int64)
    order = np.argsort(dists, axis=1, kind="stable")[:, :k]
    for i, nbrs in enumerate(order):
        votes = {}
        for rank, j in enumerate(nbrs):
            votes.setdefault(int(labels[j]), []).append(rank)
        top = max(len(v) for v in votes.values())
        tied = [(min(ranks), lab) for lab, ranks in votes.items() if len(ranks) == top]
        preds[i] = min(tied)[1]
    return preds


def knn_accuracy(train_index: EmbeddingIndex, test_index: EmbeddingIndex, k: int = 1,
                 metric: str = "euclidean") -> float:
    preds = knn_predict(train_index, test_index, k, metric)
    return float(np.mean(preds == test_index.labels))


def knn_report(train_index: EmbeddingIndex, test_index: EmbeddingIndex, k: int = 1,
               metric: str = "euclidean") -> dict:
    preds = knn_predict(train_index, test_index, k, metric)
    correct = preds == test_index.labels
    per_class = {}
    for cid in np.unique(test_index.labels):
        sel = test_index.labels == cid
        per_class[str(int(cid))] = float(np.mean(correct[sel]))
    return {
        "accuracy": float(np.mean(correct)),
        "per_class_accuracy": per_class,
        "num_train": len(train_index),
        "num_test": len(test_index),
        "k": k,
        "metric": metric,
    }


def evaluate_params_on_clips(params, clips, vit, adapters=None, ratio=0.75, seed=0,
                             k=1, metric="euclidean") -> dict:
    split = split_dataset(clips, ratio, seed)
    train_e, test_e = index_entries_from_split(split)
    tr = build_index(params, train_e, vit, adapters=adapters)
    te = build_index(params, test_e, vit, adapters=adapters)
    return knn_report(tr, te, k, metric)


def forgetting_probe(params, vit, source_split, target_split, adapters=None, k=1,
                     metric="euclidean") -> tuple:
    """(source_acc, target_acc) of one checkpoint, quantifying how much
    adapting to the target domain costs on the original domain."""
    accs = []
    for split in (source_split, target_split):
        train_e, test_e = index_entries_from_split(split)
        tr = build_index(params, train_e, vit, adapters=adapters)
        te = build_index(params, test_e, vit, adapters=adapters)
        accs.append(knn_accuracy(tr, te, k, metric))
    return accs[0], accs[1]


# ---------------------------------------------------------------------------
# Retrieval contact sheets

def _bordered(frame: np.ndarray, color, border: int = 2) -> np.ndarray:
    h, w, c = frame.shape
    out = np.empty((h + 2 * border, w + 2 * border, c), dtype=frame.dtype)
    out[:] = np.asarray(color, dtype=frame.dtype)
    out[border:border + h, border:border + w] = frame
    return out


def retrieval_grid(train_index: EmbeddingIndex, query_index: EmbeddingIndex, top_k: int,
                   out_png, out_json=None, metric: str = "euclidean",
                   max_queries: int = 16) -> dict:
    """PNG contact sheet (query column plus top_k retrievals, green/red borders
    by label match) and a JSON sidecar with ids and distances."""
    if train_index.frames is None or query_index.frames is None:
        raise EvalError("retrieval_grid needs indexes built with keep_frames=True")
    n_q = min(len(query_index), max_queries)
    dists = pairwise_distances(query_index.vectors[:n_q], train_index.vectors, metric)
    order = np.argsort(dists, axis=1, kind="stable")[:, :top_k]

    green, red, white = (0.0, 0.8, 0.0), (0.9, 0.0, 0.0), (1.0, 1.0, 1.0)
    rows, sidecar = [], []
    for i in range(n_q):
        cells = [_bordered(query_index.frames[i], white)]
        entry = {"query_id": list(query_index.ids[i]),
                 "query_label": int(query_index.labels[i]), "retrieved": []}
        for j in order[i]:
            correct = bool(train_index.labels[j] == query_index.labels[i])
            cells.append(_bordered(train_index.frames[j], green if correct else red))
            entry["retrieved"].append({"id": list(train_index.ids[j]),
                                       "label": int(train_index.labels[j]),
                                       "distance": float(dists[i, j]),
                                       "correct": correct})
        rows.append(np.concatenate(cells, axis=1))
        sidecar.append(entry)
    sheet = np.concatenate(rows, axis=0)
    out_png = Path(out_png)
    out_png.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.round(np.clip(sheet, 0, 1) * 255).astype(np.uint8)).save(out_png)
    result = {"queries": sidecar, "top_k": top_k, "metric": metric}
    if out_json is not None:
        Path(out_json).write_text(json.dumps(result, indent=2))
    return result
