"""Segment-level shift scoring and its ROC / F1 evaluation."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import SingleClass, TooShort
from .models import ModelConfig, forward
from .tensor import cosine_distance


def segment_bounds(n: int, k: int = 4) -> list[tuple[int, int]]:
    """``k`` contiguous [start, stop) ranges; earlier segments absorb the remainder."""
    if k < 1:
        raise ValueError("k must be positive")
    if n < k:
        raise TooShort(f"cannot split {n} positions into {k} segments")
    base, extra = divmod(n, k)
    bounds, start = [], 0
    for i in range(k):
        stop = start + base + (i < extra)
        bounds.append((start, stop))
        start = stop
    return bounds


def segment_representations(final_hidden, k: int = 4) -> np.ndarray:
    h = np.asarray(getattr(final_hidden, "data", final_hidden), dtype=np.float64)
    return np.stack([h[a:b].mean(axis=0) for a, b in segment_bounds(h.shape[0], k)])


def shift_scores(segments) -> np.ndarray:
    segs = np.asarray(segments, dtype=np.float64)
    if len(segs) < 2:
        raise ValueError("need at least two segments")
    return np.array([cosine_distance(segs[i], segs[i + 1]) for i in range(len(segs) - 1)])


def label_by_percentile(scores, percentile: float = 75) -> tuple[np.ndarray, float]:
    """Label 1 where a score strictly exceeds the linear-interpolation percentile."""
    s = np.asarray(scores, dtype=np.float64)
    if s.size < 2:
        raise ValueError("need at least two scores")
    threshold = float(np.percentile(s, percentile, method="linear"))
    return (s > threshold).astype(int), threshold


def _classes(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(int)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    if not set(np.unique(y)) <= {0, 1}:
        raise ValueError("labels must be 0/1")
    if y.min(initial=1) == y.max(initial=0):
        raise SingleClass("both classes must be present")
    return s, y


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC from average ranks (ties count one half)."""
    s, y = _classes(scores, labels)
    _, inverse, counts = np.unique(s, return_inverse=True, return_counts=True)
    upper = np.cumsum(counts)
    avg_rank = upper - (counts - 1) / 2.0  # 1-based mid-ranks
    ranks = avg_rank[inverse]
    pos = int(y.sum())
    neg = len(y) - pos
    u = ranks[y == 1].sum() - pos * (pos + 1) / 2.0
    return float(u / (pos * neg))


def roc_curve(scores, labels) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """FPR, TPR and thresholds for predictions ``score >= t``.

    Thresholds run from +inf (nothing predicted) down through every
    distinct score.
    """
    s, y = _classes(scores, labels)
    thresholds = np.concatenate([[np.inf], np.unique(s)[::-1]])
    pred = s[None, :] >= thresholds[:, None]
    pos, neg = y.sum(), len(y) - y.sum()
    tpr = (pred & (y == 1)).sum(axis=1) / pos
    fpr = (pred & (y == 0)).sum(axis=1) / neg
    return fpr, tpr, thresholds


def f1_score(pred, labels) -> float:
    pred = np.asarray(pred).astype(bool)
    y = np.asarray(labels).astype(bool)
    tp = int((pred & y).sum())
    if not pred.any() or tp == 0:
        return 0.0
    precision, recall = tp / pred.sum(), tp / y.sum()
    return float(2 * precision * recall / (precision + recall))


def f1_and_optimal(scores, labels, default_threshold: float = 0.5) -> tuple[float, float, float]:
    """F1 at ``score > default_threshold`` and at the Youden-optimal cut.

    The optimal cut maximizes TPR - FPR over the ROC sweep; ties go to the
    lower threshold.  Predictions there are ``score >= threshold``.
    """
    s, y = _classes(scores, labels)
    f1_default = f1_score(s > default_threshold, y)
    fpr, tpr, thresholds = roc_curve(s, y)
    j = tpr - fpr
    best = np.flatnonzero(j == j.max())[-1]  # thresholds descend
    t = float(thresholds[best])
    return f1_default, f1_score(s >= t, y), t


def tpr_at_fpr(scores, labels, max_fpr: float = 0.1) -> float:
    fpr, tpr, _ = roc_curve(scores, labels)
    return float(tpr[fpr <= max_fpr].max())


@dataclass
class ShiftReport:
    segments: list[list[list[float]]]  # per sequence, k vectors
    scores: list[float]
    labels: list[int]
    label_source: str
    auc: float | None
    f1_default: float | None
    f1_optimal: float | None
    optimal_threshold: float | None
    tpr_at_fpr10: float | None
    percentile_threshold: float | None = None

    def to_json(self) -> dict:
        out = asdict(self)
        if out["optimal_threshold"] is not None and np.isinf(out["optimal_threshold"]):
            out["optimal_threshold"] = "inf"
        return out


def evaluate_shifts(
    segments, scores, labels, label_source: str, percentile_threshold=None, default_threshold: float = 0.5
) -> ShiftReport:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(int)
    both = 0 < y.sum() < len(y)
    if both:
        auc = roc_auc(s, y)
        f1_d, f1_o, t = f1_and_optimal(s, y, default_threshold)
        tpr10 = tpr_at_fpr(s, y)
    else:
        auc = f1_d = f1_o = t = tpr10 = None
    return ShiftReport(
        [np.asarray(g).tolist() for g in segments],
        s.tolist(),
        y.tolist(),
        label_source,
        auc,
        f1_d,
        f1_o,
        t,
        tpr10,
        percentile_threshold,
    )


def sequence_segments(config: ModelConfig, weights, ids, k: int = 4) -> np.ndarray:
    trace = forward(config, weights, ids, collect=("hidden",))
    return segment_representations(trace.hidden_states[-1], k)


def detect_shifts(
    config: ModelConfig,
    weights,
    sequences,
    k: int = 4,
    label_source: str = "self-percentile",
    labels=None,
    percentile: float = 75,
) -> ShiftReport:
    """Score consecutive-segment shifts for every sequence and pool them.

    ``label_source`` is ``self-percentile`` (labels from the pooled scores),
    ``file`` or ``synthetic`` (``labels`` given explicitly, one per pooled score).
    """
    segments = [sequence_segments(config, weights, ids, k) for ids in sequences]
    scores = np.concatenate([shift_scores(s) for s in segments])
    threshold = None
    if label_source == "self-percentile":
        y, threshold = label_by_percentile(scores, percentile)
    elif label_source in ("file", "synthetic"):
        if labels is None:
            raise ValueError(f"label source {label_source!r} needs labels")
        y = np.asarray(labels).astype(int)
        if y.shape != scores.shape:
            raise ValueError(f"expected {scores.size} labels, got {y.size}")
    else:
        raise ValueError(f"unknown label source {label_source!r}")
    return evaluate_shifts(segments, scores, y, label_source, threshold)


def read_labels(path: str | Path) -> np.ndarray:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(payload, list) or any(v not in (0, 1) for v in payload):
        raise ValueError(f"{path}: labels must be a JSON array of 0/1")
    return np.asarray(payload, dtype=int)


# ---------------------------------------------------------------------------
# synthetic ground truth


def synthetic_shift_sequence(
    rng: np.random.Generator, n: int, k: int = 4, blocks: int = 4, vocab: int = 256
) -> tuple[np.ndarray, np.ndarray]:
    """Tokens whose segments draw from disjoint id blocks.

    Each segment picks a block at random; a boundary is labelled 1 exactly
    when the block changes across it.
    """
    width = vocab // blocks
    choice = rng.integers(0, blocks, size=k)
    ids = np.empty(n, dtype=np.int64)
    for b, (lo, hi) in zip(choice, segment_bounds(n, k)):
        ids[lo:hi] = rng.integers(b * width, (b + 1) * width, size=hi - lo)
    return ids, (choice[1:] != choice[:-1]).astype(int)


def synthetic_shift_corpus(
    seed: int, sequences: int = 4, n: int = 128, k: int = 4, vocab: int = 256
) -> tuple[list[np.ndarray], np.ndarray]:
    """Sequences plus pooled boundary labels, redrawn until both classes occur."""
    rng = np.random.default_rng(seed)
    while True:
        pairs = [synthetic_shift_sequence(rng, n, k, vocab=vocab) for _ in range(sequences)]
        labels = np.concatenate([p[1] for p in pairs])
        if 0 < labels.sum() < labels.size:
            return [p[0] for p in pairs], labels
