"""Evaluation metrics: AUROC, AUPR, silhouette, Spearman rank correlation.

Everything is computed directly on float64 numpy arrays. AUROC is the
exact Mann-Whitney statistic with ties counted half, evaluated through
midranks so large point-level score vectors stay O(n log n).
"""

from __future__ import annotations

import numpy as np

from .exceptions import UndefinedMetricError


def _validate_binary(scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(np.int64)
    if scores.shape != labels.shape:
        raise ValueError(f"scores {scores.shape} and labels {labels.shape} disagree")
    if scores.size == 0:
        raise UndefinedMetricError("empty inputs")
    if not np.isfinite(scores).all():
        raise ValueError("scores contain non-finite values")
    bad = ~np.isin(labels, (0, 1))
    if bad.any():
        raise ValueError("labels must be 0 (normal) or 1 (anomalous)")
    return scores, labels


def _midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks, tied values sharing the average of their rank span."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc(scores: np.ndarray, labels: np.ndarray) -> float:
    """P(score_pos > score_neg) + 0.5 P(score_pos = score_neg).

    Equals the fraction of (positive, negative) pairs ranked correctly,
    ties counting one half. Requires both classes present.
    """
    scores, labels = _validate_binary(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"AUROC needs both classes, got {n_pos} positive / {n_neg} negative"
        )
    ranks = _midranks(scores)
    rank_sum = float(ranks[labels == 1].sum())
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def aupr(scores: np.ndarray, labels: np.ndarray) -> float:
    """Area under the precision-recall curve by stepwise interpolation.

    Thresholds sweep the distinct score values in descending order; each
    step contributes (R_i - R_{i-1}) * P_i, i.e. precision is held at the
    value reached after including the new score level (tied scores enter
    together).
    """
    scores, labels = _validate_binary(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise UndefinedMetricError("AUPR needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    tp = np.cumsum(sorted_labels, dtype=np.float64)
    count = np.arange(1, labels.size + 1, dtype=np.float64)
    # Keep only the last entry of each tied block: that is the state after
    # the whole score level has been admitted.
    last_of_block = np.ones(labels.size, dtype=bool)
    last_of_block[:-1] = sorted_scores[1:] != sorted_scores[:-1]
    tp = tp[last_of_block]
    count = count[last_of_block]
    precision = tp / count
    recall = tp / n_pos
    prev_recall = np.concatenate(([0.0], recall[:-1]))
    return float(((recall - prev_recall) * precision).sum())


def silhouette(embeddings: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette coefficient over all samples, euclidean distances.

    a(i) is the mean distance to other members of i's cluster, b(i) the
    smallest mean distance to any other cluster; s(i) = (b-a)/max(a,b).
    Singleton clusters contribute s(i) = 0. Needs at least two clusters.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels).ravel()
    if emb.ndim != 2 or emb.shape[0] != labels.shape[0]:
        raise ValueError(f"embeddings {emb.shape} and labels {labels.shape} disagree")
    uniq = np.unique(labels)
    if uniq.size < 2:
        raise UndefinedMetricError("silhouette needs at least two clusters")
    n = emb.shape[0]
    diff = emb[:, None, :] - emb[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    members = {c: np.flatnonzero(labels == c) for c in uniq}
    s = np.zeros(n, dtype=np.float64)
    for c, idx in members.items():
        if idx.size == 1:
            continue  # singleton: s stays 0
        own = dist[np.ix_(idx, idx)]
        a = own.sum(axis=1) / (idx.size - 1)
        b = np.full(idx.size, np.inf)
        for c2, idx2 in members.items():
            if c2 == c:
                continue
            np.minimum(b, dist[np.ix_(idx, idx2)].mean(axis=1), out=b)
        denom = np.maximum(a, b)
        ok = denom > 0
        s[idx[ok]] = (b[ok] - a[ok]) / denom[ok]
    return float(s.mean())


def spearman(x: np.ndarray, y: np.ndarray) -> float:
    """Spearman rank correlation: Pearson correlation of midranks."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError(f"inputs disagree in shape: {x.shape} vs {y.shape}")
    if x.size < 2:
        raise UndefinedMetricError("rank correlation needs at least two samples")
    rx = _midranks(x)
    ry = _midranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt((rx * rx).sum() * (ry * ry).sum())
    if denom == 0.0:
        raise UndefinedMetricError("rank correlation undefined for constant input")
    return float((rx * ry).sum() / denom)
