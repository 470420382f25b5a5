"""Ranking metrics over held-out users: recall@k and NDCG@k."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .solvers import fold_in_users

__all__ = [
    "MetricReport",
    "top_k_from_scores",
    "rank_items",
    "recall_at_k",
    "ndcg_at_k",
    "evaluate_holdout",
]


@dataclass
class MetricReport:
    """Per-k metric means over the evaluated user set."""

    recall_at: dict
    ndcg_at: dict
    num_users_evaluated: int


def top_k_from_scores(scores, k, exclude=None) -> np.ndarray:
    """Indices of the k largest scores, ties broken by ascending index.

    Excluded indices never appear; if fewer than k candidates remain, all of
    them are returned. Uses partial selection and falls back toward a full
    sort only when the k-th score is tied broadly.
    """
    if k < 1:
        raise ValueError("k must be positive")
    scores = np.asarray(scores, dtype=np.float64)
    if exclude is not None:
        exclude = np.asarray(list(exclude) if not isinstance(exclude, np.ndarray) else exclude,
                             dtype=np.intp)
        if exclude.size:
            scores = scores.copy()
            scores[exclude] = -np.inf
    pool = int(np.isfinite(scores).sum())
    if k < pool:
        kth = np.partition(scores, scores.size - k)[scores.size - k]
        candidates = np.flatnonzero(scores >= kth)
    else:
        candidates = np.flatnonzero(np.isfinite(scores))
    order = np.lexsort((candidates, -scores[candidates]))
    return candidates[order][:min(k, candidates.size)]


def rank_items(user_embedding, item_factors, exclude=None, k=10) -> np.ndarray:
    """Top-k item indices for a user embedding, excluding ``exclude``."""
    scores = item_factors @ np.asarray(user_embedding, dtype=np.float64)
    return top_k_from_scores(scores, k, exclude=exclude)


def recall_at_k(topk, targets, k) -> float:
    """Hits among the first k over ``min(k, |targets|)``."""
    targets = set(targets)
    if not targets:
        raise ValueError("targets must be nonempty")
    hits = sum(1 for item in list(topk)[:k] if item in targets)
    return hits / min(k, len(targets))


def ndcg_at_k(topk, targets, k) -> float:
    """Truncated normalized discounted cumulative gain with binary relevance.

    DCG sums ``1/log2(p+1)`` over hit positions p (1-based) within the first
    k; the ideal DCG places all targets first.
    """
    targets = set(targets)
    if not targets:
        raise ValueError("targets must be nonempty")
    dcg = sum(1.0 / math.log2(p + 1)
              for p, item in enumerate(list(topk)[:k], start=1)
              if item in targets)
    ideal = sum(1.0 / math.log2(p + 1) for p in range(1, min(k, len(targets)) + 1))
    return dcg / ideal


def evaluate_holdout(item_factors, split, config, recall_ks=(20, 50),
                     ndcg_ks=(100,)) -> MetricReport:
    """Fold in every held-out user, rank unseen items, and average metrics.

    Users whose target fold is empty are skipped; input-fold items are
    excluded from each user's candidate list. ``split`` may be a
    :class:`~blockals.pipeline.HoldoutSplit` or a list of folds.
    """
    if not recall_ks and not ndcg_ks:
        raise ValueError("at least one k is required")
    folds = split.folds if hasattr(split, "folds") else list(split)
    evaluated = [f for f in folds if np.asarray(f.target_items).size > 0]
    if not evaluated:
        raise ValueError("no holdout users with target interactions")
    embeddings = fold_in_users(
        item_factors,
        [(f.input_items, f.input_labels, f.input_weights) for f in evaluated],
        config)
    k_max = max(list(recall_ks) + list(ndcg_ks))
    recall_sums = {k: 0.0 for k in recall_ks}
    ndcg_sums = {k: 0.0 for k in ndcg_ks}
    for row, fold in enumerate(evaluated):
        topk = rank_items(embeddings[row], item_factors,
                          exclude=fold.input_items, k=k_max)
        targets = fold.target_items
        for k in recall_ks:
            recall_sums[k] += recall_at_k(topk, targets, k)
        for k in ndcg_ks:
            ndcg_sums[k] += ndcg_at_k(topk, targets, k)
    n = len(evaluated)
    return MetricReport({k: v / n for k, v in recall_sums.items()},
                        {k: v / n for k, v in ndcg_sums.items()}, n)
