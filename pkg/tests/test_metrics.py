import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockals import (SolverConfig, UserFold, evaluate_holdout, ndcg_at_k,
                      rank_items, recall_at_k, top_k_from_scores)
from blockals.solvers import project_user


def full_sort_topk(scores, k, exclude=()):
    """Reference ranking: full sort on (-score, index) after exclusion."""
    banned = set(exclude)
    order = sorted((i for i in range(len(scores)) if i not in banned),
                   key=lambda i: (-scores[i], i))
    return order[:k]


class TestTopK:
    def test_exclusion_and_order(self):
        scores = np.array([0.9, 0.5, 0.7])
        got = top_k_from_scores(scores, 2, exclude={0})
        assert got.tolist() == [2, 1]

    def test_all_equal_scores_sort_by_index(self):
        got = top_k_from_scores(np.ones(6), 4)
        assert got.tolist() == [0, 1, 2, 3]

    def test_k_beyond_pool_returns_pool(self):
        got = top_k_from_scores(np.array([1.0, 3.0, 2.0]), 10, exclude={1})
        assert got.tolist() == [2, 0]

    def test_matches_full_sort_on_random_instances(self, rng):
        for _ in range(5):
            scores = rng.choice(np.round(rng.normal(size=40), 2), size=1000)
            exclude = rng.choice(1000, size=50, replace=False)
            k = int(rng.integers(1, 200))
            got = top_k_from_scores(scores, k, exclude=exclude)
            assert got.tolist() == full_sort_topk(scores, k, exclude)

    def test_rejects_nonpositive_k(self):
        with pytest.raises(ValueError):
            top_k_from_scores(np.ones(3), 0)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_invariant_to_monotone_transforms(self, seed):
        rng = np.random.default_rng(seed)
        scores = rng.choice(np.round(rng.normal(size=8), 1), size=60)
        k = int(rng.integers(1, 20))
        base = top_k_from_scores(scores, k).tolist()
        assert top_k_from_scores(3.0 * scores + 1.0, k).tolist() == base
        assert top_k_from_scores(np.arcsinh(scores), k).tolist() == base


class TestRankItems:
    def test_scores_come_from_dot_products(self):
        item_factors = np.array([[1.0], [3.0], [2.0]])
        got = rank_items(np.array([1.0]), item_factors, k=3)
        assert got.tolist() == [1, 2, 0]

    def test_excluded_items_never_appear(self, rng):
        item_factors = rng.normal(size=(30, 4))
        emb = rng.normal(size=4)
        exclude = {1, 5, 9}
        got = rank_items(emb, item_factors, exclude=exclude, k=30)
        assert not set(got.tolist()) & exclude


class TestRecall:
    def test_all_targets_found(self):
        assert recall_at_k([1, 2, 3], {1, 2}, 3) == 1.0

    def test_half_found(self):
        assert recall_at_k(["A", "B"], {"A", "C"}, 2) == 0.5

    def test_no_overlap(self):
        assert recall_at_k([1, 2], {3, 4}, 2) == 0.0

    def test_denominator_truncates_at_k(self):
        # five targets, k=2, both slots hit -> full credit
        assert recall_at_k([1, 2], {1, 2, 3, 4, 5}, 2) == 1.0

    def test_empty_targets_rejected(self):
        with pytest.raises(ValueError):
            recall_at_k([1], set(), 1)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_monotone_in_k_once_denominator_saturates(self, seed):
        # with the min(k, |targets|) denominator, recall can shrink while
        # k < |targets| (the denominator still grows); from k = |targets| on,
        # hits only accumulate and the value is non-decreasing
        rng = np.random.default_rng(seed)
        ranking = rng.permutation(30).tolist()
        targets = set(rng.choice(30, size=5, replace=False).tolist())
        values = [recall_at_k(ranking, targets, k) for k in range(1, 31)]
        assert all(0.0 <= v <= 1.0 for v in values)
        saturated = values[len(targets) - 1:]
        assert all(b >= a - 1e-12 for a, b in zip(saturated, saturated[1:]))


class TestNdcg:
    def test_perfect_prefix(self):
        assert ndcg_at_k([7, 3, 1], {7, 3}, 100) == pytest.approx(1.0)

    def test_hits_at_one_and_three(self):
        got = ndcg_at_k([5, 0, 6], {5, 6}, 100)
        want = (1.0 + 1.0 / 2.0) / (1.0 + 1.0 / math.log2(3.0))
        assert got == pytest.approx(want, rel=1e-12)
        assert got == pytest.approx(0.9197207891481876, rel=1e-12)

    def test_no_hits(self):
        assert ndcg_at_k([1, 2], {3}, 10) == 0.0

    def test_bounded_by_one(self, rng):
        for _ in range(20):
            ranking = rng.permutation(40).tolist()
            targets = set(rng.choice(40, size=6, replace=False).tolist())
            k = int(rng.integers(1, 50))
            assert 0.0 <= ndcg_at_k(ranking, targets, k) <= 1.0 + 1e-12


def scripted_evaluation(item_factors, folds, config, recall_ks, ndcg_ks):
    """Independent reimplementation: explicit projection, sort, and metric math."""
    recalls = {k: [] for k in recall_ks}
    ndcgs = {k: [] for k in ndcg_ks}
    for fold in folds:
        if len(fold.target_items) == 0:
            continue
        emb = project_user(item_factors, fold.input_items, fold.input_labels,
                           fold.input_weights, config=config)
        scores = item_factors @ emb
        ranked = full_sort_topk(scores, len(scores), exclude=set(fold.input_items.tolist()))
        targets = set(fold.target_items.tolist())
        for k in recall_ks:
            hits = sum(1 for i in ranked[:k] if i in targets)
            recalls[k].append(hits / min(k, len(targets)))
        for k in ndcg_ks:
            dcg = sum(1.0 / math.log2(p + 1)
                      for p, i in enumerate(ranked[:k], start=1) if i in targets)
            ideal = sum(1.0 / math.log2(p + 1)
                        for p in range(1, min(k, len(targets)) + 1))
            ndcgs[k].append(dcg / ideal)
    return ({k: float(np.mean(v)) for k, v in recalls.items()},
            {k: float(np.mean(v)) for k, v in ndcgs.items()})


def make_fold(user, input_items, target_items):
    input_items = np.asarray(input_items, dtype=np.int64)
    target_items = np.asarray(target_items, dtype=np.int64)
    return UserFold(user, input_items, np.ones(input_items.size),
                    np.ones(input_items.size), target_items,
                    np.ones(target_items.size), np.ones(target_items.size))


class TestEvaluateHoldout:
    def test_perfect_user(self):
        # d=1: ranking follows item magnitude; targets are the best unseen items
        item_factors = np.array([[3.0], [2.5], [2.0], [0.5], [0.1]])
        config = SolverConfig(dim=1, unobserved_weight=0.01, reg=0.01)
        folds = [make_fold(0, [0], [1, 2])]
        report = evaluate_holdout(item_factors, folds, config,
                                  recall_ks=(2,), ndcg_ks=(2,))
        assert report.recall_at[2] == 1.0
        assert report.ndcg_at[2] == 1.0
        assert report.num_users_evaluated == 1

    def test_mean_over_two_users(self):
        item_factors = np.array([[3.0], [2.5], [2.0], [0.5], [0.1]])
        config = SolverConfig(dim=1, unobserved_weight=0.01, reg=0.01)
        folds = [make_fold(0, [0], [1]),    # top-ranked target -> 1.0
                 make_fold(1, [0], [4])]    # bottom-ranked target -> 0.0
        report = evaluate_holdout(item_factors, folds, config,
                                  recall_ks=(1,), ndcg_ks=(1,))
        assert report.recall_at[1] == 0.5
        assert report.ndcg_at[1] == 0.5

    def test_users_without_targets_are_skipped(self):
        item_factors = np.array([[1.0], [2.0], [0.5], [0.2], [0.1]])
        config = SolverConfig(dim=1, unobserved_weight=0.01, reg=0.01)
        folds = [make_fold(0, [0, 2], []), make_fold(1, [0], [1])]
        report = evaluate_holdout(item_factors, folds, config,
                                  recall_ks=(1,), ndcg_ks=(1,))
        assert report.num_users_evaluated == 1

    def test_no_evaluable_users_rejected(self):
        config = SolverConfig(dim=1)
        with pytest.raises(ValueError):
            evaluate_holdout(np.ones((3, 1)), [make_fold(0, [0], [])], config)

    def test_matches_scripted_oracle(self, rng):
        num_items = 40
        item_factors = rng.normal(size=(num_items, 4))
        config = SolverConfig(dim=4, unobserved_weight=0.1, reg=0.05)
        folds = []
        for user in range(20):
            perm = rng.permutation(num_items)
            n_in = int(rng.integers(3, 10))
            n_tar = int(rng.integers(1, 5))
            folds.append(make_fold(user, perm[:n_in], perm[n_in:n_in + n_tar]))
        report = evaluate_holdout(item_factors, folds, config,
                                  recall_ks=(5, 10), ndcg_ks=(10,))
        recalls, ndcgs = scripted_evaluation(item_factors, folds, config,
                                             (5, 10), (10,))
        for k in (5, 10):
            assert report.recall_at[k] == pytest.approx(recalls[k], abs=1e-10)
        assert report.ndcg_at[10] == pytest.approx(ndcgs[10], abs=1e-10)
