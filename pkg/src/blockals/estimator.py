"""Scikit-learn style estimator wrapping the block-ALS trainers."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator

from .data import InteractionDataset
from .metrics import rank_items
from .model import SolverConfig, init_model
from .solvers import fold_in_users, train

__all__ = ["ImplicitALS"]


def _as_dataset(X, num_items=None) -> InteractionDataset:
    """Validate and convert an interaction matrix into a dataset.

    Accepts an :class:`InteractionDataset`, any scipy sparse matrix, or a
    dense 2-d array; matrix values become observation weights and labels
    default to 1. Pass a dataset directly for explicit labels.
    """
    if isinstance(X, InteractionDataset):
        if num_items is not None and X.num_items != num_items:
            raise ValueError(f"expected {num_items} items, got {X.num_items}")
        return X
    if sp.issparse(X):
        coo = X.tocoo()
        users, items, values = coo.row, coo.col, coo.data
        shape = coo.shape
    elif isinstance(X, np.ndarray):
        if X.ndim != 2:
            raise ValueError("dense input must be 2-d")
        users, items = np.nonzero(X)
        values = X[users, items]
        shape = X.shape
    else:
        raise TypeError("X must be an InteractionDataset, a scipy sparse matrix, "
                        "or a 2-d numpy array")
    if num_items is not None and shape[1] != num_items:
        raise ValueError(f"expected {num_items} item columns, got {shape[1]}")
    return InteractionDataset(shape[0], shape[1], users, items, weights=values)


class ImplicitALS(BaseEstimator):
    """Implicit-feedback matrix factorization with selectable ALS solvers.

    ``solver`` picks the update granularity: ``"ials"`` re-solves whole
    embedding vectors, ``"icd"`` updates one coordinate at a time, and
    ``"ialspp"`` updates subvectors of ``block_size`` coordinates, trading
    per-step cost against time spent in vectorized kernels. All three
    minimize the same objective and converge to models of equivalent
    quality.

    Parameters
    ----------
    factors : int
        Embedding dimension.
    solver : {"ialspp", "ials", "icd"}
        Training procedure.
    block_size : int, optional
        Subvector length for ``"ialspp"``; defaults to ``min(64, factors)``.
    alpha0 : float
        Weight pulling every user-item score toward zero.
    reg : float
        Base L2 regularization strength.
    reg_exponent : float
        Frequency-scaling exponent of the per-row regularizer.
    init_stddev : float
        Scale of the random initialization (divided by ``sqrt(factors)``).
    epochs : int
        Training epochs.
    threads : int
        BLAS thread cap during training; 0 keeps the platform default.
    random_state : int
        Seed for the factor initialization.

    Attributes
    ----------
    user_factors_ : ndarray of shape (n_users, factors)
    item_factors_ : ndarray of shape (n_items, factors)
    training_reports_ : list of per-epoch timing reports
    """

    def __init__(self, factors=64, solver="ialspp", block_size=None, alpha0=0.1,
                 reg=0.003, reg_exponent=1.0, init_stddev=0.1, epochs=16,
                 threads=0, random_state=0):
        self.factors = factors
        self.solver = solver
        self.block_size = block_size
        self.alpha0 = alpha0
        self.reg = reg
        self.reg_exponent = reg_exponent
        self.init_stddev = init_stddev
        self.epochs = epochs
        self.threads = threads
        self.random_state = random_state

    def _config(self) -> SolverConfig:
        return SolverConfig(
            dim=self.factors, block_size=self.block_size, solver=self.solver,
            unobserved_weight=self.alpha0, reg=self.reg,
            reg_exponent=self.reg_exponent, init_stddev=self.init_stddev,
            epochs=self.epochs, threads=self.threads, seed=self.random_state)

    def fit(self, X, y=None):
        """Factorize the interaction matrix X (users by items)."""
        data = _as_dataset(X)
        config = self._config()
        model = init_model(config, data.num_users, data.num_items)
        _, reports = train(model, data, config)
        self.user_factors_ = model.user_factors
        self.item_factors_ = model.item_factors
        self.training_reports_ = reports
        self.n_users_ = data.num_users
        self.n_items_ = data.num_items
        return self

    def _check_fitted(self):
        if not hasattr(self, "item_factors_"):
            raise RuntimeError("estimator is not fitted")

    def transform(self, X) -> np.ndarray:
        """Fold rows of X (interaction histories) into user embeddings."""
        self._check_fitted()
        data = _as_dataset(X, num_items=self.n_items_)
        view = data.user_view()
        histories = []
        for row in range(data.num_users):
            sl = view.row_slice(row)
            histories.append((view.cols[sl], view.labels[sl], view.weights[sl]))
        return fold_in_users(self.item_factors_, histories, self._config())

    def recommend(self, X, k=10, exclude_seen=True):
        """Top-k items per row of X, folding each row in as a fresh user.

        Returns ``(items, scores)`` of shape (n_rows, k); rows whose
        candidate pool is smaller than k are padded with -1 and NaN.
        """
        self._check_fitted()
        data = _as_dataset(X, num_items=self.n_items_)
        embeddings = self.transform(data)
        view = data.user_view()
        items = np.full((data.num_users, k), -1, dtype=np.int64)
        scores = np.full((data.num_users, k), np.nan)
        for row in range(data.num_users):
            seen = view.cols[view.row_slice(row)] if exclude_seen else None
            top = rank_items(embeddings[row], self.item_factors_, exclude=seen, k=k)
            items[row, :top.size] = top
            scores[row, :top.size] = self.item_factors_[top] @ embeddings[row]
        return items, scores
