"""Model parameters, solver configuration, loss, and the score cache."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .data import InteractionDataset
from .linalg import gramian

__all__ = [
    "SolverConfig",
    "FactorModel",
    "PredictionCache",
    "init_model",
    "compute_loss",
    "compute_predictions",
    "effective_reg",
    "cache_drift",
]

SOLVERS = ("ials", "icd", "ialspp")

_PRED_CHUNK = 1 << 20


@dataclass
class SolverConfig:
    """Training hyperparameters shared by all solvers.

    ``reg_exponent`` frequency-scales the regularizer: the effective per-row
    strength is ``reg * (row_count + unobserved_weight * opposite_side_size)
    ** reg_exponent``, so heavy rows are damped harder; 0 recovers a plain
    constant ``reg``. ``init_stddev`` is divided by ``sqrt(dim)`` per entry so
    initial score variance does not grow with the dimension. Both scalings
    are conventions of this library, not canonical formulas.

    ``threads`` caps the BLAS pool during solver passes (0 leaves the
    platform default); with ``threads=1`` training is bitwise reproducible
    for a fixed ``seed``.
    """

    dim: int
    block_size: int | None = None
    unobserved_weight: float = 0.1
    reg: float = 0.003
    reg_exponent: float = 1.0
    init_stddev: float = 0.1
    epochs: int = 16
    solver: str = "ialspp"
    threads: int = 0
    seed: int = 0

    def __post_init__(self):
        self.dim = int(self.dim)
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.block_size is None:
            self.block_size = min(64, self.dim)
        self.block_size = int(self.block_size)
        if not 1 <= self.block_size <= self.dim:
            raise ValueError("block_size must be in [1, dim]")
        if self.unobserved_weight < 0:
            raise ValueError("unobserved_weight must be nonnegative")
        if self.reg <= 0:
            raise ValueError("reg must be positive")
        if self.reg_exponent < 0:
            raise ValueError("reg_exponent must be nonnegative")
        if self.init_stddev <= 0:
            raise ValueError("init_stddev must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}")
        if self.threads < 0:
            raise ValueError("threads must be nonnegative")

    def with_(self, **kwargs) -> "SolverConfig":
        return replace(self, **kwargs)


@dataclass
class FactorModel:
    """Dense user and item factor matrices sharing one embedding dimension."""

    user_factors: np.ndarray
    item_factors: np.ndarray

    def __post_init__(self):
        self.user_factors = np.ascontiguousarray(self.user_factors, dtype=np.float64)
        self.item_factors = np.ascontiguousarray(self.item_factors, dtype=np.float64)
        if self.user_factors.ndim != 2 or self.item_factors.ndim != 2:
            raise ValueError("factor matrices must be 2-d")
        if self.user_factors.shape[1] != self.item_factors.shape[1]:
            raise ValueError("factor matrices must share the embedding dimension")
        if not np.isfinite(self.user_factors).all() or not np.isfinite(self.item_factors).all():
            raise ValueError("factor entries must be finite")

    @property
    def dim(self) -> int:
        return self.user_factors.shape[1]

    def copy(self) -> "FactorModel":
        return FactorModel(self.user_factors.copy(), self.item_factors.copy())


@dataclass
class PredictionCache:
    """Cached scores for the observed pairs, in canonical interaction order."""

    scores: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "PredictionCache":
        return cls(np.zeros(int(n)))

    def copy(self) -> "PredictionCache":
        return PredictionCache(self.scores.copy())


def init_model(config: SolverConfig, num_users: int, num_items: int) -> FactorModel:
    """Draw both factor matrices i.i.d. Normal(0, (init_stddev/sqrt(dim))^2).

    Deterministic for a fixed ``config.seed``.
    """
    if num_users < 1 or num_items < 1:
        raise ValueError("model needs at least one user and one item")
    rng = np.random.default_rng(config.seed)
    scale = config.init_stddev / math.sqrt(config.dim)
    user = rng.normal(0.0, scale, size=(int(num_users), config.dim))
    item = rng.normal(0.0, scale, size=(int(num_items), config.dim))
    return FactorModel(user, item)


def _check_pair(model: FactorModel, data: InteractionDataset):
    if model.user_factors.shape[0] != data.num_users:
        raise ValueError("user factor rows do not match the dataset")
    if model.item_factors.shape[0] != data.num_items:
        raise ValueError("item factor rows do not match the dataset")


def effective_reg(counts, opposite_size, config: SolverConfig):
    """Per-row regularizer ``reg * (count + unobserved_weight*opposite)**exp``.

    ``counts`` may be an array (one entry per row) or a scalar.
    """
    base = np.asarray(counts, dtype=np.float64) + config.unobserved_weight * opposite_size
    return config.reg * base ** config.reg_exponent


def compute_predictions(model: FactorModel, data: InteractionDataset,
                        out: PredictionCache | None = None) -> PredictionCache:
    """Scores for every observed pair, in canonical interaction order."""
    _check_pair(model, data)
    cache = PredictionCache(np.empty(data.n_interactions)) if out is None else out
    if cache.scores.shape != (data.n_interactions,):
        raise ValueError("cache length does not match the dataset")
    w, h = model.user_factors, model.item_factors
    for start in range(0, data.n_interactions, _PRED_CHUNK):
        stop = min(start + _PRED_CHUNK, data.n_interactions)
        np.einsum("kd,kd->k", w[data.users[start:stop]], h[data.items[start:stop]],
                  out=cache.scores[start:stop])
    return cache


def compute_loss(model: FactorModel, data: InteractionDataset, config: SolverConfig) -> float:
    """Weighted squared error plus the all-pairs pull-to-zero and L2 terms.

    The all-pairs term sums ``score(u, i)^2`` over the full user-item cross
    product; it is evaluated exactly through the Gramian identity
    ``sum_u w_u' G w_u = <W'W, H'H>`` rather than by enumerating pairs.
    """
    _check_pair(model, data)
    w, h = model.user_factors, model.item_factors
    observed = 0.0
    for start in range(0, data.n_interactions, _PRED_CHUNK):
        stop = min(start + _PRED_CHUNK, data.n_interactions)
        scores = np.einsum("kd,kd->k", w[data.users[start:stop]], h[data.items[start:stop]])
        err = scores - data.labels[start:stop]
        observed += float(np.dot(data.weights[start:stop] * err, err))
    unobserved = config.unobserved_weight * float(np.sum(gramian(w) * gramian(h)))
    lam_users = effective_reg(data.user_counts, data.num_items, config)
    lam_items = effective_reg(data.item_counts, data.num_users, config)
    reg = float(np.dot(lam_users, np.einsum("ud,ud->u", w, w)))
    reg += float(np.dot(lam_items, np.einsum("id,id->i", h, h)))
    return observed + unobserved + reg


def cache_drift(cache: PredictionCache, model: FactorModel, data: InteractionDataset) -> float:
    """Largest relative deviation of the cache from freshly computed scores.

    Relative means ``|cached - fresh| / (1 + |fresh|)``.
    """
    fresh = compute_predictions(model, data)
    gap = np.abs(cache.scores - fresh.scores)
    return float(np.max(gap / (1.0 + np.abs(fresh.scores)), initial=0.0))
