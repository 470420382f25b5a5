"""Training passes: full-vector, per-coordinate, and block-subvector solvers.

All three solvers minimize the same objective by exact alternating block
minimization; they differ only in how much of an embedding vector one step
touches. Per pass, the fixed side is read-only and each row's update depends
only on its own entries, so rows are batched: rows of similar degree are
padded to a common width and their normal equations assembled with stacked
matmuls, then solved as one batched call.
"""

from __future__ import annotations

import time
from contextlib import nullcontext
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .data import InteractionDataset, SideView
from .linalg import (SingularMatrixError, check_block, gramian,
                     partial_gramian, spd_solve)
from .model import (FactorModel, PredictionCache, SolverConfig, compute_loss,
                    compute_predictions, effective_reg)

__all__ = [
    "BlockPartition",
    "EpochReport",
    "partition_dims",
    "solve_side_full",
    "block_update",
    "coordinate_update",
    "ials_epoch",
    "icd_epoch",
    "ialspp_epoch",
    "iterate_epochs",
    "train",
    "project_user",
    "fold_in_users",
    "block_gradient",
    "block_hessian",
]

# Row chunks are sized so the padded gather/Hessian scratch of one chunk
# stays cache-resident; larger chunks turn the block passes memory-bound.
_SCRATCH_BUDGET = 8 << 20


@dataclass(frozen=True)
class BlockPartition:
    """Ordered, disjoint index blocks covering all embedding dimensions."""

    blocks: tuple
    dim: int

    def __post_init__(self):
        seen = np.zeros(self.dim, dtype=bool)
        for block in self.blocks:
            block = check_block(block, self.dim)
            if seen[block].any():
                raise ValueError("blocks must be disjoint")
            seen[block] = True
        if not seen.all():
            raise ValueError("blocks must cover every dimension")


@dataclass
class EpochReport:
    """Wall-clock phases of one epoch; ``loss`` is filled only on request."""

    epoch: int
    user_seconds: float = 0.0
    item_seconds: float = 0.0
    gramian_seconds: float = 0.0
    cache_seconds: float = 0.0
    loss: float | None = None

    @property
    def train_seconds(self) -> float:
        return self.user_seconds + self.item_seconds + self.gramian_seconds + self.cache_seconds


def partition_dims(dim: int, block_size: int) -> BlockPartition:
    """Contiguous ascending blocks of ``block_size``; the last keeps the remainder."""
    dim, block_size = int(dim), int(block_size)
    if dim < 1:
        raise ValueError("dim must be positive")
    if not 1 <= block_size <= dim:
        raise ValueError("block_size must be in [1, dim]")
    blocks = tuple(np.arange(start, min(start + block_size, dim))
                   for start in range(0, dim, block_size))
    return BlockPartition(blocks, dim)


def _limits(config: SolverConfig):
    if config.threads and config.threads > 0:
        return threadpool_limits(limits=config.threads)
    return nullcontext()


def _solve_rows(hess, rhs, rows):
    """Batched solve; on a singular system, name the offending row."""
    try:
        return np.linalg.solve(hess, rhs[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError:
        for i in range(rows.size):
            try:
                spd_solve(hess[i], rhs[i])
            except SingularMatrixError as err:
                raise SingularMatrixError(
                    f"normal equations singular for row {int(rows[i])}"
                    f" (pivot {err.pivot})",
                    pivot=err.pivot, row=int(rows[i])) from err
        raise


def _chunk_rows(width: int, per_entry: int, per_row: int) -> int:
    bytes_per_row = 8 * (width * per_entry + per_row)
    return max(1, _SCRATCH_BUDGET // max(bytes_per_row, 1))


def _padded_fixed(fixed: np.ndarray, block) -> np.ndarray:
    """Fixed-side columns for the block, with a trailing all-zero sentinel row."""
    out = np.zeros((fixed.shape[0] + 1, len(block)))
    out[:-1] = fixed[:, block]
    return out


def _ls_side_pass(view: SideView, fixed, update, gram, alpha0, lam_rows):
    """Replace each row of ``update`` with its exact least-squares solution."""
    d = fixed.shape[1]
    full = np.arange(d)
    fixed_ext = _padded_fixed(fixed, full)
    diag = np.arange(d)
    for bucket in view.buckets():
        if bucket.rows.size == 0:
            continue
        step = _chunk_rows(bucket.width, 3 * d + 4, 2 * d * d + 2 * d)
        for start in range(0, bucket.rows.size, step):
            stop = start + step
            rows = bucket.rows[start:stop]
            hp = fixed_ext[bucket.cols[start:stop]]          # (m, K, d)
            alpha = bucket.weights[start:stop]
            rhs = np.matmul((alpha * bucket.labels[start:stop])[:, None, :], hp)[:, 0, :]
            scaled = hp * np.sqrt(alpha)[:, :, None]
            hess = np.matmul(scaled.transpose(0, 2, 1), scaled)
            hess += alpha0 * gram
            hess[:, diag, diag] += lam_rows[rows][:, None]
            update[rows] = _solve_rows(hess, rhs, rows)


def _newton_side_pass(view: SideView, fixed, update, cache_ext, block, slab,
                      alpha0, lam_rows):
    """One exact Newton step on the block coordinates of every row.

    ``cache_ext`` is the score cache with one trailing scratch slot that
    padded entries point at; deltas are folded into it in place.
    """
    p = block.size
    slab_block = np.ascontiguousarray(slab[block, :])
    fixed_blk = _padded_fixed(fixed, block)
    diag = np.arange(p)
    for bucket in view.buckets():
        if bucket.rows.size == 0:
            continue
        step = _chunk_rows(bucket.width, 3 * p + 4, 2 * p * p + 4 * p)
        for start in range(0, bucket.rows.size, step):
            stop = start + step
            rows = bucket.rows[start:stop]
            pos = bucket.cache_pos[start:stop]
            hp = fixed_blk[bucket.cols[start:stop]]          # (m, K, p)
            alpha = bucket.weights[start:stop]
            resid = alpha * (cache_ext[pos] - bucket.labels[start:stop])
            grad = np.matmul(resid[:, None, :], hp)[:, 0, :]
            grad += alpha0 * (update[rows] @ slab)
            lam = lam_rows[rows]
            scatter = np.ix_(rows, block)
            w_block = update[scatter]
            grad += lam[:, None] * w_block
            scaled = hp * np.sqrt(alpha)[:, :, None]
            hess = np.matmul(scaled.transpose(0, 2, 1), scaled)
            hess += alpha0 * slab_block
            hess[:, diag, diag] += lam[:, None]
            delta = _solve_rows(hess, grad, rows)
            update[scatter] = w_block - delta
            cache_ext[pos] -= np.matmul(hp, delta[:, :, None])[:, :, 0]


def _icd_side(update, fixed, yhat, rows_of, cols_of, labels, weights,
              lam_rows, alpha0, f, g):
    """Exact scalar update of column ``f`` for every row of one side."""
    n_rows = update.shape[0]
    hf = fixed[cols_of, f]
    resid = weights * (yhat - labels)
    num = np.bincount(rows_of, resid * hf, minlength=n_rows)
    num += alpha0 * (update @ g)
    num += lam_rows * update[:, f]
    den = np.bincount(rows_of, weights * hf * hf, minlength=n_rows)
    den += alpha0 * g[f] + lam_rows
    if (den <= 0).any():
        bad = int(np.argmin(den))
        raise SingularMatrixError(
            f"non-positive curvature for row {bad} at dimension {f}",
            pivot=int(f), row=bad)
    delta = num / den
    update[:, f] -= delta
    yhat -= delta[rows_of] * hf


def _side_regs(data: InteractionDataset, config: SolverConfig):
    lam_users = np.asarray(effective_reg(data.user_counts, data.num_items, config))
    lam_items = np.asarray(effective_reg(data.item_counts, data.num_users, config))
    return lam_users, lam_items


def solve_side_full(side_params, fixed_params, view: SideView, config: SolverConfig,
                    lam_rows=None, gram=None):
    """Exact regularized least squares for every row against the fixed side.

    Each row ``r`` becomes the minimizer of its quadratic:
    ``(sum_k a_k h_k h_k' + alpha0*G + lam_r*I)^-1 sum_k a_k y_k h_k`` with
    ``G`` the fixed side's Gramian. Returns ``side_params`` (updated in
    place). A singular system raises with the offending row id.
    """
    if side_params.shape[0] != view.n_rows or fixed_params.shape[0] != view.n_cols:
        raise ValueError("parameter shapes do not match the adjacency view")
    if lam_rows is None:
        lam_rows = np.asarray(effective_reg(view.counts, view.n_cols, config))
    if gram is None:
        gram = gramian(fixed_params)
    _ls_side_pass(view, fixed_params, side_params, gram,
                  config.unobserved_weight, lam_rows)
    return side_params


def block_update(model: FactorModel, data: InteractionDataset, cache: PredictionCache,
                 config: SolverConfig, block, side="user"):
    """One Newton block pass over one side, maintaining the score cache."""
    block = check_block(block, model.dim)
    lam_users, lam_items = _side_regs(data, config)
    cache_ext = np.append(cache.scores, 0.0)
    if side == "user":
        slab = partial_gramian(model.item_factors, block)
        _newton_side_pass(data.user_view(), model.item_factors, model.user_factors,
                          cache_ext, block, slab, config.unobserved_weight, lam_users)
    elif side == "item":
        slab = partial_gramian(model.user_factors, block)
        _newton_side_pass(data.item_view(), model.user_factors, model.item_factors,
                          cache_ext, block, slab, config.unobserved_weight, lam_items)
    else:
        raise ValueError("side must be 'user' or 'item'")
    cache.scores[:] = cache_ext[:-1]


def coordinate_update(model: FactorModel, data: InteractionDataset, cache: PredictionCache,
                      config: SolverConfig, dim_index: int, side="user"):
    """One scalar-coordinate pass over one side, maintaining the score cache."""
    f = int(dim_index)
    if not 0 <= f < model.dim:
        raise ValueError("dim_index out of range")
    lam_users, lam_items = _side_regs(data, config)
    w, h = model.user_factors, model.item_factors
    if side == "user":
        g = h.T @ h[:, f]
        _icd_side(w, h, cache.scores, data.users, data.items, data.labels,
                  data.weights, lam_users, config.unobserved_weight, f, g)
    elif side == "item":
        g = w.T @ w[:, f]
        _icd_side(h, w, cache.scores, data.items, data.users, data.labels,
                  data.weights, lam_items, config.unobserved_weight, f, g)
    else:
        raise ValueError("side must be 'user' or 'item'")


def ials_epoch(model: FactorModel, data: InteractionDataset, config: SolverConfig,
               epoch_index: int = 0) -> EpochReport:
    """Full-vector epoch: exact user pass, then exact item pass.

    Score caches are not touched; the closed-form solve never needs them.
    """
    lam_users, lam_items = _side_regs(data, config)
    report = EpochReport(epoch_index)
    clock = time.perf_counter

    t0 = clock()
    gram_items = gramian(model.item_factors)
    report.gramian_seconds += clock() - t0
    t0 = clock()
    solve_side_full(model.user_factors, model.item_factors, data.user_view(),
                    config, lam_users, gram_items)
    report.user_seconds += clock() - t0

    t0 = clock()
    gram_users = gramian(model.user_factors)
    report.gramian_seconds += clock() - t0
    t0 = clock()
    solve_side_full(model.item_factors, model.user_factors, data.item_view(),
                    config, lam_items, gram_users)
    report.item_seconds += clock() - t0
    return report


def icd_epoch(model: FactorModel, data: InteractionDataset, cache: PredictionCache,
              config: SolverConfig, epoch_index: int = 0) -> EpochReport:
    """Coordinate epoch: per dimension, a user pass then an item pass.

    The cache is recomputed at the start of the epoch and delta-maintained
    through every scalar update.
    """
    lam_users, lam_items = _side_regs(data, config)
    report = EpochReport(epoch_index)
    clock = time.perf_counter

    t0 = clock()
    compute_predictions(model, data, out=cache)
    report.cache_seconds += clock() - t0

    w, h = model.user_factors, model.item_factors
    yhat = cache.scores
    alpha0 = config.unobserved_weight
    for f in range(model.dim):
        t0 = clock()
        g = h.T @ h[:, f]
        report.gramian_seconds += clock() - t0
        t0 = clock()
        _icd_side(w, h, yhat, data.users, data.items, data.labels, data.weights,
                  lam_users, alpha0, f, g)
        report.user_seconds += clock() - t0

        t0 = clock()
        g = w.T @ w[:, f]
        report.gramian_seconds += clock() - t0
        t0 = clock()
        _icd_side(h, w, yhat, data.items, data.users, data.labels, data.weights,
                  lam_items, alpha0, f, g)
        report.item_seconds += clock() - t0
    return report


def ialspp_epoch(model: FactorModel, data: InteractionDataset, cache: PredictionCache,
                 config: SolverConfig, partition: BlockPartition | None = None,
                 epoch_index: int = 0) -> EpochReport:
    """Block epoch: recompute the cache, then per block a user and an item pass."""
    if partition is None:
        partition = partition_dims(model.dim, config.block_size)
    if partition.dim != model.dim:
        raise ValueError("partition does not match the model dimension")
    lam_users, lam_items = _side_regs(data, config)
    report = EpochReport(epoch_index)
    clock = time.perf_counter

    t0 = clock()
    compute_predictions(model, data, out=cache)
    report.cache_seconds += clock() - t0

    cache_ext = np.append(cache.scores, 0.0)
    w, h = model.user_factors, model.item_factors
    alpha0 = config.unobserved_weight
    uview, iview = data.user_view(), data.item_view()
    for block in partition.blocks:
        t0 = clock()
        slab = partial_gramian(h, block)
        report.gramian_seconds += clock() - t0
        t0 = clock()
        _newton_side_pass(uview, h, w, cache_ext, block, slab, alpha0, lam_users)
        report.user_seconds += clock() - t0

        t0 = clock()
        slab = partial_gramian(w, block)
        report.gramian_seconds += clock() - t0
        t0 = clock()
        _newton_side_pass(iview, w, h, cache_ext, block, slab, alpha0, lam_items)
        report.item_seconds += clock() - t0
    cache.scores[:] = cache_ext[:-1]
    return report


def iterate_epochs(model: FactorModel, data: InteractionDataset, config: SolverConfig,
                   log_loss: bool = False):
    """Train the model in place, yielding one :class:`EpochReport` per epoch."""
    if model.dim != config.dim:
        raise ValueError("model dimension does not match the configuration")
    if model.user_factors.shape[0] != data.num_users or \
            model.item_factors.shape[0] != data.num_items:
        raise ValueError("model shape does not match the dataset")
    cache = None
    partition = None
    if config.solver in ("icd", "ialspp"):
        cache = PredictionCache.zeros(data.n_interactions)
    if config.solver == "ialspp":
        partition = partition_dims(config.dim, config.block_size)
    for epoch in range(config.epochs):
        with _limits(config):
            if config.solver == "ials":
                report = ials_epoch(model, data, config, epoch)
            elif config.solver == "icd":
                report = icd_epoch(model, data, cache, config, epoch)
            else:
                report = ialspp_epoch(model, data, cache, config, partition, epoch)
            if log_loss:
                report.loss = compute_loss(model, data, config)
        yield report


def train(model: FactorModel, data: InteractionDataset, config: SolverConfig,
          log_loss: bool = False):
    """Run the configured solver for ``config.epochs`` epochs.

    Returns ``(model, reports)``; the model is updated in place and zero
    epochs leave it untouched.
    """
    reports = list(iterate_epochs(model, data, config, log_loss=log_loss))
    return model, reports


def project_user(item_factors, items, labels=None, weights=None,
                 config: SolverConfig | None = None, item_gram=None) -> np.ndarray:
    """Embedding for a single interaction history against fixed item factors.

    Solves the same regularized least-squares row problem the user pass
    solves, so unseen users fold into a trained model. An empty history
    yields the zero vector.
    """
    if config is None:
        raise ValueError("config is required")
    items = np.asarray(items, dtype=np.int64)
    n = items.size
    labels = np.ones(n) if labels is None else np.asarray(labels, dtype=np.float64)
    weights = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    d = item_factors.shape[1]
    if item_gram is None:
        item_gram = gramian(item_factors)
    lam = float(effective_reg(n, item_factors.shape[0], config))
    rows = item_factors[items]
    hess = rows.T @ (rows * weights[:, None])
    hess += config.unobserved_weight * item_gram
    hess[np.arange(d), np.arange(d)] += lam
    rhs = rows.T @ (weights * labels)
    return spd_solve(hess, rhs)


def fold_in_users(item_factors, histories, config: SolverConfig) -> np.ndarray:
    """Embeddings for a batch of histories, one per (items, labels, weights).

    ``labels`` or ``weights`` may be None within a tuple to default to ones.
    Returns an array of shape (len(histories), dim).
    """
    n_items = item_factors.shape[0]
    users, items, labels, weights = [], [], [], []
    for row, (its, lbl, wts) in enumerate(histories):
        its = np.asarray(its, dtype=np.int64)
        users.append(np.full(its.size, row, dtype=np.int64))
        items.append(its)
        labels.append(np.ones(its.size) if lbl is None else np.asarray(lbl, dtype=np.float64))
        weights.append(np.ones(its.size) if wts is None else np.asarray(wts, dtype=np.float64))
    data = InteractionDataset(
        max(len(histories), 1), n_items,
        np.concatenate(users) if users else np.empty(0, np.int64),
        np.concatenate(items) if items else np.empty(0, np.int64),
        np.concatenate(labels) if labels else None,
        np.concatenate(weights) if weights else None)
    out = np.zeros((len(histories), item_factors.shape[1]))
    if not histories:
        return out
    solve_side_full(out, item_factors, data.user_view(), config)
    return out


def _row_context(model, data, row, side):
    if side == "user":
        view = data.user_view()
        own, fixed = model.user_factors, model.item_factors
        opposite = data.num_items
    elif side == "item":
        view = data.item_view()
        own, fixed = model.item_factors, model.user_factors
        opposite = data.num_users
    else:
        raise ValueError("side must be 'user' or 'item'")
    sl = view.row_slice(row)
    return own, fixed, view.cols[sl], view.labels[sl], view.weights[sl], opposite


def block_gradient(model: FactorModel, data: InteractionDataset, config: SolverConfig,
                   row: int, block, side="user") -> np.ndarray:
    """Exact derivative of :func:`compute_loss` in the row's block coordinates.

    Computed from fresh scores, independent of any cache.
    """
    block = check_block(block, model.dim)
    own, fixed, cols, labels, weights, opposite = _row_context(model, data, row, side)
    vec = own[row]
    scores = fixed[cols] @ vec
    lam = float(effective_reg(cols.size, opposite, config))
    grad = (weights * (scores - labels)) @ fixed[cols][:, block]
    grad += config.unobserved_weight * (vec @ partial_gramian(fixed, block))
    grad += lam * vec[block]
    return 2.0 * grad


def block_hessian(model: FactorModel, data: InteractionDataset, config: SolverConfig,
                  row: int, block, side="user") -> np.ndarray:
    """Exact second derivative of :func:`compute_loss` on the block coordinates."""
    block = check_block(block, model.dim)
    _, fixed, cols, _, weights, opposite = _row_context(model, data, row, side)
    lam = float(effective_reg(cols.size, opposite, config))
    sub = fixed[cols][:, block]
    hess = sub.T @ (sub * weights[:, None])
    hess += config.unobserved_weight * partial_gramian(fixed, block)[block, :]
    hess[np.arange(block.size), np.arange(block.size)] += lam
    return 2.0 * hess
