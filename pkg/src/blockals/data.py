"""Sparse interaction storage with user-major layout and an item-major mirror."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["InteractionDataset", "SideView", "synthetic_interactions"]

_SCORE_CHUNK = 4_000_000  # max dense scores materialized per user block


@dataclass(frozen=True)
class _Bucket:
    """Rows padded to a common width so per-row reductions become batched matmuls."""

    rows: np.ndarray       # (n,) row indices within the side
    width: int             # padded entries per row; a power of two, or 0
    cols: np.ndarray       # (n, width) opposite-side indices; sentinel = n_cols
    weights: np.ndarray    # (n, width) observation weights; 0.0 on padding
    labels: np.ndarray     # (n, width) labels; 0.0 on padding
    cache_pos: np.ndarray  # (n, width) canonical interaction positions; sentinel = n_entries


class SideView:
    """Adjacency for one side of the interaction matrix.

    Rows are users for the user view and items for the item view. Entries of
    row ``r`` occupy ``ptr[r]:ptr[r+1]`` of ``cols``/``labels``/``weights``;
    ``cache_pos`` maps every entry back to the dataset's canonical
    (user-major) interaction order so both views address one shared score
    cache.
    """

    def __init__(self, n_rows, n_cols, ptr, cols, labels, weights, cache_pos):
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.ptr = ptr
        self.cols = cols
        self.labels = labels
        self.weights = weights
        self.cache_pos = cache_pos
        self.n_entries = int(cols.size)
        self._buckets: list[_Bucket] | None = None

    @property
    def counts(self) -> np.ndarray:
        return np.diff(self.ptr)

    def row_slice(self, row: int) -> slice:
        return slice(int(self.ptr[row]), int(self.ptr[row + 1]))

    def buckets(self) -> list[_Bucket]:
        """Rows grouped by padded width (next power of two), built lazily once."""
        if self._buckets is None:
            self._buckets = self._build_buckets()
        return self._buckets

    def _build_buckets(self) -> list[_Bucket]:
        counts = self.counts
        widths = np.zeros(self.n_rows, dtype=np.int64)
        nz = counts > 0
        widths[nz] = 1 << np.ceil(np.log2(counts[nz].astype(np.float64))).astype(np.int64)
        buckets = []
        for width in np.unique(widths):
            rows = np.flatnonzero(widths == width)
            k = int(width)
            if k == 0:
                shape = (rows.size, 0)
                buckets.append(_Bucket(rows, 0, np.empty(shape, np.int64),
                                       np.empty(shape), np.empty(shape),
                                       np.empty(shape, np.int64)))
                continue
            offsets = np.arange(k)
            valid = offsets < counts[rows][:, None]
            flat = np.where(valid, self.ptr[rows][:, None] + offsets, 0)
            buckets.append(_Bucket(
                rows, k,
                np.where(valid, self.cols[flat], self.n_cols),
                np.where(valid, self.weights[flat], 0.0),
                np.where(valid, self.labels[flat], 0.0),
                np.where(valid, self.cache_pos[flat], self.n_entries),
            ))
        return buckets


class InteractionDataset:
    """Weighted, labeled user-item interactions with adjacency on both sides.

    Interactions are stored user-major (all of user 0, then user 1, ...) and
    an item-major permutation is derived, so passes over either side stream
    contiguously. The canonical interaction order -- the order score caches
    align to -- is the user-major order. Duplicate (user, item) pairs are
    kept as distinct weighted observations.
    """

    def __init__(self, num_users, num_items, users, items, labels=None, weights=None):
        users = np.ascontiguousarray(users, dtype=np.int64)
        items = np.ascontiguousarray(items, dtype=np.int64)
        if users.ndim != 1 or items.ndim != 1 or users.size != items.size:
            raise ValueError("users and items must be 1-d arrays of equal length")
        n = users.size
        num_users = int(num_users)
        num_items = int(num_items)
        if num_users < 1 or num_items < 1:
            raise ValueError("dataset needs at least one user and one item")
        labels = np.ones(n) if labels is None else np.ascontiguousarray(labels, dtype=np.float64)
        weights = np.ones(n) if weights is None else np.ascontiguousarray(weights, dtype=np.float64)
        if labels.shape != (n,) or weights.shape != (n,):
            raise ValueError("labels and weights must match the interaction count")
        if n:
            if users.min() < 0 or users.max() >= num_users:
                raise ValueError("user index out of range")
            if items.min() < 0 or items.max() >= num_items:
                raise ValueError("item index out of range")
            if not np.isfinite(labels).all():
                raise ValueError("labels must be finite")
            if not np.isfinite(weights).all() or (weights <= 0).any():
                raise ValueError("weights must be finite and strictly positive")
        order = np.argsort(users, kind="stable")
        self.num_users = num_users
        self.num_items = num_items
        self.users = users[order]
        self.items = items[order]
        self.labels = labels[order]
        self.weights = weights[order]
        self.user_ptr = np.zeros(num_users + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.users, minlength=num_users), out=self.user_ptr[1:])
        self._item_order = np.argsort(self.items, kind="stable")
        self.item_ptr = np.zeros(num_items + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.items, minlength=num_items), out=self.item_ptr[1:])
        self._user_view: SideView | None = None
        self._item_view: SideView | None = None

    @property
    def n_interactions(self) -> int:
        return int(self.users.size)

    @property
    def user_counts(self) -> np.ndarray:
        return np.diff(self.user_ptr)

    @property
    def item_counts(self) -> np.ndarray:
        return np.diff(self.item_ptr)

    def user_view(self) -> SideView:
        if self._user_view is None:
            self._user_view = SideView(
                self.num_users, self.num_items, self.user_ptr,
                self.items, self.labels, self.weights,
                np.arange(self.n_interactions, dtype=np.int64))
        return self._user_view

    def item_view(self) -> SideView:
        if self._item_view is None:
            perm = self._item_order
            self._item_view = SideView(
                self.num_items, self.num_users, self.item_ptr,
                self.users[perm], self.labels[perm], self.weights[perm], perm)
        return self._item_view


def synthetic_interactions(num_users, num_items, per_user, rank, noise, seed,
                           labels="implicit"):
    """Generate a low-rank synthetic interaction set.

    ``labels="implicit"`` draws ``per_user`` distinct items per user, favoring
    items the user's latent factors score highly (``noise`` controls how
    diffuse the choice is; 0 picks the top items outright), with unit labels
    and weights. ``labels="dot"`` samples items uniformly and labels each
    pair with the latent dot product plus ``noise`` times a standard normal.

    Returns ``(dataset, user_truth, item_truth)``.
    """
    num_users, num_items, per_user = int(num_users), int(num_items), int(per_user)
    if num_users < 1 or num_items < 1 or rank < 1:
        raise ValueError("num_users, num_items and rank must be positive")
    if per_user < 1 or per_user > num_items:
        raise ValueError("per_user must be in [1, num_items]")
    if labels not in ("implicit", "dot"):
        raise ValueError(f"unknown label mode {labels!r}")
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(rank)
    user_truth = rng.normal(0.0, scale, size=(num_users, rank))
    item_truth = rng.normal(0.0, scale, size=(num_items, rank))
    users = np.repeat(np.arange(num_users, dtype=np.int64), per_user)
    items = np.empty(num_users * per_user, dtype=np.int64)
    values = np.empty(num_users * per_user) if labels == "dot" else None
    step = max(1, _SCORE_CHUNK // num_items)
    for start in range(0, num_users, step):
        stop = min(start + step, num_users)
        scores = user_truth[start:stop] @ item_truth.T
        if labels == "implicit":
            keys = scores + noise * rng.gumbel(size=scores.shape)
        else:
            keys = rng.random(scores.shape)
        pick = np.argpartition(-keys, per_user - 1, axis=1)[:, :per_user]
        pick.sort(axis=1)
        items[start * per_user:stop * per_user] = pick.ravel()
        if labels == "dot":
            values[start * per_user:stop * per_user] = \
                np.take_along_axis(scores, pick, axis=1).ravel()
    if labels == "dot" and noise > 0:
        values = values + noise * rng.normal(size=values.shape)
    data = InteractionDataset(num_users, num_items, users, items, labels=values)
    return data, user_truth, item_truth
