"""Interaction file ingestion and the per-user holdout evaluation split."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .data import InteractionDataset

__all__ = [
    "RawInteractions",
    "UserFold",
    "HoldoutSplit",
    "load_interactions",
    "split_holdout",
    "load_split_files",
    "write_id_map",
]

_REQUIRED_COLUMNS = ("user_id", "item_id")
_OPTIONAL_COLUMNS = ("label", "weight", "timestamp")


@dataclass
class RawInteractions:
    """Dense-indexed interactions plus the id maps that produced them."""

    users: np.ndarray
    items: np.ndarray
    labels: np.ndarray
    weights: np.ndarray
    user_ids: list
    item_ids: list
    dropped: int = 0

    def to_dataset(self) -> InteractionDataset:
        return InteractionDataset(len(self.user_ids), len(self.item_ids),
                                  self.users, self.items, self.labels, self.weights)


@dataclass
class UserFold:
    """One held-out user's history, split into an input and a target fold."""

    user: object
    input_items: np.ndarray
    input_labels: np.ndarray
    input_weights: np.ndarray
    target_items: np.ndarray
    target_labels: np.ndarray = field(default_factory=lambda: np.empty(0))
    target_weights: np.ndarray = field(default_factory=lambda: np.empty(0))


@dataclass
class HoldoutSplit:
    """Training data plus per-user evaluation folds over a shared item space."""

    train: InteractionDataset
    folds: list
    num_items: int
    train_user_ids: list


def _sniff_delimiter(header_line: str) -> str:
    # Only comma and tab are recognized; a header row is mandatory.
    return "\t" if "\t" in header_line else ","


def _ordered_ids(id_map: dict) -> list:
    out = [None] * len(id_map)
    for key, idx in id_map.items():
        out[idx] = key
    return out


def load_interactions(path, item_map=None, freeze_items=False) -> RawInteractions:
    """Parse a delimited interaction file into dense-indexed tuples.

    The file must start with a header naming at least ``user_id`` and
    ``item_id``; ``label``, ``weight`` and ``timestamp`` are recognized
    (timestamps are validated and ignored) and any other column is skipped.
    Missing labels default to 1 and missing weights to 1. Ids are assigned
    dense indices in order of first appearance. With ``item_map`` and
    ``freeze_items``, rows whose item is absent from the map are dropped and
    counted in ``dropped``.
    """
    user_map: dict = {}
    item_map = {} if item_map is None else dict(item_map)
    users, items, labels, weights = [], [], [], []
    dropped = 0
    with open(path, newline="", encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise ValueError(f"{path}: missing header row")
        delim = _sniff_delimiter(header_line)
        header = [name.strip().lower() for name in
                  next(csv.reader([header_line], delimiter=delim))]
        col = {name: i for i, name in enumerate(header)}
        for name in _REQUIRED_COLUMNS:
            if name not in col:
                raise ValueError(f"{path}: header must name a {name} column")
        reader = csv.reader(fh, delimiter=delim)
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise ValueError(f"{path}: line {lineno}: expected {len(header)} "
                                 f"fields, got {len(rec)}")
            user = rec[col["user_id"]].strip()
            item = rec[col["item_id"]].strip()
            if not user or not item:
                raise ValueError(f"{path}: line {lineno}: empty user_id or item_id")
            try:
                label = float(rec[col["label"]]) if "label" in col else 1.0
                weight = float(rec[col["weight"]]) if "weight" in col else 1.0
                if "timestamp" in col:
                    float(rec[col["timestamp"]])
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: malformed numeric field") from None
            if weight <= 0:
                raise ValueError(f"{path}: line {lineno}: weight must be positive")
            if item not in item_map:
                if freeze_items:
                    dropped += 1
                    continue
                item_map[item] = len(item_map)
            if user not in user_map:
                user_map[user] = len(user_map)
            users.append(user_map[user])
            items.append(item_map[item])
            labels.append(label)
            weights.append(weight)
    if not users:
        raise ValueError(f"{path}: no interactions")
    return RawInteractions(
        np.asarray(users, dtype=np.int64), np.asarray(items, dtype=np.int64),
        np.asarray(labels), np.asarray(weights),
        _ordered_ids(user_map), _ordered_ids(item_map), dropped)


def write_id_map(path, ids):
    """Persist an id map as two-column tab-delimited text (id, dense index)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("original_id\tdense_index\n")
        for index, original in enumerate(ids):
            fh.write(f"{original}\t{index}\n")


def split_holdout(data: InteractionDataset, holdout_fraction: float, seed,
                  target_fraction: float = 0.2,
                  min_interactions: int = 5) -> HoldoutSplit:
    """Hold out a random user subset and split each one's history 80/20.

    Held-out users are removed from training entirely. Per held-out user with
    at least ``min_interactions`` interactions, ``floor(n * target_fraction)``
    of them (at least one) are drawn uniformly at random as ranking targets
    and the rest form the input fold; lighter users keep everything in the
    input fold and are skipped by metrics. Deterministic for a fixed seed.
    """
    if not 0 < holdout_fraction < 1:
        raise ValueError("holdout_fraction must be in (0, 1)")
    if not 0 < target_fraction < 1:
        raise ValueError("target_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    n_hold = max(1, int(data.num_users * holdout_fraction))
    if n_hold >= data.num_users:
        raise ValueError("holdout would leave no training users")
    held = np.sort(rng.permutation(data.num_users)[:n_hold])
    counts = data.user_counts
    if not (counts[held] >= min_interactions).any():
        raise ValueError("no holdout user has enough interactions to evaluate")

    hold_mask = np.zeros(data.num_users, dtype=bool)
    hold_mask[held] = True
    keep = ~hold_mask[data.users]
    train_users_old = np.flatnonzero(~hold_mask)
    remap = np.full(data.num_users, -1, dtype=np.int64)
    remap[train_users_old] = np.arange(train_users_old.size)
    train = InteractionDataset(
        train_users_old.size, data.num_items,
        remap[data.users[keep]], data.items[keep],
        data.labels[keep], data.weights[keep])

    folds = []
    for user in held:
        sl = slice(int(data.user_ptr[user]), int(data.user_ptr[user + 1]))
        items = data.items[sl]
        labels = data.labels[sl]
        weights = data.weights[sl]
        n = items.size
        if n >= min_interactions:
            n_target = max(1, int(n * target_fraction))
            perm = rng.permutation(n)
            target = np.sort(perm[:n_target])
            rest = np.sort(perm[n_target:])
        else:
            target = np.empty(0, dtype=np.int64)
            rest = np.arange(n)
        folds.append(UserFold(
            int(user), items[rest], labels[rest], weights[rest],
            items[target], labels[target], weights[target]))
    return HoldoutSplit(train, folds, data.num_items, list(train_users_old))


def load_split_files(train_path, holdout_input_path, holdout_target_path) -> HoldoutSplit:
    """Assemble a :class:`HoldoutSplit` from pre-split files.

    The training file defines the item id space; holdout rows whose item
    never occurs in training are dropped. Holdout users are matched between
    the input and target files by original id; target-only users cannot be
    ranked and are skipped.
    """
    train_raw = load_interactions(train_path)
    item_map = {item: i for i, item in enumerate(train_raw.item_ids)}
    fold_in = load_interactions(holdout_input_path, item_map=item_map, freeze_items=True)
    fold_target = load_interactions(holdout_target_path, item_map=item_map, freeze_items=True)

    target_by_user: dict = {}
    for i, user in enumerate(fold_target.users):
        target_by_user.setdefault(fold_target.user_ids[user], []).append(i)

    folds = []
    in_ptr = np.zeros(len(fold_in.user_ids) + 1, dtype=np.int64)
    np.cumsum(np.bincount(fold_in.users, minlength=len(fold_in.user_ids)), out=in_ptr[1:])
    order = np.argsort(fold_in.users, kind="stable")
    for u, user_id in enumerate(fold_in.user_ids):
        sl = order[in_ptr[u]:in_ptr[u + 1]]
        rows = target_by_user.get(user_id, [])
        idx = np.asarray(rows, dtype=np.int64)
        folds.append(UserFold(
            user_id,
            fold_in.items[sl], fold_in.labels[sl], fold_in.weights[sl],
            fold_target.items[idx], fold_target.labels[idx], fold_target.weights[idx]))
    return HoldoutSplit(train_raw.to_dataset(), folds, len(train_raw.item_ids),
                        list(train_raw.user_ids))
