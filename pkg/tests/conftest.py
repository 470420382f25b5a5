"""Shared helpers for building random problem instances."""

import numpy as np
import pytest

from blockals import InteractionDataset, SolverConfig, init_model


def random_instance(rng, max_users=50, max_items=50, max_nnz=500,
                    dims=(2, 4, 8), allow_zero_alpha0=True):
    """A random dataset, config, and freshly initialized model.

    Instances may contain duplicate (user, item) pairs and users or items
    with no interactions. The frequency-scaled regularizer is only combined
    with a positive unobserved weight so empty rows keep a positive
    curvature.
    """
    num_users = int(rng.integers(3, max_users + 1))
    num_items = int(rng.integers(3, max_items + 1))
    nnz = int(rng.integers(num_users, max_nnz + 1))
    users = rng.integers(0, num_users, nnz)
    items = rng.integers(0, num_items, nnz)
    if rng.random() < 0.5:
        labels = np.ones(nnz)
    else:
        labels = rng.uniform(0.0, 2.0, nnz)
    weights = rng.uniform(0.5, 2.0, nnz)
    data = InteractionDataset(num_users, num_items, users, items, labels, weights)

    dim = int(rng.choice(dims))
    reg_exponent = float(rng.choice([0.0, 1.0]))
    if reg_exponent > 0 or not allow_zero_alpha0:
        alpha0 = float(rng.choice([0.1, 0.5]))
    else:
        alpha0 = float(rng.choice([0.0, 0.1, 0.5]))
    config = SolverConfig(
        dim=dim,
        block_size=min(2, dim),
        unobserved_weight=alpha0,
        reg=float(10.0 ** rng.uniform(-3, -1)),
        reg_exponent=reg_exponent,
        epochs=1,
        seed=int(rng.integers(0, 2**31)),
    )
    model = init_model(config, num_users, num_items)
    return data, config, model


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
