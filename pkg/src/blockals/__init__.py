"""Implicit-feedback matrix factorization with interchangeable ALS solvers.

Three trainers minimize the same weighted least-squares objective: ``ials``
re-solves whole embedding vectors, ``icd`` updates one coordinate at a time
against a maintained score cache, and ``ialspp`` takes exact Newton steps on
subvectors, interpolating between the two. The package also ships the
holdout evaluation pipeline (fold-in, recall@k, NDCG@k), a benchmark CLI,
and a scikit-learn style estimator.
"""

from .data import InteractionDataset, synthetic_interactions
from .estimator import ImplicitALS
from .linalg import (SingularMatrixError, accumulate_outer, gramian,
                     partial_gramian, spd_solve, spd_solve_batch)
from .metrics import (MetricReport, evaluate_holdout, ndcg_at_k, rank_items,
                      recall_at_k, top_k_from_scores)
from .model import (FactorModel, PredictionCache, SolverConfig, cache_drift,
                    compute_loss, compute_predictions, effective_reg, init_model)
from .pipeline import (HoldoutSplit, RawInteractions, UserFold,
                       load_interactions, load_split_files, split_holdout,
                       write_id_map)
from .solvers import (BlockPartition, EpochReport, block_gradient,
                      block_hessian, block_update, coordinate_update,
                      fold_in_users, ials_epoch, ialspp_epoch, icd_epoch,
                      iterate_epochs, partition_dims, project_user,
                      solve_side_full, train)

__version__ = "0.1.0"

__all__ = [
    "InteractionDataset", "synthetic_interactions",
    "ImplicitALS",
    "SingularMatrixError", "accumulate_outer", "gramian", "partial_gramian",
    "spd_solve", "spd_solve_batch",
    "MetricReport", "evaluate_holdout", "ndcg_at_k", "rank_items",
    "recall_at_k", "top_k_from_scores",
    "FactorModel", "PredictionCache", "SolverConfig", "cache_drift",
    "compute_loss", "compute_predictions", "effective_reg", "init_model",
    "HoldoutSplit", "RawInteractions", "UserFold", "load_interactions",
    "load_split_files", "split_holdout", "write_id_map",
    "BlockPartition", "EpochReport", "block_gradient", "block_hessian",
    "block_update", "coordinate_update", "fold_in_users", "ials_epoch",
    "ialspp_epoch", "icd_epoch", "iterate_epochs", "partition_dims",
    "project_user", "solve_side_full", "train",
]
