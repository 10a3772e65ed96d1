"""Metric learning and optimal-transport DRO logistic regression."""

from ._ddrdro import (
    DataError,
    InfeasibleError,
    InvalidArgument,
    build_pair_sets,
    build_triplets,
    cross_validate_delta,
    evaluate,
    learn_metric,
    ot_discrepancy,
    run_experiment,
    standardize,
    train_dro,
)

__all__ = [
    "DataError",
    "InfeasibleError",
    "InvalidArgument",
    "build_pair_sets",
    "build_triplets",
    "cross_validate_delta",
    "evaluate",
    "learn_metric",
    "ot_discrepancy",
    "run_experiment",
    "standardize",
    "train_dro",
]
