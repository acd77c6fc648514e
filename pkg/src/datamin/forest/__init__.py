"""Random forests of Gini-split trees, shared by the provider and the adversary."""

from datamin.forest.model import (
    Forest,
    ForestConfig,
    PairEvaluator,
    accuracy,
    evaluate_pair,
    gini_importance,
    train,
    train_pair,
)

__all__ = [
    "Forest",
    "ForestConfig",
    "PairEvaluator",
    "accuracy",
    "evaluate_pair",
    "gini_importance",
    "train",
    "train_pair",
]
