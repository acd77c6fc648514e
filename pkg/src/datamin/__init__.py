"""Data minimization for tabular datasets with a task labeling and a user labeling.

The central call is :func:`feature_minimize`, which keeps the feature subset
that is least useful for re-identifying users while holding task accuracy
within a tolerated loss.
"""

from datamin.forest import ForestConfig
from datamin.solvers import (
    GreedyStrategy,
    MinimizationResult,
    ThresholdPolicy,
    exhaustive_search,
    feature_minimize,
    greedy_select,
    hybrid_minimize,
    knapsack_oracle,
)
from datamin.tabular import Dataset, FeatureSubset, SplitSpec, load_csv, project, split

__all__ = [
    "Dataset",
    "FeatureSubset",
    "ForestConfig",
    "GreedyStrategy",
    "MinimizationResult",
    "SplitSpec",
    "ThresholdPolicy",
    "exhaustive_search",
    "feature_minimize",
    "greedy_select",
    "hybrid_minimize",
    "knapsack_oracle",
    "load_csv",
    "project",
    "split",
]
