"""Hierarchy forest distance: a semi-supervised nonlinear metric.

Train a forest of max-margin cluster hierarchies from pairwise must-link /
cannot-link constraints, evaluate the learned distance, and search
neighbors approximately inside it.
"""

from .ann import AnnParams, NeighborList, SearchCounters, approx_knn, batch_knn, brute_knn
from .data import (
    ConstraintSet,
    Dataset,
    NormStats,
    flip_labels,
    load_dataset,
    normalize,
    sample_constraints,
    split_folds,
)
from .hierarchy import train_forest, train_tree
from .metric import forest_distance, forest_distance_to_many, tree_distance
from .model import Forest, HierarchyTree, SplitFunction, TreeParams
from .serialize import load_forest, save_forest
from .ssmmc import SsmmcParams, train_ssmmc
from .unsup_mmc import UnsupParams, train_unsup_mmc

__version__ = "0.1.0"

__all__ = [
    "AnnParams", "NeighborList", "SearchCounters", "approx_knn", "batch_knn",
    "brute_knn", "ConstraintSet", "Dataset", "NormStats", "flip_labels",
    "load_dataset", "normalize", "sample_constraints", "split_folds",
    "train_forest", "train_tree", "forest_distance", "forest_distance_to_many",
    "tree_distance", "Forest", "HierarchyTree", "SplitFunction", "TreeParams",
    "load_forest", "save_forest", "SsmmcParams", "train_ssmmc", "UnsupParams",
    "train_unsup_mmc", "__version__",
]
