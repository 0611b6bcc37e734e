"""Distance evaluation over trained hierarchies.

A pair descends each tree while both points route the same way. The first
node that sends them apart contributes a confidence-weighted fraction of
the training mass under that node; pairs that reach a leaf together score
zero. The forest distance averages the per-tree values and always lies in
[0, 1], with D(a, a) = 0 and exact symmetry.

Low-level helpers (project, route, tree_distance, ...) operate in the
space the trees were trained in; ``forest_distance`` and
``forest_distance_to_many`` accept raw rows and apply the forest's stored
normalization.
"""

from __future__ import annotations

import enum

import numpy as np

from .errors import DimensionMismatch
from .model import Forest, HierarchyTree, SplitFunction

# Logistic saturation bound; exp(500) is still finite in float64.
_EXP_CLAMP = 500.0


class Side(enum.Enum):
    LEFT = "left"
    RIGHT = "right"


def project(split: SplitFunction, x) -> float:
    """Routing score of one row: weights dotted with the feature subset plus bias."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] <= split.feature_subset[-1]:
        raise DimensionMismatch(
            f"row of width {x.shape} vs max feature index {split.feature_subset[-1]}")
    return float(x[split.feature_subset] @ split.weights[:-1] + split.weights[-1])


def project_many(split: SplitFunction, rows) -> np.ndarray:
    """Routing scores for a matrix of rows."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] <= split.feature_subset[-1]:
        raise DimensionMismatch(
            f"rows of shape {rows.shape} vs max feature index {split.feature_subset[-1]}")
    return rows[:, split.feature_subset] @ split.weights[:-1] + split.weights[-1]


def route(split: SplitFunction, x) -> Side:
    """Left when the projection is <= 0, right otherwise."""
    return Side.LEFT if project(split, x) <= 0.0 else Side.RIGHT


def _logistic(u):
    # 1 / (1 + exp(u)), saturating instead of overflowing
    return 1.0 / (1.0 + np.exp(np.clip(u, -_EXP_CLAMP, _EXP_CLAMP)))


def certainty(split: SplitFunction, a, b, alpha: float) -> float:
    """Confidence that the split genuinely separates a and b, in [0, 1].

    Absolute difference of the two logistic responses, so the value is
    symmetric in (a, b): near 0 when both projections hug the boundary,
    near 1 when both are far out on opposite sides.
    """
    pa = project(split, a)
    pb = project(split, b)
    return float(abs(_logistic(alpha * pa) - _logistic(alpha * pb)))


def find_separating_node(tree: HierarchyTree, a, b) -> tuple[int, bool]:
    """Lowest node containing both rows; True when it actually splits them."""
    node = tree.root
    while not node.is_leaf:
        left_a = project(node.split, a) <= 0.0
        left_b = project(node.split, b) <= 0.0
        if left_a != left_b:
            return node.node_id, True
        node = tree.node(node.left if left_a else node.right)
    return node.node_id, False


def tree_distance(tree: HierarchyTree, a, b, alpha: float) -> float:
    """One tree's distance: certainty times the separating node's mass share."""
    node = tree.root
    n = tree.num_training_points
    while not node.is_leaf:
        pa = project(node.split, a)
        pb = project(node.split, b)
        left_a = pa <= 0.0
        left_b = pb <= 0.0
        if left_a != left_b:
            cert = abs(_logistic(alpha * pa) - _logistic(alpha * pb))
            return float(cert) * node.subtree_count / n
        node = tree.node(node.left if left_a else node.right)
    return 0.0


def forest_distance(forest: Forest, a, b) -> float:
    """Mean tree distance between two raw rows (normalized internally)."""
    a_n = forest.transform(a)
    b_n = forest.transform(b)
    total = 0.0
    for tree in forest.trees:
        total += tree_distance(tree, a_n, b_n, forest.alpha)
    return total / forest.num_trees


def forest_distance_to_many(forest: Forest, x, rows, *,
                            pre_normalized: bool = False) -> np.ndarray:
    """Distances from one query row to many rows, one tree descent per tree.

    Walks the query's root-to-leaf path once per tree; at each node the rows
    still traveling with the query are split vectorized into diverging rows
    (scored there) and survivors (carried down). Used by both the exact and
    the approximate neighbor searches so their outputs are directly
    comparable.
    """
    if pre_normalized:
        x_n = np.asarray(x, dtype=np.float64)
        rows_n = np.asarray(rows, dtype=np.float64)
    else:
        x_n = forest.transform(x)
        rows_n = forest.transform(rows)
    total = np.zeros(rows_n.shape[0])
    n = forest.num_training_points
    alpha = forest.alpha
    for tree in forest.trees:
        alive = np.arange(rows_n.shape[0])
        node = tree.root
        while not node.is_leaf and alive.size:
            px = project(node.split, x_n)
            pr = project_many(node.split, rows_n[alive])
            x_left = px <= 0.0
            r_left = pr <= 0.0
            diverged = r_left != x_left
            if np.any(diverged):
                cert = np.abs(_logistic(alpha * px) - _logistic(alpha * pr[diverged]))
                total[alive[diverged]] += cert * (node.subtree_count / n)
            alive = alive[~diverged]
            node = tree.node(node.left if x_left else node.right)
    return total / forest.num_trees
