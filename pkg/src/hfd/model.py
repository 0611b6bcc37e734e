"""Trained model structures: splits, trees and the forest."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import NormStats
from .ssmmc import SsmmcParams
from .unsup_mmc import UnsupParams


@dataclass(frozen=True)
class SplitFunction:
    """A node's routing rule: feature subset plus weights (bias last)."""

    feature_subset: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        subset = np.asarray(self.feature_subset, dtype=np.int64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if subset.ndim != 1 or len(subset) < 1:
            raise ValueError("feature subset must hold at least one index")
        if np.any(subset < 0):
            raise ValueError("feature indices must be non-negative")
        if np.any(np.diff(subset) <= 0):
            raise ValueError("feature indices must be sorted and unique")
        if weights.shape != (len(subset) + 1,):
            raise ValueError("weights must have one entry per feature plus a bias")
        object.__setattr__(self, "feature_subset", subset)
        object.__setattr__(self, "weights", weights)


@dataclass(frozen=True)
class TreeNode:
    """Arena entry: internal nodes carry a split, leaves keep their point ids."""

    node_id: int
    subtree_count: int
    split: SplitFunction | None = None
    left: int | None = None
    right: int | None = None
    point_ids: np.ndarray | None = None

    @property
    def is_leaf(self) -> bool:
        return self.split is None


@dataclass
class HierarchyTree:
    """Binary cluster hierarchy over the training set."""

    nodes: list[TreeNode]
    root_id: int
    num_training_points: int
    _subtree_ids: dict[int, np.ndarray] | None = field(
        default=None, repr=False, compare=False)

    def node(self, node_id: int) -> TreeNode:
        return self.nodes[node_id]

    @property
    def root(self) -> TreeNode:
        return self.nodes[self.root_id]

    def leaves(self) -> list[TreeNode]:
        return [n for n in self.nodes if n.is_leaf]

    def subtree_point_ids(self, node_id: int) -> np.ndarray:
        """Sorted training ids under a node; built once bottom-up and cached."""
        if self._subtree_ids is None:
            ids: dict[int, np.ndarray] = {}
            for node in sorted(self.nodes, key=lambda n: -n.node_id):
                if node.is_leaf:
                    ids[node.node_id] = np.asarray(node.point_ids, dtype=np.int64)
                else:
                    merged = np.concatenate([ids[node.left], ids[node.right]])
                    merged.sort()
                    ids[node.node_id] = merged
            self._subtree_ids = ids
        return self._subtree_ids[node_id]


@dataclass(frozen=True)
class TreeParams:
    """Per-tree training controls.

    ``feature_subset_size`` of None resolves per dataset: every feature when
    d < 3, otherwise max(1, round(d / 3)).
    """

    feature_subset_size: int | None = None
    min_node_size: int = 5
    max_split_retries: int = 3
    ssmmc: SsmmcParams = field(default_factory=SsmmcParams)
    unsup: UnsupParams = field(default_factory=UnsupParams)

    def __post_init__(self):
        if self.min_node_size < 2:
            raise ValueError("min_node_size must be >= 2")
        if self.max_split_retries < 0:
            raise ValueError("max_split_retries must be >= 0")
        if self.feature_subset_size is not None and self.feature_subset_size < 1:
            raise ValueError("feature_subset_size must be >= 1")


def resolve_subset_size(dim: int, requested: int | None) -> int:
    if requested is not None:
        if requested > dim:
            raise ValueError(f"feature subset size {requested} exceeds dim {dim}")
        return requested
    if dim < 3:
        return dim
    return max(1, int(round(dim / 3)))


@dataclass(frozen=True)
class Forest:
    """The trained metric model: trees plus normalization and provenance."""

    trees: list[HierarchyTree]
    alpha: float
    dim: int
    norm_stats: NormStats | None = None
    train_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.trees:
            raise ValueError("a forest needs at least one tree")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        counts = {t.num_training_points for t in self.trees}
        if len(counts) != 1:
            raise ValueError("all trees must cover the same training set")

    @property
    def num_trees(self) -> int:
        return len(self.trees)

    @property
    def num_training_points(self) -> int:
        return self.trees[0].num_training_points

    def transform(self, rows: np.ndarray) -> np.ndarray:
        """Map raw rows into the space the trees were trained in."""
        rows = np.asarray(rows, dtype=np.float64)
        if rows.shape[-1] != self.dim:
            from .errors import DimensionMismatch
            raise DimensionMismatch(
                f"rows of width {rows.shape[-1]} vs forest dim {self.dim}")
        if self.norm_stats is None:
            return rows
        return self.norm_stats.apply(rows)
