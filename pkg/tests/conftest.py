import numpy as np
import pytest

from hfd.data import Dataset, sample_constraints
from hfd.hierarchy import train_forest
from hfd.model import Forest, HierarchyTree, SplitFunction, TreeNode, TreeParams
from hfd.ssmmc import SsmmcParams
from hfd.synthetic import gaussian_blobs
from hfd.unsup_mmc import UnsupParams


def fast_tree_params(min_node_size=5, feature_subset_size=None):
    """Solver settings trimmed for test speed; quality is not the point here."""
    return TreeParams(
        feature_subset_size=feature_subset_size,
        min_node_size=min_node_size,
        ssmmc=SsmmcParams(max_inner_iters=120, max_outer_iters=8,
                          inner_tol=0.02, outer_tol=0.02),
        unsup=UnsupParams(min_membership=min_node_size, max_iters=10,
                          max_inner_iters=80))


def hand_tree():
    """Fixed 8-point tree: root splits on feature 0, right child on feature 1.

        node 0 (count 8) -- P = x0
          left:  node 1, leaf, points [0, 1, 2, 3]
          right: node 2 (count 4) -- P = x1
            left:  node 3, leaf, points [4, 5]
            right: node 4, leaf, points [6, 7]
    """
    s_root = SplitFunction(np.array([0]), np.array([1.0, 0.0]))
    s_right = SplitFunction(np.array([1]), np.array([1.0, 0.0]))
    nodes = [
        TreeNode(0, 8, split=s_root, left=1, right=2),
        TreeNode(1, 4, point_ids=np.array([0, 1, 2, 3])),
        TreeNode(2, 4, split=s_right, left=3, right=4),
        TreeNode(3, 2, point_ids=np.array([4, 5])),
        TreeNode(4, 2, point_ids=np.array([6, 7])),
    ]
    return HierarchyTree(nodes=nodes, root_id=0, num_training_points=8)


def single_leaf_tree(n=4):
    nodes = [TreeNode(0, n, point_ids=np.arange(n))]
    return HierarchyTree(nodes=nodes, root_id=0, num_training_points=n)


@pytest.fixture(scope="session")
def blob_data() -> Dataset:
    return gaussian_blobs([(-3.0, 0.0, 1.0), (3.0, 0.0, -1.0)], 30,
                          spread=0.5, rng_seed=11)


@pytest.fixture(scope="session")
def blob_forest(blob_data) -> Forest:
    constraints = sample_constraints(blob_data.labels, 25, 25, rng_seed=5)
    return train_forest(blob_data, constraints, fast_tree_params(),
                        num_trees=6, alpha=0.5, base_seed=17)
