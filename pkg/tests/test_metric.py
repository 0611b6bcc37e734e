import numpy as np
import pytest

from conftest import hand_tree, single_leaf_tree
from hfd.ann import leaf_path
from hfd.errors import DimensionMismatch
from hfd.metric import (
    Side,
    certainty,
    find_separating_node,
    forest_distance,
    forest_distance_to_many,
    project,
    route,
    tree_distance,
)
from hfd.model import Forest, SplitFunction

# hand value: |1/(1+e^-2) - 1/(1+e^2)| for alpha=0.5, projections -4 and +4
CERT_HALF_PM4 = 0.7615941559557649


# ------------------------------------------------------------ project / route

def test_project_arithmetic():
    split = SplitFunction(np.array([0, 2]), np.array([1.0, -1.0, 0.5]))
    assert project(split, np.array([2.0, 9.0, 3.0])) == -0.5


def test_project_zero_and_bias_only():
    zero = SplitFunction(np.array([0, 1]), np.zeros(3))
    assert project(zero, np.array([4.0, -7.0])) == 0.0
    bias = SplitFunction(np.array([0, 1]), np.array([0.0, 0.0, 2.5]))
    assert project(bias, np.array([4.0, -7.0])) == 2.5


def test_project_dimension_mismatch():
    split = SplitFunction(np.array([0, 2]), np.array([1.0, -1.0, 0.5]))
    with pytest.raises(DimensionMismatch):
        project(split, np.array([1.0, 2.0]))


def test_route_boundary_rules():
    split = SplitFunction(np.array([0]), np.array([1.0, 0.0]))
    assert route(split, np.array([-0.5])) is Side.LEFT
    assert route(split, np.array([0.0])) is Side.LEFT
    assert route(split, np.array([1e-12])) is Side.RIGHT


# ------------------------------------------------------------ certainty

def test_certainty_zero_on_boundary():
    split = SplitFunction(np.array([0]), np.array([1.0, 0.0]))
    assert certainty(split, np.array([0.0]), np.array([0.0]), alpha=0.5) == 0.0


def test_certainty_hand_value():
    split = SplitFunction(np.array([0]), np.array([1.0, 0.0]))
    got = certainty(split, np.array([-4.0]), np.array([4.0]), alpha=0.5)
    assert got == pytest.approx(CERT_HALF_PM4, abs=1e-12)


def test_certainty_symmetric_and_bounded():
    rng = np.random.default_rng(0)
    split = SplitFunction(np.array([0, 1]), np.array([0.7, -1.2, 0.3]))
    for _ in range(50):
        a, b = rng.standard_normal((2, 2)) * 10
        c_ab = certainty(split, a, b, alpha=0.5)
        c_ba = certainty(split, b, a, alpha=0.5)
        assert c_ab == c_ba
        assert 0.0 <= c_ab <= 1.0


def test_certainty_saturates_without_overflow():
    split = SplitFunction(np.array([0]), np.array([1.0, 0.0]))
    got = certainty(split, np.array([-1e9]), np.array([1e9]), alpha=0.5)
    assert got == 1.0


# ------------------------------------------------------------ tree distance

def test_tree_distance_identical_rows_zero():
    tree = hand_tree()
    x = np.array([2.0, -1.0])
    assert tree_distance(tree, x, x, alpha=0.5) == 0.0


def test_tree_distance_root_separation():
    tree = hand_tree()
    a = np.array([-4.0, 0.0])
    b = np.array([4.0, 0.0])
    got = tree_distance(tree, a, b, alpha=0.5)
    assert got == pytest.approx(CERT_HALF_PM4 * 8 / 8, abs=1e-12)


def test_tree_distance_deep_separation_half_mass():
    # both go right at the root, then split at node 2 (4 of 8 points) with
    # saturated certainty: distance is exactly 0.5
    tree = hand_tree()
    a = np.array([1.0, -1e9])
    b = np.array([1.0, 1e9])
    assert tree_distance(tree, a, b, alpha=0.5) == 0.5


def test_tree_distance_shared_leaf_zero():
    tree = hand_tree()
    a = np.array([-1.0, 5.0])
    b = np.array([-2.0, -7.0])  # both route left into leaf 1
    assert tree_distance(tree, a, b, alpha=0.5) == 0.0


# ------------------------------------------------------------ forest distance

def test_forest_distance_is_tree_mean():
    trees = [hand_tree(), single_leaf_tree(8)]
    forest = Forest(trees=trees, alpha=0.5, dim=2)
    a = np.array([-4.0, 0.0])
    b = np.array([4.0, 0.0])
    d1 = tree_distance(trees[0], a, b, 0.5)
    assert forest_distance(forest, a, b) == pytest.approx(d1 / 2, abs=1e-15)


def test_forest_axioms_on_trained_forest(blob_data, blob_forest):
    rng = np.random.default_rng(1)
    pts = blob_data.points
    for _ in range(200):
        i, j = rng.integers(0, len(pts), 2)
        d_ij = forest_distance(blob_forest, pts[i], pts[j])
        d_ji = forest_distance(blob_forest, pts[j], pts[i])
        assert d_ij == d_ji
        assert 0.0 <= d_ij <= 1.0
    for i in rng.integers(0, len(pts), 10):
        assert forest_distance(blob_forest, pts[i], pts[i]) == 0.0


def test_batch_distances_match_single_path(blob_data, blob_forest):
    # the batched walker must agree with per-pair descent
    pts = blob_data.points
    x = pts[3]
    batch = forest_distance_to_many(blob_forest, x, pts[:20])
    single = [forest_distance(blob_forest, x, pts[i]) for i in range(20)]
    np.testing.assert_allclose(batch, single, rtol=0, atol=1e-12)


def test_separating_node_is_leaf_path_lca(blob_data, blob_forest):
    pts = blob_forest.transform(blob_data.points)
    rng = np.random.default_rng(2)
    for _ in range(40):
        i, j = rng.integers(0, len(pts), 2)
        if i == j:
            continue
        for tree in blob_forest.trees:
            node_id, diverged = find_separating_node(tree, pts[i], pts[j])
            pa = leaf_path(tree, pts[i])
            pb = leaf_path(tree, pts[j])
            lca = next(a for a, b in zip(reversed(pa sequence := pa), []) )
