"""Top-down training of cluster-hierarchy trees and forests.

Each node samples a feature subset, learns a binary split (semi-supervised
when local cannot-link pairs remain, otherwise unsupervised with a
membership floor), routes its points down and hands each child only the
constraints whose endpoints traveled together. Splitting stops at the
minimum node size or when every retry routes all points one way.

Trees are independent given their seed: tree t of a forest uses seed
``base_seed + t`` and every node derives its own generator from
(tree seed, node id), so results do not depend on traversal or thread
order.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import asdict, replace

import numpy as np

from .data import ConstraintSet, Dataset, normalize
from .errors import BadSubsetSize, DegenerateSplit, HfdError
from .metric import project_many
from .model import (
    Forest,
    HierarchyTree,
    SplitFunction,
    TreeNode,
    TreeParams,
    resolve_subset_size,
)
from .ssmmc import make_local_problem, train_ssmmc
from .unsup_mmc import train_unsup_mmc


def sample_feature_subset(dim: int, subset_size: int, rng) -> np.ndarray:
    """Draw ``subset_size`` distinct feature indices uniformly, sorted."""
    if not 1 <= subset_size <= dim:
        raise BadSubsetSize(f"subset size {subset_size} outside [1, {dim}]")
    return np.sort(rng.choice(dim, size=subset_size, replace=False))


def _node_rng(tree_seed: int, node_id: int):
    seq = np.random.SeedSequence(tree_seed, spawn_key=(node_id,))
    return np.random.Generator(np.random.PCG64(seq))


def learn_split(rows, ml_pairs, cl_pairs, params: TreeParams, rng,
                trace: list | None = None) -> SplitFunction:
    """Learn a routing rule for one node's rows.

    ``ml_pairs`` / ``cl_pairs`` index the rows locally. Takes the
    semi-supervised path when any cannot-link pair is present, else the
    unsupervised one (surviving must-links are ignored there). Retries with
    a fresh feature subset when a solve fails or routes everything to one
    side; after ``max_split_retries`` extra attempts raises DegenerateSplit.
    """
    rows = np.asarray(rows, dtype=np.float64)
    m, dim = rows.shape
    ml_pairs = np.asarray(ml_pairs, dtype=np.int64).reshape(-1, 2)
    cl_pairs = np.asarray(cl_pairs, dtype=np.int64).reshape(-1, 2)
    subset_size = resolve_subset_size(dim, params.feature_subset_size)

    for attempt in range(params.max_split_retries + 1):
        subset = sample_feature_subset(dim, subset_size, rng)
        solver_seed = int(rng.integers(0, 2**63 - 1))
        try:
            if len(cl_pairs):
                problem = make_local_problem(rows[:, subset], ml_pairs, cl_pairs)
                weights = train_ssmmc(problem, params.ssmmc, solver_seed)
                solver = "ssmmc"
            else:
                floor = max(1, min(params.unsup.min_membership, m // 2))
                unsup = replace(params.unsup, min_membership=floor)
                problem = make_local_problem(rows[:, subset])
                weights = train_unsup_mmc(problem.X, unsup, solver_seed)
                solver = "unsup"
        except HfdError:
            continue
        # Canonicalize to unit feature-norm: routing is invariant under
        # positive scaling, and projections then measure geometric margin on
        # a scale shared by every node, which is what the certainty term
        # compares. Solver-native norms differ between the pair-margin and
        # point-margin objectives and would skew deep splits upward.
        feature_norm = float(np.linalg.norm(weights[:-1]))
        if feature_norm <= 0.0 or not np.isfinite(feature_norm):
            continue
        split = SplitFunction(feature_subset=subset,
                              weights=weights / feature_norm)
        n_left = int(np.sum(project_many(split, rows) <= 0.0))
        if 0 < n_left < m:
            if trace is not None:
                trace.append({"event": "split", "solver": solver,
                              "attempt": attempt, "n_rows": m,
                              "n_ml": len(ml_pairs), "n_cl": len(cl_pairs)})
            return split
    raise DegenerateSplit(
        f"all {params.max_split_retries + 1} attempts routed {m} rows one way")


def propagate_constraints(constraints: ConstraintSet, split: SplitFunction,
                          node_rows) -> tuple[ConstraintSet, ConstraintSet]:
    """Hand each pair to the child holding both its points, or to neither.

    Pair indices reference ``node_rows``; the returned sets keep that
    indexing. Pairs whose endpoints route apart are dropped.
    """
    left_mask = project_many(split, np.asarray(node_rows, dtype=np.float64)) <= 0.0
    left_ml, right_ml = _route_pairs(constraints.must_link, left_mask)
    left_cl, right_cl = _route_pairs(constraints.cannot_link, left_mask)
    return (ConstraintSet(left_ml, left_cl), ConstraintSet(right_ml, right_cl))


def _route_pairs(pairs, left_mask):
    if len(pairs) == 0:
        empty = np.empty((0, 2), dtype=np.int64)
        return empty, empty
    first_left = left_mask[pairs[:, 0]]
    second_left = left_mask[pairs[:, 1]]
    both_left = first_left & second_left
    both_right = ~first_left & ~second_left
    return pairs[both_left], pairs[both_right]


def train_tree(data: Dataset, constraints: ConstraintSet, params: TreeParams,
               seed: int, trace: list | None = None) -> HierarchyTree:
    """Grow one hierarchy over the dataset's rows, as given (no normalization).

    Nodes at or below ``min_node_size`` points become leaves, as do nodes
    whose split attempts all degenerate; solver failures never abort the
    tree. Node ids are assigned in creation order (root 0, then children as
    their parent splits), which is deterministic for a fixed seed.
    """
    pts = data.points
    n = data.n_points
    _check_constraint_range(constraints, n)
    nodes: list[TreeNode | None] = [None]
    all_ids = np.arange(n)
    stack = [(0, all_ids, constraints.must_link, constraints.cannot_link)]
    while stack:
        node_id, point_ids, ml, cl = stack.pop()
        m = len(point_ids)
        split = None
        if m > params.min_node_size:
            rng = _node_rng(seed, node_id)
            try:
                split = learn_split(pts[point_ids], _to_local(ml, point_ids),
                                    _to_local(cl, point_ids), params, rng, trace)
            except HfdError:
                split = None
        if split is None:
            nodes[node_id] = TreeNode(node_id=node_id, subtree_count=m,
                                      point_ids=point_ids)
            continue
        left_mask = project_many(split, pts[point_ids]) <= 0.0
        left_id = len(nodes)
        right_id = left_id + 1
        nodes.extend([None, None])
        nodes[node_id] = TreeNode(node_id=node_id, subtree_count=m, split=split,
                                  left=left_id, right=right_id)
        ml_l, ml_r = _route_global_pairs(ml, point_ids, left_mask)
        cl_l, cl_r = _route_global_pairs(cl, point_ids, left_mask)
        # push right first so the left subtree is processed (and numbered) first
        stack.append((right_id, point_ids[~left_mask], ml_r, cl_r))
        stack.append((left_id, point_ids[left_mask], ml_l, cl_l))
    return HierarchyTree(nodes=nodes, root_id=0, num_training_points=n)


def _check_constraint_range(constraints: ConstraintSet, n: int) -> None:
    for pairs in (constraints.must_link, constraints.cannot_link):
        if len(pairs) and (pairs.min() < 0 or pairs.max() >= n):
            raise ValueError("constraint index outside the dataset")


def _to_local(pairs, point_ids):
    # point_ids is sorted, and every endpoint is a member of the node
    if len(pairs) == 0:
        return pairs
    return np.searchsorted(point_ids, pairs)


def _route_global_pairs(pairs, point_ids, left_mask):
    if len(pairs) == 0:
        return pairs, pairs
    local = np.searchsorted(point_ids, pairs)
    first_left = left_mask[local[:, 0]]
    second_left = left_mask[local[:, 1]]
    return pairs[first_left & second_left], pairs[~first_left & ~second_left]


def train_forest(data: Dataset, constraints: ConstraintSet, params: TreeParams,
                 num_trees: int, alpha: float = 0.5, base_seed: int = 0,
                 normalize_features: bool = True, threads: int | None = None,
                 trace: list | None = None) -> Forest:
    """Train ``num_trees`` independent hierarchies and bundle them as a metric.

    Features are normalized once up front (stats stored on the forest) unless
    disabled. Tree t is seeded with ``base_seed + t``, so the result is
    byte-identical regardless of ``threads``.
    """
    if num_trees < 1:
        raise ValueError("num_trees must be >= 1")
    _check_constraint_range(constraints, data.n_points)
    if normalize_features:
        train_data, stats = normalize(data)
    else:
        train_data, stats = data, None

    traces: list[list | None] = [[] if trace is not None else None
                                 for _ in range(num_trees)]

    def build(t: int) -> HierarchyTree:
        return train_tree(train_data, constraints, params, base_seed + t,
                          trace=traces[t])

    if threads is not None and threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            trees = list(pool.map(build, range(num_trees)))
    else:
        trees = [build(t) for t in range(num_trees)]

    if trace is not None:
        for t, records in enumerate(traces):
            for rec in records:
                trace.append({"tree": t, **rec})

    record = {
        "num_trees": num_trees,
        "alpha": alpha,
        "base_seed": base_seed,
        "normalize": normalize_features,
        "tree": asdict(params),
    }
    return Forest(trees=trees, alpha=alpha, dim=data.dim, norm_stats=stats,
                  train_params=record)
