"""Approximate nearest-neighbor search inside the learned metric.

Per tree, a query's candidates start at its leaf's training points; while
fewer than the per-tree quota have been gathered, the search climbs one
ancestor at a time and absorbs that ancestor's whole subtree (overshoot is
kept rather than trimmed). The per-tree sets are unioned through a presence
bitmap and re-ranked by the exact forest distance. The brute-force search
ranks every training point with the same machinery, so approximate and
exact results are directly comparable, ties included (sorted by distance,
then id).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientCandidates
from .metric import forest_distance_to_many, project
from .model import Forest, HierarchyTree


@dataclass(frozen=True)
class AnnParams:
    """k: neighbors to return; per_tree_candidates: gather quota per tree."""

    k: int = 5
    per_tree_candidates: int = 10

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.per_tree_candidates < 1:
            raise ValueError("per_tree_candidates must be >= 1")


@dataclass(frozen=True)
class NeighborList:
    """Neighbor ids with distances, ascending by (distance, id)."""

    ids: np.ndarray
    distances: np.ndarray

    @property
    def entries(self) -> list[tuple[int, float]]:
        return [(int(i), float(d)) for i, d in zip(self.ids, self.distances)]

    def __len__(self) -> int:
        return len(self.ids)


@dataclass
class SearchCounters:
    """Instrumentation: exact distance evaluations and candidate-set sizes."""

    distance_evals: int = 0
    queries: int = 0
    candidate_sizes: list[int] = field(default_factory=list)

    def record(self, n_candidates: int) -> None:
        self.distance_evals += n_candidates
        self.queries += 1
        self.candidate_sizes.append(n_candidates)

    def to_dict(self) -> dict:
        sizes = self.candidate_sizes
        return {
            "queries": self.queries,
            "distance_evals": self.distance_evals,
            "mean_candidates": (sum(sizes) / len(sizes)) if sizes else 0.0,
            "max_candidates": max(sizes) if sizes else 0,
        }


def leaf_path(tree: HierarchyTree, x) -> list[int]:
    """Node ids visited by a row from the root to its leaf."""
    node = tree.root
    path = [node.node_id]
    while not node.is_leaf:
        node = tree.node(node.left if project(node.split, x) <= 0.0 else node.right)
        path.append(node.node_id)
    return path


def candidates_from_tree(tree: HierarchyTree, x, quota: int,
                         exclude: int | None = None) -> np.ndarray:
    """Candidate ids from one tree: the query's leaf, widened ancestor by
    ancestor until the quota is met (the final absorption may overshoot)."""
    path = leaf_path(tree, x)
    depth = len(path) - 1
    while True:
        ids = tree.subtree_point_ids(path[depth])
        count = len(ids)
        if exclude is not None:
            pos = np.searchsorted(ids, exclude)
            if pos < len(ids) and ids[pos] == exclude:
                count -= 1
            else:
                pos = None
        else:
            pos = None
        if count >= quota or depth == 0:
            if pos is not None:
                ids = np.delete(ids, pos)
            return ids
        depth -= 1


def _rank_candidates(forest, x_n, pts_n, cand, k, counters) -> NeighborList:
    dists = forest_distance_to_many(forest, x_n, pts_n, pre_normalized=True)
    if counters is not None:
        counters.record(len(cand))
    order = np.lexsort((cand, dists))[:k]
    return NeighborList(ids=cand[order], distances=dists[order])


def approx_knn(forest: Forest, train_points, x, params: AnnParams,
               exclude: int | None = None,
               counters: SearchCounters | None = None) -> NeighborList:
    """Top-k neighbors of x from the union of per-tree candidate sets.

    ``exclude`` names the query's own training id so self-matches are never
    returned. Raises InsufficientCandidates when the union is smaller than
    k (raise ``per_tree_candidates`` in that case).
    """
    train_points = np.asarray(train_points, dtype=np.float64)
    x_n = forest.transform(x)
    mask = np.zeros(train_points.shape[0], dtype=bool)
    for tree in forest.trees:
        mask[candidates_from_tree(tree, x_n, params.per_tree_candidates, exclude)] = True
    cand = np.flatnonzero(mask)
    if cand.size < params.k:
        raise InsufficientCandidates(
            f"{cand.size} candidates for k={params.k}; increase per_tree_candidates")
    pts_n = forest.transform(train_points[cand])
    return _rank_candidates(forest, x_n, pts_n, cand, params.k, counters)


def brute_knn(forest: Forest, train_points, x, k: int,
              exclude: int | None = None,
              counters: SearchCounters | None = None) -> NeighborList:
    """Exact top-k by scoring every training point."""
    train_points = np.asarray(train_points, dtype=np.float64)
    cand = np.arange(train_points.shape[0])
    if exclude is not None:
        cand = cand[cand != exclude]
    if not 1 <= k <= cand.size:
        raise ValueError(f"k={k} outside [1, {cand.size}]")
    x_n = forest.transform(x)
    pts_n = forest.transform(train_points[cand])
    return _rank_candidates(forest, x_n, pts_n, cand, k, counters)


def batch_knn(forest: Forest, train_points, queries, params: AnnParams,
              mode: str = "approx", exclude_self: bool = False,
              counters: SearchCounters | None = None) -> list[NeighborList]:
    """Run a search per query row with normalization hoisted out of the loop.

    ``exclude_self=True`` treats query row q as training point q (the
    self-retrieval protocols); queries must then be the training matrix.
    """
    if mode not in ("approx", "brute"):
        raise ValueError(f"unknown search mode {mode!r}")
    train_points = np.asarray(train_points, dtype=np.float64)
    pts_n = forest.transform(train_points)
    qs_n = forest.transform(np.asarray(queries, dtype=np.float64))
    results = []
    for qi in range(qs_n.shape[0]):
        exclude = qi if exclude_self else None
        x_n = qs_n[qi]
        if mode == "approx":
            mask = np.zeros(train_points.shape[0], dtype=bool)
            for tree in forest.trees:
                mask[candidates_from_tree(
                    tree, x_n, params.per_tree_candidates, exclude)] = True
            cand = np.flatnonzero(mask)
            if cand.size < params.k:
                raise InsufficientCandidates(
                    f"query {qi}: {cand.size} candidates for k={params.k}; "
                    "increase per_tree_candidates")
        else:
            cand = np.arange(train_points.shape[0])
            if exclude is not None:
                cand = cand[cand != exclude]
        results.append(
            _rank_candidates(forest, x_n, pts_n[cand], cand, params.k, counters))
    return results
