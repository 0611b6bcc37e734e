"""Versioned JSON persistence for trained forests.

The document stores a header (format version, shape, alpha, the full
training parameter record, normalization stats) followed by one node array
per tree. Weights round-trip bit-faithfully through the JSON float
encoding, and the byte output is deterministic (sorted keys, fixed
separators), so identical models serialize identically.
"""

from __future__ import annotations

import json

import numpy as np

from .data import NormStats
from .model import Forest, HierarchyTree, SplitFunction, TreeNode

FORMAT_VERSION = 1


def forest_to_doc(forest: Forest) -> dict:
    return {
        "kind": "hfd-forest",
        "format_version": FORMAT_VERSION,
        "n_points": forest.num_training_points,
        "dim": forest.dim,
        "num_trees": forest.num_trees,
        "alpha": forest.alpha,
        "params": forest.train_params,
        "norm_stats": (None if forest.norm_stats is None else {
            "mean": forest.norm_stats.mean.tolist(),
            "stddev": forest.norm_stats.stddev.tolist(),
        }),
        "trees": [_tree_to_doc(t) for t in forest.trees],
    }


def _tree_to_doc(tree: HierarchyTree) -> list[dict]:
    out = []
    for node in tree.nodes:
        rec: dict = {"id": node.node_id, "count": node.subtree_count}
        if node.is_leaf:
            rec["points"] = node.point_ids.tolist()
        else:
            rec["features"] = node.split.feature_subset.tolist()
            rec["weights"] = node.split.weights.tolist()
            rec["left"] = node.left
            rec["right"] = node.right
        out.append(rec)
    return out


def doc_to_forest(doc: dict) -> Forest:
    if doc.get("kind") != "hfd-forest":
        raise ValueError("not a forest document")
    version = doc.get("format_version")
    if not isinstance(version, int) or version > FORMAT_VERSION:
        raise ValueError(
            f"model format version {version!r} is newer than this build "
            f"(supports up to {FORMAT_VERSION})")
    stats = doc.get("norm_stats")
    norm = (None if stats is None else NormStats(
        mean=np.asarray(stats["mean"], dtype=np.float64),
        stddev=np.asarray(stats["stddev"], dtype=np.float64)))
    trees = [_doc_to_tree(t, doc["n_points"]) for t in doc["trees"]]
    return Forest(trees=trees, alpha=doc["alpha"], dim=doc["dim"],
                  norm_stats=norm, train_params=doc.get("params", {}))


def _doc_to_tree(records: list[dict], n_points: int) -> HierarchyTree:
    nodes = []
    for rec in sorted(records, key=lambda r: r["id"]):
        if "points" in rec:
            nodes.append(TreeNode(
                node_id=rec["id"], subtree_count=rec["count"],
                point_ids=np.asarray(rec["points"], dtype=np.int64)))
        else:
            split = SplitFunction(
                feature_subset=np.asarray(rec["features"], dtype=np.int64),
                weights=np.asarray(rec["weights"], dtype=np.float64))
            nodes.append(TreeNode(
                node_id=rec["id"], subtree_count=rec["count"], split=split,
                left=rec["left"], right=rec["right"]))
    return HierarchyTree(nodes=nodes, root_id=0, num_training_points=n_points)


def dumps_forest(forest: Forest) -> str:
    return json.dumps(forest_to_doc(forest), sort_keys=True,
                      separators=(",", ":")) + "\n"


def save_forest(forest: Forest, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_forest(forest))


def load_forest(path) -> Forest:
    with open(path) as fh:
        return doc_to_forest(json.load(fh))
