"""Benchmark protocols over a trained metric.

Covers neighbor-based classification, label retrieval precision,
approximate-vs-exact search quality and cost, label-noise robustness
sweeps, and sparse similarity exports for external clustering. Every
protocol is reproducible from (dataset, parameter record, seed), all of
which are embedded in the reports.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .ann import AnnParams, SearchCounters, batch_knn
from .data import ConstraintSet, Dataset, flip_labels, sample_constraints, split_folds
from .errors import LengthMismatch, UnlabeledData
from .hierarchy import train_forest
from .model import Forest, TreeParams


@dataclass
class PipelineConfig:
    """Everything needed to train a forest inside an evaluation protocol."""

    tree: TreeParams = field(default_factory=TreeParams)
    num_trees: int = 50
    alpha: float = 0.5
    n_must_link: int = 100
    n_cannot_link: int = 100
    normalize: bool = True
    threads: int | None = None


@dataclass
class EvalReport:
    """Protocol outcome: per-fold scores, their mean, and provenance."""

    protocol: str
    fold_scores: list[float]
    aggregate: float
    params: dict
    timing: dict
    seed: int
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "fold_scores": self.fold_scores,
            "aggregate": self.aggregate,
            "params": self.params,
            "timing": self.timing,
            "seed": self.seed,
            "extra": self.extra,
        }


def _require_labels(data: Dataset, what: str) -> np.ndarray:
    if data.labels is None:
        raise UnlabeledData(f"{what} needs class labels")
    return data.labels


def _majority_vote(neighbor_labels: np.ndarray) -> int:
    """Most common label; on count ties the nearest tied neighbor decides."""
    values, counts = np.unique(neighbor_labels, return_counts=True)
    tied = set(values[counts == counts.max()])
    if len(tied) == 1:
        return int(next(iter(tied)))
    for lab in neighbor_labels:
        if int(lab) in tied:
            return int(lab)
    raise AssertionError("unreachable: tied label missing from neighbors")


def knn_classify(forest: Forest, train: Dataset, test: Dataset, k: int = 5,
                 ann: AnnParams | None = None, mode: str = "approx") -> float:
    """Majority-vote accuracy of k nearest training neighbors per test point."""
    train_labels = _require_labels(train, "knn classification")
    test_labels = _require_labels(test, "knn classification scoring")
    ann = ann or AnnParams()
    params = AnnParams(k=k, per_tree_candidates=ann.per_tree_candidates)
    hits = 0
    for qi, nl in enumerate(batch_knn(forest, train.points, test.points,
                                      params, mode=mode)):
        if _majority_vote(train_labels[nl.ids]) == int(test_labels[qi]):
            hits += 1
    return hits / test.n_points


def retrieval_precision(forest: Forest, data: Dataset, ks,
                        ann: AnnParams | None = None,
                        mode: str = "approx") -> dict[int, float]:
    """Mean fraction of same-label neighbors among the top k, per k in ks."""
    labels = _require_labels(data, "retrieval precision")
    ks = sorted(int(k) for k in ks)
    ann = ann or AnnParams()
    params = AnnParams(k=max(ks), per_tree_candidates=ann.per_tree_candidates)
    sums = {k: 0.0 for k in ks}
    lists = batch_knn(forest, data.points, data.points, params,
                      mode=mode, exclude_self=True)
    for qi, nl in enumerate(lists):
        same = (labels[nl.ids] == labels[qi])
        for k in ks:
            sums[k] += float(np.mean(same[:k]))
    return {k: sums[k] / data.n_points for k in ks}


def ann_quality(forest: Forest, data: Dataset, k_o_values,
                eval_ks=(10, 20, 30, 40, 50)) -> list[dict]:
    """Approximate-search quality and cost across candidate quotas.

    Ground truth is the exact top-max(eval_ks) list per point. For each
    quota: mean average precision (precision against the ground-truth set,
    averaged over the listed cutoffs, then over queries), wall time as a
    fraction of the exact search, and the exact distance-evaluation counts
    from the instrumentation counters. Searches run single-threaded so the
    time fractions are comparable.
    """
    eval_ks = sorted(int(k) for k in eval_ks)
    depth = max(eval_ks)
    brute_counters = SearchCounters()
    t0 = time.perf_counter()
    truth = batch_knn(forest, data.points, data.points,
                      AnnParams(k=depth, per_tree_candidates=1),
                      mode="brute", exclude_self=True, counters=brute_counters)
    brute_seconds = time.perf_counter() - t0
    truth_sets = [set(nl.ids.tolist()) for nl in truth]

    records = []
    for k_o in k_o_values:
        counters = SearchCounters()
        params = AnnParams(k=depth, per_tree_candidates=int(k_o))
        t0 = time.perf_counter()
        approx = batch_knn(forest, data.points, data.points, params,
                           mode="approx", exclude_self=True, counters=counters)
        seconds = time.perf_counter() - t0
        ap_sum = 0.0
        for qi, nl in enumerate(approx):
            relevant = truth_sets[qi]
            hits = np.fromiter((int(i) in relevant for i in nl.ids),
                               dtype=np.float64, count=len(nl.ids))
            cum = np.cumsum(hits)
            ap_sum += float(np.mean([cum[c - 1] / c for c in eval_ks]))
        records.append({
            "per_tree_candidates": int(k_o),
            "map": ap_sum / data.n_points,
            "time_fraction": seconds / brute_seconds if brute_seconds > 0 else 0.0,
            "seconds": seconds,
            "brute_seconds": brute_seconds,
            "distance_evals": counters.distance_evals,
            "brute_distance_evals": brute_counters.distance_evals,
            "mean_candidates": counters.to_dict()["mean_candidates"],
        })
    return records


def _derived_seeds(seed: int, *key: int) -> tuple[int, int, int]:
    state = np.random.SeedSequence(seed, spawn_key=tuple(key)).generate_state(3)
    return int(state[0]), int(state[1]), int(state[2])


def cross_validated_accuracy(data: Dataset, pipeline: PipelineConfig,
                             n_folds: int = 5, k: int = 5,
                             ann: AnnParams | None = None, seed: int = 0,
                             flip_rate: float = 0.0,
                             rate_key: int = 0) -> list[float]:
    """Per-fold neighbor-classification accuracy of the full train pipeline.

    Each fold: optionally flip a fraction of the training labels, sample
    constraints from the (possibly noisy) labels, train a forest on the
    training split, then classify the held-out split with the noisy labels
    voting. Seeds derive deterministically from (seed, rate_key, fold).
    """
    labels = _require_labels(data, "classification pipeline")
    ann = ann or AnnParams()
    folds = split_folds(data, n_folds, seed)
    scores = []
    for fi, (train_idx, test_idx) in enumerate(folds):
        flip_seed, cons_seed, forest_seed = _derived_seeds(seed, rate_key, fi)
        train_labels = labels[train_idx]
        if flip_rate > 0.0:
            train_labels = flip_labels(train_labels, flip_rate, flip_seed)
        train = Dataset(data.points[train_idx], train_labels)
        test = Dataset(data.points[test_idx], labels[test_idx])
        constraints = sample_constraints(
            train_labels, pipeline.n_must_link, pipeline.n_cannot_link, cons_seed)
        forest = train_forest(train, constraints, pipeline.tree,
                              pipeline.num_trees, alpha=pipeline.alpha,
                              base_seed=forest_seed,
                              normalize_features=pipeline.normalize,
                              threads=pipeline.threads)
        scores.append(knn_classify(forest, train, test, k=k, ann=ann))
    return scores


def noise_sweep(data: Dataset, rates, pipeline: PipelineConfig,
                n_folds: int = 5, k: int = 5, ann: AnnParams | None = None,
                seed: int = 0) -> list[dict]:
    """Classification accuracy under increasing training-label corruption.

    Constraints are resampled from the flipped labels at every rate, and the
    flipped labels also cast the classification votes; held-out scoring
    labels stay clean. Rate 0 reproduces the plain pipeline exactly.
    """
    records = []
    for ri, rate in enumerate(rates):
        scores = cross_validated_accuracy(
            data, pipeline, n_folds=n_folds, k=k, ann=ann, seed=seed,
            flip_rate=float(rate), rate_key=ri)
        records.append({
            "rate": float(rate),
            "fold_accuracies": scores,
            "accuracy": float(np.mean(scores)),
        })
    return records


def export_similarity_matrix(forest: Forest, data: Dataset, k: int, path=None,
                             sigma_mode: str = "one_minus_d",
                             ann: AnnParams | None = None) -> sp.coo_matrix:
    """Sparse symmetric k-NN similarity graph with similarity 1 - distance.

    Symmetrized with the elementwise maximum; the implicit diagonal
    (self-similarity 1) is not stored. When ``path`` is given the matrix is
    written as coordinate text lines ``i j value``.
    """
    if sigma_mode != "one_minus_d":
        raise ValueError(f"unknown sigma_mode {sigma_mode!r}")
    ann = ann or AnnParams()
    params = AnnParams(k=k, per_tree_candidates=ann.per_tree_candidates)
    lists = batch_knn(forest, data.points, data.points, params,
                      mode="approx", exclude_self=True)
    n = data.n_points
    rows, cols, vals = [], [], []
    for qi, nl in enumerate(lists):
        rows.extend([qi] * len(nl.ids))
        cols.extend(int(i) for i in nl.ids)
        vals.extend(1.0 - nl.distances)
    directed = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    symmetric = directed.maximum(directed.T).tocoo()
    if path is not None:
        order = np.lexsort((symmetric.col, symmetric.row))
        with open(path, "w") as fh:
            for idx in order:
                fh.write(f"{symmetric.row[idx]} {symmetric.col[idx]} "
                         f"{symmetric.data[idx]!r}\n")
    return symmetric


def _entropy(counts: np.ndarray) -> float:
    total = counts.sum()
    probs = counts[counts > 0] / total
    return float(-(probs * np.log(probs)).sum())


def vmeasure(predicted, truth) -> float:
    """Harmonic mean of homogeneity and completeness of two labelings.

    1.0 for identical partitions up to relabeling; 0.0 when the prediction
    carries no information about the true classes.
    """
    pred = np.asarray(predicted)
    true = np.asarray(truth)
    if pred.shape != true.shape or pred.ndim != 1:
        raise LengthMismatch(
            f"label sequences of shape {pred.shape} vs {true.shape}")
    _, pred_ids = np.unique(pred, return_inverse=True)
    _, true_ids = np.unique(true, return_inverse=True)
    n_pred = pred_ids.max() + 1
    n_true = true_ids.max() + 1
    table = np.zeros((n_true, n_pred))
    np.add.at(table, (true_ids, pred_ids), 1.0)
    n = table.sum()

    row_sums = table.sum(axis=1)  # per true class
    col_sums = table.sum(axis=0)  # per predicted cluster
    h_true = _entropy(row_sums)
    h_pred = _entropy(col_sums)
    nz_r, nz_c = np.nonzero(table)
    joint = table[nz_r, nz_c] / n
    h_true_given_pred = float(-(joint * np.log(
        table[nz_r, nz_c] / col_sums[nz_c])).sum())
    h_pred_given_true = float(-(joint * np.log(
        table[nz_r, nz_c] / row_sums[nz_r])).sum())

    homogeneity = 1.0 if h_true == 0.0 else 1.0 - h_true_given_pred / h_true
    completeness = 1.0 if h_pred == 0.0 else 1.0 - h_pred_given_true / h_pred
    if homogeneity + completeness == 0.0:
        return 0.0
    return 2.0 * homogeneity * completeness / (homogeneity + completeness)
