"""Command-line surface: train, query, evaluate, plus data utilities.

Commands
    train                 train a forest from a config file, write a model dir
    knn                   batch neighbor queries against a saved model
    eval                  run an evaluation protocol, write report files
    constraints sample    draw ML/CL pairs from a labeled dataset
    dataset normalize     center/scale a dataset and save the statistics

Exit codes: 0 success, 2 config error, 3 data error, 4 training failure,
5 dimension mismatch, 6 protocol prerequisite missing. The HFD_SEED
environment variable overrides the config seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .ann import AnnParams, SearchCounters, batch_knn
from .config import (
    ConfigError,
    build_ann_params,
    build_tree_params,
    load_config,
    resolved_with_overrides,
    validate_run_config,
)
from .data import (
    ConstraintSet,
    Dataset,
    load_dataset,
    normalize,
    sample_constraints,
    save_constraints,
)
from .errors import (
    DimensionMismatch,
    HfdError,
    InfeasibleRequest,
    InsufficientCandidates,
    ParseError,
    UnlabeledData,
)
from .evaluate import (
    EvalReport,
    PipelineConfig,
    ann_quality,
    cross_validated_accuracy,
    export_similarity_matrix,
    noise_sweep,
    retrieval_precision,
)
from .hierarchy import train_forest
from .model import Forest
from .serialize import dumps_forest, load_forest

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_TRAIN = 4
EXIT_DIMENSION = 5
EXIT_PREREQ = 6

PROTOCOLS = ("classify", "retrieval", "ann_quality", "noise_sweep",
             "export_similarity")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hfd",
        description="Hierarchy forest distance: train, query and evaluate "
                    "a semi-supervised nonlinear metric.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train a forest and save the model")
    train.add_argument("--config", required=True, help="experiment config JSON")
    train.add_argument("--out", help="output directory (overrides config)")
    train.add_argument("--seed", type=int, help="override config seed")
    train.add_argument("--trees", type=int, help="override forest.num_trees")
    train.add_argument("--threads", type=int, help="worker thread cap")
    train.add_argument("--print-effective-config", action="store_true",
                       help="print the resolved config and exit")

    knn = sub.add_parser("knn", help="batch nearest-neighbor queries")
    knn.add_argument("--model", required=True, help="model.json from `hfd train`")
    knn.add_argument("--queries", required=True, help="query rows file")
    knn.add_argument("--format", default="csv", choices=("csv", "libsvm"))
    knn.add_argument("--label-column", action="store_true",
                     help="queries file carries a trailing label column")
    knn.add_argument("--header", action="store_true",
                     help="queries file starts with a header line")
    knn.add_argument("--k", type=int, required=True, help="neighbors per query")
    knn.add_argument("--k-candidates", type=int, default=10,
                     help="per-tree candidate quota (approx mode)")
    knn.add_argument("--mode", default="approx", choices=("approx", "brute"))
    knn.add_argument("--out", required=True, help="neighbors CSV path")

    evl = sub.add_parser("eval", help="run an evaluation protocol")
    evl.add_argument("--config", required=True)
    evl.add_argument("--protocol", required=True, choices=PROTOCOLS)
    evl.add_argument("--out", help="output directory (overrides config)")
    evl.add_argument("--seed", type=int)
    evl.add_argument("--threads", type=int)

    cons = sub.add_parser("constraints", help="constraint utilities")
    cons_sub = cons.add_subparsers(dest="subcommand", required=True)
    sample = cons_sub.add_parser("sample", help="draw ML/CL pairs from labels")
    sample.add_argument("--data", required=True)
    sample.add_argument("--format", default="csv", choices=("csv", "libsvm"))
    sample.add_argument("--label-column", action="store_true")
    sample.add_argument("--header", action="store_true")
    sample.add_argument("--must-link", type=int, required=True)
    sample.add_argument("--cannot-link", type=int, required=True)
    sample.add_argument("--seed", type=int, default=0)
    sample.add_argument("--out", required=True)

    dset = sub.add_parser("dataset", help="dataset utilities")
    dset_sub = dset.add_subparsers(dest="subcommand", required=True)
    norm = dset_sub.add_parser("normalize", help="center and scale features")
    norm.add_argument("--data", required=True)
    norm.add_argument("--format", default="csv", choices=("csv", "libsvm"))
    norm.add_argument("--label-column", action="store_true")
    norm.add_argument("--header", action="store_true")
    norm.add_argument("--out", required=True, help="normalized CSV path")
    norm.add_argument("--stats", help="where to write the mean/stddev JSON")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "knn":
            return _cmd_knn(args)
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "constraints":
            return _cmd_constraints_sample(args)
        if args.command == "dataset":
            return _cmd_dataset_normalize(args)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, FileNotFoundError, InfeasibleRequest) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DimensionMismatch as exc:
        print(f"dimension mismatch: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    except UnlabeledData as exc:
        print(f"protocol prerequisite missing: {exc}", file=sys.stderr)
        return EXIT_PREREQ
    except InsufficientCandidates as exc:
        print(f"InsufficientCandidates: {exc}", file=sys.stderr)
        return 1
    except HfdError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAIN


def _resolve_config(args, extra_overrides=None) -> dict:
    config = load_config(args.config)
    overrides = {
        "seed": getattr(args, "seed", None),
        "threads": getattr(args, "threads", None),
        "output_dir": getattr(args, "out", None),
        "forest.num_trees": getattr(args, "trees", None),
    }
    if extra_overrides:
        overrides.update(extra_overrides)
    config = resolved_with_overrides(config, overrides)
    env_seed = os.environ.get("HFD_SEED")
    if env_seed is not None:
        try:
            config["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError(f"HFD_SEED must be an integer, got {env_seed!r}")
    validate_run_config(config)
    return config


def _load_config_dataset(config: dict) -> Dataset:
    ds = config["dataset"]
    path = Path(ds["path"])
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")
    return load_dataset(path, fmt=ds["format"], label_column=ds["label_column"],
                        header=ds["header"])


def _constraints_for(config: dict, labels) -> ConstraintSet:
    if labels is None:
        raise UnlabeledData("constraint sampling needs a labeled dataset")
    seed = config["constraints"]["seed"]
    if seed is None:
        seed = config["seed"]
    return sample_constraints(labels, config["constraints"]["must_link"],
                              config["constraints"]["cannot_link"], seed)


def _train_from_config(config: dict) -> tuple[Forest, float]:
    data = _load_config_dataset(config)
    constraints = _constraints_for(config, data.labels)
    params = build_tree_params(config)
    start = time.perf_counter()
    forest = train_forest(
        data, constraints, params,
        num_trees=config["forest"]["num_trees"],
        alpha=config["forest"]["alpha"],
        base_seed=config["seed"],
        normalize_features=config["normalize"],
        threads=config["threads"])
    seconds = time.perf_counter() - start
    forest.train_params["dataset"] = {
        **config["dataset"], "path": str(Path(config["dataset"]["path"]).resolve()),
    }
    forest.train_params["constraints"] = config["constraints"]
    forest.train_params["seed"] = config["seed"]
    return forest, seconds


def _mean_leaf_depth(forest: Forest) -> float:
    total, count = 0, 0
    for tree in forest.trees:
        depths = {tree.root_id: 0}
        for node in tree.nodes:
            if not node.is_leaf:
                depths[node.left] = depths[node.node_id] + 1
                depths[node.right] = depths[node.node_id] + 1
        for node in tree.nodes:
            if node.is_leaf:
                total += depths[node.node_id]
                count += 1
    return total / count if count else 0.0


def _cmd_train(args) -> int:
    config = _resolve_config(args)
    if args.print_effective_config:
        print(json.dumps(config, indent=2, sort_keys=True))
        return 0
    out_dir = Path(config["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)

    forest, seconds = _train_from_config(config)
    model_path = out_dir / "model.json"
    model_path.write_text(dumps_forest(forest))
    (out_dir / "config.json").write_text(
        json.dumps(config, indent=2, sort_keys=True) + "\n")
    depth = _mean_leaf_depth(forest)
    with open(out_dir / "train.log", "w") as log:
        log.write(f"trees={forest.num_trees} n={forest.num_training_points} "
                  f"dim={forest.dim} mean_leaf_depth={depth:.3f} "
                  f"seconds={seconds:.3f}\n")
    print(f"trained {forest.num_trees} trees on "
          f"{forest.num_training_points} points "
          f"(mean leaf depth {depth:.2f}) in {seconds:.2f}s")
    print(f"model: {model_path}")
    return 0


def _cmd_knn(args) -> int:
    model_path = Path(args.model)
    if not model_path.exists():
        raise FileNotFoundError(f"model not found: {model_path}")
    forest = load_forest(model_path)
    train_meta = forest.train_params.get("dataset")
    if not train_meta or not train_meta.get("path"):
        raise ConfigError("model does not record its training dataset path")
    train_data = load_dataset(train_meta["path"], fmt=train_meta["format"],
                              label_column=train_meta["label_column"],
                              header=train_meta["header"])
    queries_path = Path(args.queries)
    if not queries_path.exists():
        raise FileNotFoundError(f"queries not found: {queries_path}")
    queries = load_dataset(queries_path, fmt=args.format,
                           label_column=args.label_column, header=args.header)
    if queries.dim != forest.dim:
        raise DimensionMismatch(
            f"queries have {queries.dim} features, model expects {forest.dim}")

    params = AnnParams(k=args.k, per_tree_candidates=args.k_candidates)
    counters = SearchCounters()
    start = time.perf_counter()
    lists = batch_knn(forest, train_data.points, queries.points, params,
                      mode=args.mode, counters=counters)
    seconds = time.perf_counter() - start

    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w") as fh:
        for qi, nl in enumerate(lists):
            for rank, (nid, dist) in enumerate(nl.entries, start=1):
                fh.write(f"{qi},{rank},{nid},{dist!r}\n")
    summary = {
        "mode": args.mode,
        "k": args.k,
        "per_tree_candidates": args.k_candidates,
        "seconds": seconds,
        **counters.to_dict(),
    }
    summary_path = out_path.with_suffix(".summary.json")
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"{len(lists)} queries x {args.k} neighbors -> {out_path} "
          f"({counters.distance_evals} distance evaluations)")
    return 0


def _write_csv(path: Path, headerless_rows) -> None:
    with open(path, "w") as fh:
        for row in headerless_rows:
            fh.write(",".join(str(v) for v in row) + "\n")


def _cmd_eval(args) -> int:
    config = _resolve_config(args)
    data = _load_config_dataset(config)
    out_dir = Path(config["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    ann = build_ann_params(config)
    pipeline = PipelineConfig(
        tree=build_tree_params(config),
        num_trees=config["forest"]["num_trees"],
        alpha=config["forest"]["alpha"],
        n_must_link=config["constraints"]["must_link"],
        n_cannot_link=config["constraints"]["cannot_link"],
        normalize=config["normalize"],
        threads=config["threads"])
    seed = config["seed"]
    ecfg = config["eval"]
    protocol = args.protocol
    start = time.perf_counter()

    if protocol == "classify":
        scores = cross_validated_accuracy(
            data, pipeline, n_folds=ecfg["folds"], k=ann.k, ann=ann, seed=seed)
        report = _report(protocol, scores, config, start, seed)
        _write_csv(out_dir / "classify_folds.csv",
                   [(i, s) for i, s in enumerate(scores)])
        print(f"5-fold style accuracy: mean={report.aggregate:.4f} "
              f"folds={['%.4f' % s for s in scores]}")
    elif protocol == "noise_sweep":
        records = noise_sweep(data, ecfg["noise_rates"], pipeline,
                              n_folds=ecfg["folds"], k=ann.k, ann=ann, seed=seed)
        accs = [r["accuracy"] for r in records]
        report = _report(protocol, accs, config, start, seed,
                         extra={"records": records})
        _write_csv(out_dir / "noise_sweep.csv",
                   [(r["rate"], r["accuracy"]) for r in records])
        for r in records:
            print(f"rate={r['rate']:.2f} accuracy={r['accuracy']:.4f}")
    else:
        constraints = _constraints_for(config, data.labels)
        forest = train_forest(
            data, constraints, pipeline.tree, pipeline.num_trees,
            alpha=pipeline.alpha, base_seed=seed,
            normalize_features=pipeline.normalize, threads=pipeline.threads)
        if protocol == "retrieval":
            curve = retrieval_precision(forest, data, ecfg["retrieval_ks"], ann=ann)
            report = _report(protocol, list(curve.values()), config, start, seed,
                             extra={"curve": {str(k): v for k, v in curve.items()}})
            _write_csv(out_dir / "retrieval_curve.csv", sorted(curve.items()))
            for k, v in sorted(curve.items()):
                print(f"precision@{k} = {v:.4f}")
        elif protocol == "ann_quality":
            records = ann_quality(forest, data, ecfg["k_o_values"],
                                  eval_ks=ecfg["eval_ks"])
            report = _report(protocol, [r["map"] for r in records], config,
                             start, seed, extra={"records": records})
            _write_csv(out_dir / "ann_quality.csv",
                       [(r["per_tree_candidates"], r["map"], r["time_fraction"],
                         r["distance_evals"], r["brute_distance_evals"])
                        for r in records])
            for r in records:
                print(f"k_candidates={r['per_tree_candidates']:3d} "
                      f"mAP={r['map']:.4f} time_fraction={r['time_fraction']:.3f}")
        else:  # export_similarity
            matrix = export_similarity_matrix(
                forest, data, ecfg["similarity_k"],
                path=out_dir / "similarity.txt", ann=ann)
            report = _report(protocol, [1.0], config, start, seed,
                             extra={"nnz": int(matrix.nnz),
                                    "path": str(out_dir / "similarity.txt")})
            print(f"similarity graph: {matrix.nnz} entries -> "
                  f"{out_dir / 'similarity.txt'}")

    (out_dir / f"{protocol}_report.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    (out_dir / "config.json").write_text(
        json.dumps(config, indent=2, sort_keys=True) + "\n")
    return 0


def _report(protocol, scores, config, start, seed, extra=None) -> EvalReport:
    return EvalReport(
        protocol=protocol,
        fold_scores=[float(s) for s in scores],
        aggregate=float(np.mean(scores)) if scores else 0.0,
        params=config,
        timing={"seconds": time.perf_counter() - start},
        seed=seed,
        extra=extra or {})


def _cmd_constraints_sample(args) -> int:
    data = load_dataset(args.data, fmt=args.format,
                        label_column=args.label_column, header=args.header)
    if data.labels is None:
        raise UnlabeledData("constraint sampling needs labels "
                            "(use --label-column for CSV)")
    constraints = sample_constraints(data.labels, args.must_link,
                                     args.cannot_link, args.seed)
    save_constraints(constraints, args.out)
    print(f"{constraints.n_must_link} ML + {constraints.n_cannot_link} CL "
          f"pairs -> {args.out}")
    return 0


def _cmd_dataset_normalize(args) -> int:
    data = load_dataset(args.data, fmt=args.format,
                        label_column=args.label_column, header=args.header)
    normalized, stats = normalize(data)
    with open(args.out, "w") as fh:
        for i in range(normalized.n_points):
            row = [repr(v) for v in normalized.points[i]]
            if normalized.labels is not None:
                row.append(str(int(normalized.labels[i])))
            fh.write(",".join(row) + "\n")
    if args.stats:
        Path(args.stats).write_text(json.dumps({
            "mean": stats.mean.tolist(),
            "stddev": stats.stddev.tolist(),
        }, indent=2) + "\n")
    print(f"normalized {normalized.n_points} x {normalized.dim} -> {args.out}")
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
