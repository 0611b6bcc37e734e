"""Experiment configuration for the command-line interface.

A single JSON document with defaults baked in; user files override any
subset of keys, command-line flags override the file, and the HFD_SEED
environment variable overrides everything for CI runs.
"""

from __future__ import annotations

import copy
import json

from .ann import AnnParams
from .errors import HfdError
from .model import TreeParams
from .ssmmc import SsmmcParams
from .unsup_mmc import UnsupParams


class ConfigError(HfdError):
    """Bad or missing configuration value."""


DEFAULT_CONFIG: dict = {
    "dataset": {
        "path": None,
        "format": "csv",
        "label_column": False,
        "header": False,
    },
    "normalize": True,
    "constraints": {
        "must_link": 100,
        "cannot_link": 100,
        "seed": None,       # None: use the master seed
    },
    "tree": {
        "feature_subset_size": None,   # None: d when d < 3, else round(d / 3)
        "min_node_size": 5,
        "max_split_retries": 3,
    },
    "ssmmc": {
        "lam": 0.01,
        "unlabeled_weight": 1.0,
        "cl_subset_fraction": 0.25,
        "inner_tol": 0.01,
        "outer_tol": 0.01,
        "max_inner_iters": 500,
        "max_outer_iters": 50,
        "warmup_iters": 3,
    },
    "unsup": {
        "lam": 0.01,
        "min_membership": None,        # None: tree.min_node_size
        "eps": 0.01,
        "max_iters": 30,
        "max_inner_iters": 300,
    },
    "forest": {
        "num_trees": 500,
        "alpha": 0.5,
    },
    "ann": {
        "k": 5,
        "per_tree_candidates": 10,
    },
    "eval": {
        "folds": 5,
        "retrieval_ks": [5, 10, 15, 20, 25, 30, 35, 40, 45, 50],
        "k_o_values": [1, 3, 5, 10, 20, 30],
        "eval_ks": [10, 20, 30, 40, 50],
        "noise_rates": [0.0, 0.1, 0.2, 0.3],
        "similarity_k": 50,
    },
    "seed": 0,
    "threads": None,
    "output_dir": "hfd-output",
}


def _merge(defaults: dict, user: dict, trail: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, value in user.items():
        here = f"{trail}{key}"
        if key not in defaults:
            raise ConfigError(f"unknown config key: {here}")
        if isinstance(defaults[key], dict) and value is not None:
            if not isinstance(value, dict):
                raise ConfigError(f"config key {here} must be an object")
            out[key] = _merge(defaults[key], value, trail=f"{here}.")
        else:
            out[key] = value
    return out


def load_config(path) -> dict:
    """Read a user config file and merge it over the defaults."""
    try:
        with open(path) as fh:
            user = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(user, dict):
        raise ConfigError("config root must be a JSON object")
    return _merge(DEFAULT_CONFIG, user)


def resolved_with_overrides(config: dict, overrides: dict) -> dict:
    """Apply non-None flag overrides: {'forest.num_trees': 10, ...}."""
    out = copy.deepcopy(config)
    for dotted, value in overrides.items():
        if value is None:
            continue
        node = out
        *parents, last = dotted.split(".")
        for part in parents:
            node = node[part]
        node[last] = value
    return out


def build_tree_params(config: dict) -> TreeParams:
    try:
        ssmmc = SsmmcParams(**config["ssmmc"])
        unsup_cfg = dict(config["unsup"])
        if unsup_cfg.get("min_membership") is None:
            unsup_cfg["min_membership"] = config["tree"]["min_node_size"]
        unsup = UnsupParams(**unsup_cfg)
        return TreeParams(ssmmc=ssmmc, unsup=unsup, **config["tree"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad solver/tree parameters: {exc}") from None


def build_ann_params(config: dict) -> AnnParams:
    try:
        return AnnParams(**config["ann"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad ann parameters: {exc}") from None


def validate_run_config(config: dict) -> None:
    if config["dataset"]["path"] is None:
        raise ConfigError("dataset.path is required")
    if config["dataset"]["format"] not in ("csv", "libsvm"):
        raise ConfigError(f"unknown dataset format {config['dataset']['format']!r}")
    if not isinstance(config["seed"], int) or config["seed"] < 0:
        raise ConfigError("seed must be a non-negative integer")
    if config["forest"]["num_trees"] < 1:
        raise ConfigError("forest.num_trees must be >= 1")
    if config["forest"]["alpha"] <= 0:
        raise ConfigError("forest.alpha must be > 0")
    threads = config["threads"]
    if threads is not None and (not isinstance(threads, int) or threads < 1):
        raise ConfigError("threads must be a positive integer or null")
