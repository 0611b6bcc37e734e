"""Unsupervised max-margin splitting with a minimum-membership floor.

Used for nodes that have run out of cannot-link constraints. Jointly
minimizes

    lam/2 ||w||^2 + (1/M) sum_i max(0, 1 - y_i w.x_i)

over the weight vector w and binary side labels y, subject to each side
keeping at least ``min_membership`` points; the floor blocks the trivial
solution that dumps every point into one cluster. Optimization is
block-coordinate descent: an exact label step under the floor, then a
projected subgradient weight step warm-started from the previous w.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonFinite, TooFewPoints


@dataclass(frozen=True)
class UnsupParams:
    lam: float = 0.01
    min_membership: int = 5
    eps: float = 0.01
    max_iters: int = 30
    max_inner_iters: int = 300

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be > 0")
        if self.min_membership < 1:
            raise ValueError("min_membership must be >= 1")
        if self.eps <= 0:
            raise ValueError("eps must be > 0")


def _principal_direction(X, rng) -> np.ndarray:
    """Top principal direction of the rows, deterministically oriented."""
    centered = X - X.mean(axis=0)
    try:
        _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    except np.linalg.LinAlgError:
        v = rng.standard_normal(X.shape[1])
        return v / float(np.linalg.norm(v))
    v = vt[0].copy()
    if not np.all(np.isfinite(v)) or float(np.linalg.norm(v)) == 0.0:
        v = rng.standard_normal(X.shape[1])
    peak = np.argmax(np.abs(v))
    if v[peak] < 0:
        v = -v
    return v / float(np.linalg.norm(v))


def _labels_with_floor(proj, m_min) -> np.ndarray:
    """Side labels sign(proj) (ties +1), then the cheapest flips to meet the floor.

    Moving the points with the smallest |proj| from the crowded side is the
    exact minimizer of the hinge objective over floor-feasible labelings.
    """
    y = np.where(proj >= 0.0, 1.0, -1.0)
    for side in (1.0, -1.0):
        short = m_min - int(np.sum(y == side))
        if short > 0:
            donors = np.flatnonzero(y == -side)
            order = donors[np.argsort(np.abs(proj[donors]), kind="stable")]
            y[order[:short]] = side
    return y


def _hinge_weight_step(X, y, lam, radius, tol, max_iters, w0):
    """Best-iterate projected subgradient descent on the unary hinge objective."""
    w = w0.copy()
    best_w = w.copy()
    best_obj = math.inf
    m = X.shape[0]
    for r in range(1, max_iters + 1):
        proj = X @ w
        marg = y * proj
        obj = 0.5 * lam * float(w @ w) + float(np.maximum(0.0, 1.0 - marg).sum()) / m
        if not math.isfinite(obj):
            raise NonFinite("objective became non-finite; rescale the inputs")
        if obj < best_obj:
            best_obj = obj
            best_w = w.copy()
        active = marg <= 1.0
        grad = lam * w - (y[active] @ X[active]) / m
        w_next = w - grad / (lam * r)
        if not np.all(np.isfinite(w_next)):
            raise NonFinite("weight iterate became non-finite; rescale the inputs")
        nrm = float(np.linalg.norm(w_next))
        if nrm > radius:
            w_next = w_next * (radius / nrm)
        rel_denom = max(float(np.linalg.norm(w)), nrm)
        rel = float(np.linalg.norm(w_next - w)) / rel_denom if rel_denom else 0.0
        w = w_next
        if rel <= tol:
            break
    proj = X @ w
    obj = (0.5 * lam * float(w @ w)
           + float(np.maximum(0.0, 1.0 - y * proj).sum()) / m)
    if obj < best_obj:
        best_w = w
    return best_w


def _objective(X, w, y, lam) -> float:
    marg = y * (X @ w)
    return 0.5 * lam * float(w @ w) + float(np.maximum(0.0, 1.0 - marg).sum()) / len(y)


def train_unsup_mmc(X, params: UnsupParams, rng_seed: int = 0,
                    trace: list | None = None) -> np.ndarray:
    """Learn a floor-respecting binary split of the rows of X.

    X is M x (k + 1) with a trailing constant-1 bias column, matching the
    semi-supervised solver's convention. The alternation objective is
    non-increasing across rounds; if the final weight vector routes fewer
    than ``min_membership`` points to one side (routing rule: w.x <= 0 goes
    left), the bias is shifted to restore the floor whenever the projected
    values permit it. Deterministic for fixed inputs and seed.
    """
    X = np.asarray(X, dtype=np.float64)
    m = X.shape[0]
    m_min = params.min_membership
    if m < 2 * m_min:
        raise TooFewPoints(f"{m} rows cannot honour a floor of {m_min} per side")

    rng = np.random.default_rng(rng_seed)
    radius = math.sqrt(1.0 / params.lam)
    w = _principal_direction(X, rng) * min(1.0, radius)

    y_prev = None
    for it in range(params.max_iters):
        proj = X @ w
        y = _labels_with_floor(proj, m_min)
        w_next = _hinge_weight_step(X, y, params.lam, radius, params.eps,
                                    params.max_inner_iters, w)
        if trace is not None:
            trace.append({
                "event": "unsup_round",
                "round": it,
                "objective": _objective(X, w_next, y, params.lam),
            })
        denom = max(float(np.linalg.norm(w)), float(np.linalg.norm(w_next)))
        rel = float(np.linalg.norm(w_next - w)) / denom if denom else 0.0
        labels_stable = y_prev is not None and np.array_equal(y, y_prev)
        w = w_next
        y_prev = y
        if labels_stable and rel <= params.eps:
            break

    w = _repair_floor(X, w, m_min, trace)
    return w


def _repair_floor(X, w, m_min, trace):
    """Shift the bias so both routing sides hold >= m_min points, if possible."""
    proj = X @ w
    if int(np.sum(proj <= 0.0)) >= m_min and int(np.sum(proj > 0.0)) >= m_min:
        return w
    ordered = np.sort(proj)
    lo = ordered[m_min - 1]
    hi = ordered[len(proj) - m_min]
    if not lo < hi:
        return w  # projections too degenerate; caller treats this as a dead split
    w = w.copy()
    w[-1] -= lo  # threshold at lo: left side takes projections <= lo
    if trace is not None:
        trace.append({"event": "unsup_bias_repair", "shift": float(lo)})
    return w
