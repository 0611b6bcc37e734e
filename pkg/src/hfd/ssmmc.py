"""Relaxed semi-supervised max-margin clustering for binary splits.

Learns a linear discriminant w (bias folded in as a trailing constant-1
feature) that assigns two cluster labels to the rows of a local problem,
honoring must-link pairs, a solver-selected subset of the cannot-link
pairs, and large assignment margins for unconstrained points.

The objective being minimized, for fixed satisfying assignments z, unary
labels y and cannot-link subset S, is

    lam/2 ||w||^2
    + (1/Lm)  sum_{ML pairs}    max(0, 1 - [phi(z) - max_violating phi(s)])
    + (1/|S|) sum_{CL in S}     max(0, 1 - [phi(z) - max_violating phi(s)])
    + (C/U)   sum_{unconstr.}   max(0, 1 - 2 y w.x)

with phi(x1, x2, y1, y2) = y1 w.x1 + y2 w.x2. The outer loop alternates
re-fixing (z, y, S) under the current w with an inner projected
subgradient solve of the resulting convex problem; the inner solve keeps
||w|| inside the ball of radius sqrt((1 + C) / lam) and returns the
best-objective iterate seen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, eigh

from .errors import (
    DimensionMismatch,
    EmptyCannotLink,
    EmptyConstraintSet,
    NonFinite,
    NumericalFailure,
)


@dataclass(frozen=True)
class SsmmcParams:
    """Solver hyperparameters.

    lam               -- quadratic regularization weight (> 0)
    unlabeled_weight  -- weight of the unconstrained-point margin term (>= 0);
                         forced to 0 for the first ``warmup_iters`` outer rounds
    cl_subset_fraction-- fraction of cannot-link pairs the solver commits to,
                         floored at one pair
    inner_tol         -- relative-change stop for the subgradient loop
    outer_tol         -- relative-change stop for the outer loop
    """

    lam: float = 0.01
    unlabeled_weight: float = 1.0
    cl_subset_fraction: float = 0.25
    inner_tol: float = 0.01
    outer_tol: float = 0.01
    max_inner_iters: int = 500
    max_outer_iters: int = 50
    warmup_iters: int = 3

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be > 0")
        if self.unlabeled_weight < 0:
            raise ValueError("unlabeled_weight must be >= 0")
        if not 0.0 < self.cl_subset_fraction <= 1.0:
            raise ValueError("cl_subset_fraction must lie in (0, 1]")
        if self.inner_tol <= 0 or self.outer_tol <= 0:
            raise ValueError("tolerances must be > 0")
        if self.warmup_iters < 0:
            raise ValueError("warmup_iters must be >= 0")

    def norm_bound(self) -> float:
        """Radius of the ball that contains the optimal weight vector."""
        return math.sqrt((1.0 + self.unlabeled_weight) / self.lam)


@dataclass(frozen=True)
class LocalProblem:
    """One node's clustering problem: rows with bias appended, plus constraints.

    ``X`` is M x (k + 1) with a constant-1 trailing column. ``ml`` and ``cl``
    hold row-index pairs into X; ``unconstrained`` lists every row not touched
    by any pair.
    """

    X: np.ndarray
    ml: np.ndarray
    cl: np.ndarray
    unconstrained: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]


def make_local_problem(features, ml_pairs=(), cl_pairs=()) -> LocalProblem:
    """Assemble a LocalProblem from raw feature rows (bias appended here)."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2:
        raise ValueError("features must be a 2-D matrix")
    m = feats.shape[0]
    X = np.hstack([feats, np.ones((m, 1))])
    ml = np.asarray(ml_pairs, dtype=np.int64).reshape(-1, 2)
    cl = np.asarray(cl_pairs, dtype=np.int64).reshape(-1, 2)
    for name, pairs in (("ml", ml), ("cl", cl)):
        if pairs.size and (pairs.min() < 0 or pairs.max() >= m):
            raise ValueError(f"{name} pair index out of range")
        if pairs.size and np.any(pairs[:, 0] == pairs[:, 1]):
            raise ValueError(f"{name} pair joins a row with itself")
    covered = np.zeros(m, dtype=bool)
    if ml.size:
        covered[ml.ravel()] = True
    if cl.size:
        covered[cl.ravel()] = True
    return LocalProblem(X=X, ml=ml, cl=cl, unconstrained=np.flatnonzero(~covered))


@dataclass
class CccpState:
    """Fixed quantities for one outer iteration's convex subproblem."""

    w: np.ndarray
    y: np.ndarray           # +-1 per unconstrained row
    z_ml: np.ndarray        # (Lm, 2), equal signs per pair
    z_cl: np.ndarray        # (Lc, 2), opposite signs per pair
    cl_subset: np.ndarray   # indices into the cl pair list
    outer_iter: int = 0


def joint_projection(w, x1, x2, y1, y2) -> float:
    """Signed sum of the two labeled projections: y1 w.x1 + y2 w.x2."""
    w = np.asarray(w, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x1.shape != w.shape or x2.shape != w.shape:
        raise DimensionMismatch(
            f"rows of length {x1.shape}/{x2.shape} vs weights {w.shape}")
    return float(y1 * (w @ x1) + y2 * (w @ x2))


def _pair_scatter(X, pairs) -> np.ndarray:
    diffs = X[pairs[:, 0]] - X[pairs[:, 1]]
    return diffs.T @ diffs / len(pairs)


def scatter_matrices(problem: LocalProblem) -> tuple[np.ndarray, np.ndarray]:
    """Mean outer products of pair differences, (must-link, cannot-link)."""
    if len(problem.ml) == 0 or len(problem.cl) == 0:
        raise EmptyConstraintSet("scatter matrices need >= 1 pair of each kind")
    return _pair_scatter(problem.X, problem.ml), _pair_scatter(problem.X, problem.cl)


def _dominant_generalized_eigvec(target, base) -> np.ndarray:
    """Eigenvector of the largest eigenvalue of target v = mu * base v.

    ``base`` must be positive definite. Deterministic tie handling: among
    eigenvectors whose eigenvalue is within a relative 1e-9 of the maximum,
    pick the lexicographically largest absolute-component pattern, then
    orient so the largest-magnitude entry is positive.
    """
    try:
        vals, vecs = eigh(target, base)
    except (LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"generalized eigensolve failed: {exc}") from exc
    if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(vecs))):
        raise NumericalFailure("generalized eigensolve returned non-finite values")
    top = vals[-1]
    tol = 1e-9 * max(1.0, abs(top))
    tied = np.flatnonzero(vals >= top - tol)
    best = None
    for idx in tied:
        cand = np.abs(vecs[:, idx])
        if best is None or _lex_greater(cand, np.abs(vecs[:, best])):
            best = idx
    v = vecs[:, best].copy()
    peak = np.argmax(np.abs(v))
    if v[peak] < 0:
        v = -v
    return v


def _lex_greater(a, b) -> bool:
    for ai, bi in zip(a, b):
        if ai != bi:
            return ai > bi
    return False


def init_weights(s_ml, s_cl, radius: float = 1.0) -> np.ndarray:
    """Spread-ratio initializer: direction separating cannot-link pairs.

    Solves the generalized eigenproblem s_cl v = mu (s_ml + gamma I) v for its
    top eigenvector; the ridge gamma keeps the base matrix positive definite
    when the must-link scatter is singular. The result is scaled to norm
    min(1, radius).
    """
    s_ml = np.asarray(s_ml, dtype=np.float64)
    s_cl = np.asarray(s_cl, dtype=np.float64)
    if s_ml.shape != s_cl.shape or s_ml.ndim != 2 or s_ml.shape[0] != s_ml.shape[1]:
        raise DimensionMismatch("scatter matrices must be square and same size")
    dim = s_ml.shape[0]
    gamma = 1e-6 * (np.trace(s_ml) + dim) / max(1, dim - 1)
    base = s_ml + gamma * np.eye(dim)
    v = _dominant_generalized_eigvec(s_cl, base)
    nrm = float(np.linalg.norm(v))
    if nrm == 0.0 or not np.isfinite(nrm):
        raise NumericalFailure("eigenvector has zero or non-finite norm")
    return v * (min(1.0, radius) / nrm)


def _sign_pm1(values) -> np.ndarray:
    # argmax over {-1, +1}; exact ties go to +1
    return np.where(np.asarray(values) >= 0.0, 1.0, -1.0)


def best_satisfying_assignments(w, problem: LocalProblem):
    """Highest-scoring label pairs that satisfy each constraint under w.

    Must-link pairs share the sign of (w.x1 + w.x2); cannot-link pairs take
    (sign(w.x1 - w.x2), its negation). Ties resolve to +1.
    """
    proj = problem.X @ np.asarray(w, dtype=np.float64)
    z_ml = np.empty((len(problem.ml), 2))
    if len(problem.ml):
        s = _sign_pm1(proj[problem.ml[:, 0]] + proj[problem.ml[:, 1]])
        z_ml[:, 0] = s
        z_ml[:, 1] = s
    z_cl = np.empty((len(problem.cl), 2))
    if len(problem.cl):
        s = _sign_pm1(proj[problem.cl[:, 0]] - proj[problem.cl[:, 1]])
        z_cl[:, 0] = s
        z_cl[:, 1] = -s
    return z_ml, z_cl


def best_unary_labels(w, problem: LocalProblem) -> np.ndarray:
    """Cluster side of each unconstrained row: sign(w.x), ties to +1."""
    proj = problem.X[problem.unconstrained] @ np.asarray(w, dtype=np.float64)
    return _sign_pm1(proj)


def select_cl_subset(w, problem: LocalProblem, z_cl, subset_size: int) -> np.ndarray:
    """Indices of the cannot-link pairs with the largest satisfaction margin.

    The margin of pair j is phi(z_j) minus the best constraint-violating
    score max_{s1=s2} phi(s). Ties favor lower pair indices. Returned
    indices are sorted ascending.
    """
    if not 1 <= subset_size <= len(problem.cl):
        raise ValueError("subset_size must lie in [1, n_cannot_link]")
    proj = problem.X @ np.asarray(w, dtype=np.float64)
    p1 = proj[problem.cl[:, 0]]
    p2 = proj[problem.cl[:, 1]]
    z = np.asarray(z_cl, dtype=np.float64)
    phi_z = z[:, 0] * p1 + z[:, 1] * p2
    margins = phi_z - np.abs(p1 + p2)
    order = np.argsort(-margins, kind="stable")
    return np.sort(order[:subset_size])


def _effective_unlabeled_weight(params: SsmmcParams, outer_iter: int) -> float:
    return 0.0 if outer_iter < params.warmup_iters else params.unlabeled_weight


def _objective_and_gradient(w, problem, z_ml_sign, z_cl_sign, subset, y, lam, c_unlab):
    """Value and subgradient of the fixed-assignment objective at w.

    Shares one pass over the projections; the gradient is assembled as a
    per-row coefficient vector and one X^T matvec.
    """
    X = problem.X
    proj = X @ w
    coeff = np.zeros(X.shape[0])
    obj = 0.5 * lam * float(w @ w)

    n_ml = len(problem.ml)
    if n_ml:
        i1 = problem.ml[:, 0]
        i2 = problem.ml[:, 1]
        phi_z = z_ml_sign * (proj[i1] + proj[i2])
        diff = proj[i1] - proj[i2]
        viol_sign = _sign_pm1(diff)
        margin = phi_z - np.abs(diff)
        obj += float(np.maximum(0.0, 1.0 - margin).sum()) / n_ml
        active = margin < 1.0
        if np.any(active):
            np.add.at(coeff, i1[active],
                      (viol_sign[active] - z_ml_sign[active]) / n_ml)
            np.add.at(coeff, i2[active],
                      (-viol_sign[active] - z_ml_sign[active]) / n_ml)

    n_sub = len(subset)
    if n_sub:
        rows = problem.cl[subset]
        i1 = rows[:, 0]
        i2 = rows[:, 1]
        z = z_cl_sign[subset]
        phi_z = z * (proj[i1] - proj[i2])
        total = proj[i1] + proj[i2]
        viol_sign = _sign_pm1(total)
        margin = phi_z - np.abs(total)
        obj += float(np.maximum(0.0, 1.0 - margin).sum()) / n_sub
        active = margin < 1.0
        if np.any(active):
            np.add.at(coeff, i1[active], (viol_sign[active] - z[active]) / n_sub)
            np.add.at(coeff, i2[active], (viol_sign[active] + z[active]) / n_sub)

    n_u = len(problem.unconstrained)
    if n_u and c_unlab > 0.0:
        pu = proj[problem.unconstrained]
        marg = 2.0 * y * pu
        obj += c_unlab * float(np.maximum(0.0, 1.0 - marg).sum()) / n_u
        active = marg <= 1.0
        if np.any(active):
            np.add.at(coeff, problem.unconstrained[active],
                      (-2.0 * c_unlab / n_u) * y[active])

    grad = lam * w + X.T @ coeff
    return obj, grad


def _unpack_state(state: CccpState, problem: LocalProblem):
    z_ml_sign = (state.z_ml[:, 0].astype(np.float64)
                 if len(problem.ml) else np.empty(0))
    z_cl_sign = (state.z_cl[:, 0].astype(np.float64)
                 if len(problem.cl) else np.empty(0))
    y = np.asarray(state.y, dtype=np.float64)
    subset = np.asarray(state.cl_subset, dtype=np.int64)
    return z_ml_sign, z_cl_sign, subset, y


def convex_objective(w, state: CccpState, problem: LocalProblem,
                     params: SsmmcParams) -> float:
    """Fixed-assignment objective value at w for the state's outer iteration."""
    z_ml_sign, z_cl_sign, subset, y = _unpack_state(state, problem)
    c_unlab = _effective_unlabeled_weight(params, state.outer_iter)
    obj, _ = _objective_and_gradient(
        np.asarray(w, dtype=np.float64), problem,
        z_ml_sign, z_cl_sign, subset, y, params.lam, c_unlab)
    return obj


def subgradient(w, state: CccpState, problem: LocalProblem,
                params: SsmmcParams) -> np.ndarray:
    """Subgradient of the fixed-assignment objective at w.

    Constraint pairs contribute only while their margin under w is below 1,
    via the difference between the best violating and the fixed satisfying
    joint projections; unconstrained rows contribute the hinge gradient of
    their doubled margin term.
    """
    z_ml_sign, z_cl_sign, subset, y = _unpack_state(state, problem)
    c_unlab = _effective_unlabeled_weight(params, state.outer_iter)
    _, grad = _objective_and_gradient(
        np.asarray(w, dtype=np.float64), problem,
        z_ml_sign, z_cl_sign, subset, y, params.lam, c_unlab)
    return grad


def _project_to_ball(w, radius):
    # repeat to absorb rounding so the bound holds exactly
    for _ in range(3):
        nrm = float(np.linalg.norm(w))
        if nrm <= radius:
            return w
        w = w * (radius / nrm)
    return w


def _relative_change(w_old, w_new) -> float:
    denom = max(float(np.linalg.norm(w_old)), float(np.linalg.norm(w_new)))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(w_new - w_old)) / denom


def solve_convex_subproblem(state: CccpState, problem: LocalProblem,
                            params: SsmmcParams) -> np.ndarray:
    """Projected subgradient descent on the fixed-assignment objective.

    Steps w <- w - grad / (lam * r) with r = 1, 2, ... and projects back onto
    the norm ball after every step. Subgradient descent is not monotone, so
    the best-objective iterate (including the warm start) is tracked and
    returned; stops on relative change <= inner_tol or the iteration cap.
    """
    z_ml_sign, z_cl_sign, subset, y = _unpack_state(state, problem)
    lam = params.lam
    c_unlab = _effective_unlabeled_weight(params, state.outer_iter)
    radius = math.sqrt((1.0 + c_unlab) / lam)

    w = _project_to_ball(np.array(state.w, dtype=np.float64, copy=True), radius)
    best_w = w.copy()
    best_obj = math.inf
    for r in range(1, params.max_inner_iters + 1):
        obj, grad = _objective_and_gradient(
            w, problem, z_ml_sign, z_cl_sign, subset, y, lam, c_unlab)
        if not math.isfinite(obj):
            raise NonFinite("objective became non-finite; rescale the inputs")
        if obj < best_obj:
            best_obj = obj
            best_w = w.copy()
        w_next = w - grad / (lam * r)
        if not np.all(np.isfinite(w_next)):
            raise NonFinite("weight iterate became non-finite; rescale the inputs")
        w_next = _project_to_ball(w_next, radius)
        rel = _relative_change(w, w_next)
        w = w_next
        if rel <= params.inner_tol:
            break
    obj, _ = _objective_and_gradient(
        w, problem, z_ml_sign, z_cl_sign, subset, y, lam, c_unlab)
    if obj < best_obj:
        best_w = w
    return best_w


def train_ssmmc(problem: LocalProblem, params: SsmmcParams, rng_seed: int = 0,
                trace: list | None = None) -> np.ndarray:
    """Full solve: spread-ratio initialization plus alternating rounds.

    Each outer round re-fixes the satisfying assignments, unary labels and
    committed cannot-link subset under the current w, then solves the
    resulting convex problem. Requires at least one cannot-link pair.
    Deterministic for a fixed seed (the seed only feeds the fallback
    initializer used if the eigensolve fails).
    """
    if len(problem.cl) == 0:
        raise EmptyCannotLink("semi-supervised solve needs >= 1 cannot-link pair")
    dim = problem.X.shape[1]
    full_radius = params.norm_bound()
    subset_size = min(len(problem.cl),
                      max(1, int(round(params.cl_subset_fraction * len(problem.cl)))))

    s_cl = _pair_scatter(problem.X, problem.cl)
    s_ml = (_pair_scatter(problem.X, problem.ml) if len(problem.ml)
            else np.zeros((dim, dim)))
    try:
        w = init_weights(s_ml, s_cl, radius=full_radius)
    except NumericalFailure:
        rng = np.random.default_rng(rng_seed)
        w = rng.standard_normal(dim)
        w *= min(1.0, full_radius) / float(np.linalg.norm(w))

    for t in range(params.max_outer_iters):
        z_ml, z_cl = best_satisfying_assignments(w, problem)
        y = best_unary_labels(w, problem)
        subset = select_cl_subset(w, problem, z_cl, subset_size)
        state = CccpState(w=w, y=y, z_ml=z_ml, z_cl=z_cl,
                          cl_subset=subset, outer_iter=t)
        w_next = solve_convex_subproblem(state, problem, params)
        if trace is not None:
            trace.append({
                "event": "ssmmc_outer",
                "outer_iter": t,
                "unlabeled_weight": _effective_unlabeled_weight(params, t),
                "objective": convex_objective(w_next, state, problem, params),
            })
        rel = _relative_change(w, w_next)
        w = w_next
        # the subproblem changes shape when the unconstrained term switches
        # on, so convergence is only meaningful once the warmup has passed
        if t >= params.warmup_iters and rel <= params.outer_tol:
            break
    return w
