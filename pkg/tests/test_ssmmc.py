"""Solver tests: assignment rules, eigen-init, subgradient oracle, full solves."""

import math

import numpy as np
import pytest

from hfd.errors import DimensionMismatch, EmptyCannotLink, EmptyConstraintSet
from hfd.ssmmc import (
    CccpState,
    SsmmcParams,
    best_satisfying_assignments,
    best_unary_labels,
    convex_objective,
    init_weights,
    joint_projection,
    make_local_problem,
    scatter_matrices,
    select_cl_subset,
    solve_convex_subproblem,
    subgradient,
    train_ssmmc,
)

RNG = np.random.default_rng(20240817)


def random_problem(m=20, d=4, n_ml=5, n_cl=5, rng=RNG):
    X = rng.standard_normal((m, d))
    pairs = set()
    while len(pairs) < n_ml + n_cl:
        i, j = rng.integers(0, m, 2)
        if i != j:
            pairs.add((min(i, j), max(i, j)))
    pairs = sorted(pairs)
    return make_local_problem(X, pairs[:n_ml], pairs[n_ml:n_ml + n_cl])


def make_state(w_t, problem, subset_size, outer_iter=5):
    z_ml, z_cl = best_satisfying_assignments(w_t, problem)
    y = best_unary_labels(w_t, problem)
    subset = select_cl_subset(w_t, problem, z_cl, subset_size)
    return CccpState(w=np.asarray(w_t, float), y=y, z_ml=z_ml, z_cl=z_cl,
                     cl_subset=subset, outer_iter=outer_iter)


# ------------------------------------------------------------ joint projection

def test_joint_projection_direct():
    assert joint_projection([1, 0], [2, 1], [3, 1], 1, -1) == -1.0


def test_joint_projection_both_positive():
    w = np.array([0.5, 0.0])
    assert joint_projection(w, [1, 0], [1, 0], 1, 1) == 1.0


def test_joint_projection_symmetric():
    rng = np.random.default_rng(1)
    for _ in range(20):
        w, x1, x2 = rng.standard_normal((3, 6))
        y1, y2 = rng.choice([-1, 1], 2)
        assert joint_projection(w, x1, x2, y1, y2) == pytest.approx(
            joint_projection(w, x2, x1, y2, y1))


def test_joint_projection_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        joint_projection([1, 0], [1, 2, 3], [1, 2, 3], 1, 1)


# ------------------------------------------------------------ scatter matrices

def test_scatter_single_pair_outer_product():
    X = np.array([[1.0, 0.0], [0.0, 0.0], [3.0, 1.0], [3.0, 1.0]])
    prob = make_local_problem(X, ml_pairs=[(0, 1)], cl_pairs=[(2, 3)])
    s_ml, s_cl = scatter_matrices(prob)
    # difference of the ML pair is (1, 0, 0) after the bias append
    expected = np.zeros((3, 3))
    expected[0, 0] = 1.0
    np.testing.assert_allclose(s_ml, expected)
    # identical points contribute nothing
    np.testing.assert_allclose(s_cl, np.zeros((3, 3)))


def test_scatter_symmetric_psd():
    for seed in range(5):
        prob = random_problem(rng=np.random.default_rng(seed))
        s_ml, s_cl = scatter_matrices(prob)
        for s in (s_ml, s_cl):
            np.testing.assert_allclose(s, s.T, atol=1e-12)
            assert np.linalg.eigvalsh(s).min() > -1e-10


def test_scatter_requires_pairs():
    prob = make_local_problem(np.zeros((4, 2)), ml_pairs=[(0, 1)])
    with pytest.raises(EmptyConstraintSet):
        scatter_matrices(prob)


# ------------------------------------------------------------ initialization

def test_init_weights_axis_aligned():
    # cannot-link difference along e1, must-link difference along e2:
    # the initial direction must align with e1
    X = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 0.0], [0.0, 2.0]])
    prob = make_local_problem(X, ml_pairs=[(2, 3)], cl_pairs=[(0, 1)])
    s_ml, s_cl = scatter_matrices(prob)
    w0 = init_weights(s_ml, s_cl, radius=10.0)
    assert abs(w0[0]) / np.linalg.norm(w0) > 0.99


def test_init_weights_isotropic_tie_deterministic():
    ident = np.eye(3)
    a = init_weights(ident, ident, radius=5.0)
    b = init_weights(ident, ident, radius=5.0)
    np.testing.assert_array_equal(a, b)


def test_init_weights_norm_capped():
    rng = np.random.default_rng(2)
    for radius in (0.25, 1.0, 7.0):
        d = rng.standard_normal((6, 4))
        s_cl = d.T @ d
        e = rng.standard_normal((6, 4))
        s_ml = e.T @ e
        w0 = init_weights(s_ml, s_cl, radius=radius)
        assert np.linalg.norm(w0) == pytest.approx(min(1.0, radius))


# ------------------------------------------------------------ assignments

def brute_force_best(w, x1, x2, satisfying):
    best, best_phi = None, -math.inf
    for s1 in (1, -1):
        for s2 in (1, -1):
            if satisfying == "equal" and s1 != s2:
                continue
            if satisfying == "opposite" and s1 == s2:
                continue
            phi = joint_projection(w, x1, x2, s1, s2)
            if phi > best_phi + 1e-12:
                best, best_phi = (s1, s2), phi
    return best, best_phi


def test_best_assignments_match_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(30):
        prob = random_problem(rng=rng)
        w = rng.standard_normal(prob.X.shape[1])
        z_ml, z_cl = best_satisfying_assignments(w, prob)
        for j, (i1, i2) in enumerate(prob.ml):
            (s1, s2), phi = brute_force_best(w, prob.X[i1], prob.X[i2], "equal")
            got = joint_projection(w, prob.X[i1], prob.X[i2], *z_ml[j])
            assert got == pytest.approx(phi)
        for j, (i1, i2) in enumerate(prob.cl):
            (s1, s2), phi = brute_force_best(w, prob.X[i1], prob.X[i2], "opposite")
            got = joint_projection(w, prob.X[i1], prob.X[i2], *z_cl[j])
            assert got == pytest.approx(phi)
            assert z_cl[j, 0] == -z_cl[j, 1]


def test_best_assignments_examples_and_ties():
    # projections 2 and -1: ML sum positive -> (+1, +1); CL diff positive -> (+1, -1)
    X = np.array([[2.0], [-1.0]])
    prob = make_local_problem(X, ml_pairs=[(0, 1)], cl_pairs=())
    w = np.array([1.0, 0.0])
    z_ml, _ = best_satisfying_assignments(w, prob)
    assert z_ml[0].tolist() == [1.0, 1.0]
    prob_cl = make_local_problem(X, cl_pairs=[(0, 1)])
    _, z_cl = best_satisfying_assignments(w, prob_cl)
    assert z_cl[0].tolist() == [1.0, -1.0]
    assert joint_projection(w, prob_cl.X[0], prob_cl.X[1], *z_cl[0]) == 3.0
    # tie: projections sum to zero -> +1 by rule
    X = np.array([[1.0], [-1.0]])
    prob_tie = make_local_problem(X, ml_pairs=[(0, 1)])
    z_ml, _ = best_satisfying_assignments(np.array([1.0, 0.0]), prob_tie)
    assert z_ml[0].tolist() == [1.0, 1.0]


def test_best_unary_labels_signs_and_tie():
    X = np.array([[3.0], [-0.1], [0.0]])
    prob = make_local_problem(X)
    y = best_unary_labels(np.array([1.0, 0.0]), prob)
    assert y.tolist() == [1.0, -1.0, 1.0]


# ------------------------------------------------------------ subset selection

def test_select_cl_subset_brute_force_small():
    rng = np.random.default_rng(4)
    for _ in range(25):
        n_cl = int(rng.integers(2, 12))
        prob = random_problem(m=16, n_ml=2, n_cl=n_cl, rng=rng)
        w = rng.standard_normal(prob.X.shape[1])
        _, z_cl = best_satisfying_assignments(w, prob)
        size = int(rng.integers(1, n_cl + 1))
        got = set(select_cl_subset(w, prob, z_cl, size).tolist())
        proj = prob.X @ w
        margins = [
            joint_projection(w, prob.X[i1], prob.X[i2], *z_cl[j])
            - max(joint_projection(w, prob.X[i1], prob.X[i2], s, s)
                  for s in (1, -1))
            for j, (i1, i2) in enumerate(prob.cl)
        ]
        order = sorted(range(n_cl), key=lambda j: (-margins[j], j))
        assert got == set(order[:size])


def test_select_cl_subset_full_set_identity():
    prob = random_problem()
    w = RNG.standard_normal(prob.X.shape[1])
    _, z_cl = best_satisfying_assignments(w, prob)
    got = select_cl_subset(w, prob, z_cl, len(prob.cl))
    np.testing.assert_array_equal(got, np.arange(len(prob.cl)))


def test_select_cl_subset_equal_margins_lowest_indices():
    # identical pairs everywhere: all margins equal, ties resolve low-index-first
    X = np.tile(np.array([[1.0, 0.0], [0.0, 1.0]]), (4, 1))
    cl = [(0, 1), (2, 3), (4, 5), (6, 7)]
    prob = make_local_problem(X, cl_pairs=cl)
    w = np.array([1.0, -1.0, 0.2])
    _, z_cl = best_satisfying_assignments(w, prob)
    np.testing.assert_array_equal(select_cl_subset(w, prob, z_cl, 2), [0, 1])


# ------------------------------------------------------------ subgradient

def finite_difference_gradient(fun, w, step=1e-6):
    grad = np.zeros_like(w)
    for i in range(len(w)):
        up, down = w.copy(), w.copy()
        up[i] += step
        down[i] -= step
        grad[i] = (fun(up) - fun(down)) / (2.0 * step)
    return grad


def away_from_kinks(w, state, prob, gap=1e-3):
    proj = prob.X @ w
    if len(prob.ml):
        p1, p2 = proj[prob.ml[:, 0]], proj[prob.ml[:, 1]]
        margin = state.z_ml[:, 0] * (p1 + p2) - np.abs(p1 - p2)
        if not (np.all(np.abs(margin - 1) > gap) and np.all(np.abs(p1 - p2) > gap)):
            return False
    if len(state.cl_subset):
        rows = prob.cl[state.cl_subset]
        p1, p2 = proj[rows[:, 0]], proj[rows[:, 1]]
        margin = state.z_cl[state.cl_subset, 0] * (p1 - p2) - np.abs(p1 + p2)
        if not (np.all(np.abs(margin - 1) > gap) and np.all(np.abs(p1 + p2) > gap)):
            return False
    if len(prob.unconstrained):
        pu = proj[prob.unconstrained]
        if not np.all(np.abs(2.0 * state.y * pu - 1.0) > gap):
            return False
    return True


def test_subgradient_no_active_terms_is_ridge_only():
    # constraints hugely satisfied and no unconstrained weight: grad = lam * w
    X = np.array([[10.0], [-10.0], [10.0], [10.0]])
    prob = make_local_problem(X, ml_pairs=[(2, 3)], cl_pairs=[(0, 1)])
    params = SsmmcParams(lam=0.5, unlabeled_weight=0.0)
    w = np.array([1.0, 0.0])
    state = make_state(w, prob, 1)
    np.testing.assert_allclose(subgradient(w, state, prob, params), 0.5 * w)


def test_subgradient_active_unary_contribution():
    # one unconstrained point with doubled margin 0.5 <= 1 contributes the
    # hinge gradient -2 (C/U) y x
    X = np.array([[0.25, 0.0]])
    prob = make_local_problem(X)
    params = SsmmcParams(lam=1.0, unlabeled_weight=2.0, warmup_iters=0)
    w = np.array([1.0, 0.0, 0.0])
    state = CccpState(w=w, y=np.array([1.0]), z_ml=np.empty((0, 2)),
                      z_cl=np.empty((0, 2)), cl_subset=np.empty(0, dtype=int),
                      outer_iter=3)
    grad = subgradient(w, state, prob, params)
    expected = w * 1.0 - 2.0 * 2.0 * prob.X[0]
    np.testing.assert_allclose(grad, expected)


def test_subgradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    params = SsmmcParams(lam=0.01, unlabeled_weight=1.0, warmup_iters=0)
    checked = 0
    while checked < 40:
        prob = random_problem(rng=rng)
        w_t = rng.standard_normal(prob.X.shape[1])
        state = make_state(w_t, prob, 2)
        w = 2.0 * rng.standard_normal(prob.X.shape[1])
        if not away_from_kinks(w, state, prob):
            continue
        checked += 1
        grad = subgradient(w, state, prob, params)
        grad_fd = finite_difference_gradient(
            lambda v: convex_objective(v, state, prob, params), w)
        rel = np.linalg.norm(grad - grad_fd) / np.linalg.norm(grad_fd)
        assert rel < 1e-4


# ------------------------------------------------------------ inner solver

def test_inner_solver_shrinks_unconstrained_ridge():
    # no constraints, no unary weight: the objective is lam/2 ||w||^2 and the
    # iterates follow w (1 - 1/r), collapsing at the first step
    prob = make_local_problem(RNG.standard_normal((6, 3)))
    params = SsmmcParams(lam=0.1, unlabeled_weight=0.0, inner_tol=0.01)
    w0 = np.array([1.0, -2.0, 0.5, 0.3])
    state = CccpState(w=w0, y=best_unary_labels(w0, prob),
                      z_ml=np.empty((0, 2)), z_cl=np.empty((0, 2)),
                      cl_subset=np.empty(0, dtype=int), outer_iter=0)
    w = solve_convex_subproblem(state, prob, params)
    assert np.linalg.norm(w) < params.inner_tol * params.norm_bound()


def test_inner_solver_norm_bound_every_iteration():
    rng = np.random.default_rng(6)
    params = SsmmcParams(lam=0.02, unlabeled_weight=1.0, warmup_iters=0,
                         max_inner_iters=60)
    for _ in range(5):
        prob = random_problem(rng=rng)
        w_t = 30.0 * rng.standard_normal(prob.X.shape[1])
        state = make_state(w_t, prob, 2)
        radius = params.norm_bound()
        # replicate the solve step by step, asserting the bound throughout
        from hfd.ssmmc import _objective_and_gradient, _project_to_ball, _unpack_state
        z_ml_sign, z_cl_sign, subset, y = _unpack_state(state, prob)
        w = _project_to_ball(w_t.copy(), radius)
        for r in range(1, 50):
            assert np.linalg.norm(w) <= radius
            _, grad = _objective_and_gradient(w, prob, z_ml_sign, z_cl_sign,
                                              subset, y, params.lam, 1.0)
            w = _project_to_ball(w - grad / (params.lam * r), radius)
            assert np.linalg.norm(w) <= radius


def test_inner_solver_objective_never_worse_than_start():
    rng = np.random.default_rng(7)
    params = SsmmcParams(lam=0.01, warmup_iters=0)
    for _ in range(10):
        prob = random_problem(m=30, rng=rng)
        w_t = rng.standard_normal(prob.X.shape[1])
        state = make_state(w_t, prob, 2)
        w = solve_convex_subproblem(state, prob, params)
        start = convex_objective(state.w, state, prob, params)
        end = convex_objective(w, state, prob, params)
        assert end <= start + 1e-6


# ------------------------------------------------------------ full solve

def two_blob_problem(rng, n_per=20, n_ml=10, n_cl=10):
    a = np.array([-3.0, 0.0]) + 0.4 * rng.standard_normal((n_per, 2))
    b = np.array([3.0, 0.0]) + 0.4 * rng.standard_normal((n_per, 2))
    X = np.vstack([a, b])
    ml = [(int(i), int(j)) for i, j in
          zip(rng.integers(0, n_per, n_ml), rng.integers(0, n_per, n_ml)) if i != j]
    ml += [(n_per + int(i), n_per + int(j)) for i, j in
           zip(rng.integers(0, n_per, n_ml), rng.integers(0, n_per, n_ml)) if i != j]
    cl = [(int(i), n_per + int(j)) for i, j in
          zip(rng.integers(0, n_per, n_cl), rng.integers(0, n_per, n_cl))]
    return make_local_problem(X, ml, cl), n_per


def test_train_ssmmc_separates_blobs():
    rng = np.random.default_rng(8)
    prob, n_per = two_blob_problem(rng)
    w = train_ssmmc(prob, SsmmcParams(), rng_seed=0)
    proj = prob.X @ w
    side = proj > 0
    assert len(set(side[:n_per])) == 1 and len(set(side[n_per:])) == 1
    assert side[0] != side[n_per]
    # every constraint satisfied by the returned labeling
    for i1, i2 in prob.ml:
        assert side[i1] == side[i2]
    for i1, i2 in prob.cl:
        assert side[i1] != side[i2]


def test_train_ssmmc_deterministic():
    rng = np.random.default_rng(9)
    prob, _ = two_blob_problem(rng)
    w1 = train_ssmmc(prob, SsmmcParams(), rng_seed=3)
    w2 = train_ssmmc(prob, SsmmcParams(), rng_seed=3)
    np.testing.assert_array_equal(w1, w2)


def test_train_ssmmc_requires_cannot_link():
    prob = make_local_problem(RNG.standard_normal((8, 3)), ml_pairs=[(0, 1)])
    with pytest.raises(EmptyCannotLink):
        train_ssmmc(prob, SsmmcParams(), rng_seed=0)


def four_blob_problem(rng, n_per=25):
    centers = [(-6.0, -2.0), (-6.0, 2.0), (6.0, -2.0), (6.0, 2.0)]
    pts, labels = [], []
    for c, (cx, cy) in enumerate(centers):
        pts.append(np.array([cx, cy]) + 0.5 * rng.standard_normal((n_per, 2)))
        labels += [c] * n_per
    pts = np.vstack(pts)
    labels = np.array(labels)
    ml, cl = [], []
    while len(ml) < 40:
        i, j = rng.integers(0, len(labels), 2)
        if i != j and labels[i] == labels[j]:
            ml.append((int(i), int(j)))
    while len(cl) < 40:
        i, j = rng.integers(0, len(labels), 2)
        if labels[i] != labels[j]:
            cl.append((int(i), int(j)))
    return make_local_problem(pts, ml, cl), labels // 2


def test_relaxed_subset_commits_to_superclusters():
    rng = np.random.default_rng(10)
    prob, super_id = four_blob_problem(rng)
    subset_size = max(1, round(0.25 * len(prob.cl)))

    w = train_ssmmc(prob, SsmmcParams(cl_subset_fraction=0.25), rng_seed=0)
    proj = prob.X @ w
    side = proj > 0
    assert len(set(side[super_id == 0])) == 1
    assert len(set(side[super_id == 1])) == 1
    assert side[super_id == 0][0] != side[super_id == 1][0]

    margins = (np.abs(proj[prob.cl[:, 0]] - proj[prob.cl[:, 1]])
               - np.abs(proj[prob.cl[:, 0]] + proj[prob.cl[:, 1]]))
    top = np.sort(margins)[::-1][:subset_size]
    eta_relaxed = np.mean(np.maximum(0.0, 1.0 - top))
    assert np.sum(margins >= 0.5) >= subset_size
    assert eta_relaxed < 0.5

    # the non-relaxed run spreads slack across everything instead
    w_full = train_ssmmc(prob, SsmmcParams(cl_subset_fraction=1.0), rng_seed=0)
    proj_full = prob.X @ w_full
    margins_full = (np.abs(proj_full[prob.cl[:, 0]] - proj_full[prob.cl[:, 1]])
                    - np.abs(proj_full[prob.cl[:, 0]] + proj_full[prob.cl[:, 1]]))
    eta_full = np.mean(np.maximum(0.0, 1.0 - margins_full))
    assert eta_relaxed < eta_full
