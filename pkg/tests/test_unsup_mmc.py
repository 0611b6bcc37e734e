import numpy as np
import pytest

from hfd.errors import TooFewPoints
from hfd.ssmmc import make_local_problem
from hfd.unsup_mmc import UnsupParams, train_unsup_mmc


def with_bias(rows):
    return make_local_problem(rows).X


def test_two_blobs_split_cleanly():
    rng = np.random.default_rng(0)
    a = np.array([-3.0, 0.0]) + 0.4 * rng.standard_normal((10, 2))
    b = np.array([3.0, 0.0]) + 0.4 * rng.standard_normal((10, 2))
    X = with_bias(np.vstack([a, b]))
    w = train_unsup_mmc(X, UnsupParams(min_membership=3), rng_seed=0)
    side = (X @ w) > 0
    # side purity vs the generating blobs, up to a global flip
    purity = max(np.mean(side[:10] == side[0]), np.mean(side[:10] != side[0]))
    assert purity >= 0.9
    assert np.mean(side[10:] == side[10]) >= 0.9
    assert side[0] != side[10]


def test_membership_floor_held():
    rng = np.random.default_rng(1)
    for seed in range(6):
        X = with_bias(rng.standard_normal((24, 3)))
        w = train_unsup_mmc(X, UnsupParams(min_membership=5), rng_seed=seed)
        proj = X @ w
        assert int(np.sum(proj <= 0)) >= 5
        assert int(np.sum(proj > 0)) >= 5


def test_duplicated_points_terminate():
    X = with_bias(np.tile([[1.0, 2.0]], (6, 1)))
    w = train_unsup_mmc(X, UnsupParams(min_membership=3), rng_seed=0)
    assert np.all(np.isfinite(w))


def test_deterministic():
    rng = np.random.default_rng(2)
    X = with_bias(rng.standard_normal((30, 4)))
    a = train_unsup_mmc(X, UnsupParams(min_membership=4), rng_seed=9)
    b = train_unsup_mmc(X, UnsupParams(min_membership=4), rng_seed=9)
    np.testing.assert_array_equal(a, b)


def test_objective_non_increasing_across_rounds():
    rng = np.random.default_rng(3)
    for seed in range(5):
        X = with_bias(rng.standard_normal((40, 5)))
        trace = []
        train_unsup_mmc(X, UnsupParams(min_membership=6), rng_seed=seed,
                        trace=trace)
        objs = [rec["objective"] for rec in trace if rec["event"] == "unsup_round"]
        assert len(objs) >= 1
        for prev, cur in zip(objs, objs[1:]):
            assert cur <= prev + 1e-6


def test_too_few_points():
    X = with_bias(np.zeros((5, 2)))
    with pytest.raises(TooFewPoints):
        train_unsup_mmc(X, UnsupParams(min_membership=3), rng_seed=0)


def test_terminates_within_budget():
    rng = np.random.default_rng(4)
    # adversarial-ish inputs: heavy tails, near-duplicates, tight caps
    for seed in range(5):
        X = with_bias(rng.standard_t(1.5, size=(20, 3)))
        params = UnsupParams(min_membership=4, max_iters=5, max_inner_iters=40)
        w = train_unsup_mmc(X, params, rng_seed=seed)
        assert np.all(np.isfinite(w))
