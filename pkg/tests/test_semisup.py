import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latentlab import derive_stream
from latentlab.exceptions import ConvergenceError, DomainError
from latentlab.mixture import balanced_hyperplane, sample_user
from latentlab.semisup import HingeLinearClassifier, bound_terms, hinge_minimize, hinge_objective, semisup_experiment


def grid_min_2d(X, y, rho, step=1e-3):
    """Hinge minimum over the disk by a coarse grid followed by a fine local grid."""
    def best_on(xs, ys):
        W = np.array(np.meshgrid(xs, ys)).reshape(2, -1).T
        W = W[np.linalg.norm(W, axis=1) <= rho]
        vals = np.maximum(0, 1 - (W @ X.T) * y).mean(axis=1)
        i = np.argmin(vals)
        return W[i], vals[i]

    c = np.arange(-rho, rho + 1e-12, 1e-2)
    w0, _ = best_on(c, c)
    fx = np.arange(w0[0] - 0.03, w0[0] + 0.03, step)
    fy = np.arange(w0[1] - 0.03, w0[1] + 0.03, step)
    return best_on(fx, fy)[1]


def test_separable_one_dimensional():
    res = hinge_minimize(np.array([[1.0], [-1.0]]), np.array([1, -1]), 2.0)
    assert res.objective <= 1e-3
    assert res.w[0] >= 1 - 1e-3


def test_identical_labels_align_with_mean():
    rng = derive_stream(1, 0)
    X = rng.standard_normal((50, 3)) + np.array([2.0, 0.0, 0.0])
    res = hinge_minimize(X, np.ones(50), 50.0)
    assert res.objective <= 1e-3
    assert res.w @ X.mean(axis=0) > 0


@pytest.mark.parametrize("seed", range(3))
def test_random_labels_unit_features_against_grid(seed):
    rng = derive_stream(seed, 5)
    ang = rng.uniform(0, 2 * np.pi, 100)
    X = np.column_stack([np.cos(ang), np.sin(ang)])
    y = rng.choice([-1, 1], size=100)
    res = hinge_minimize(X, y, 1.0)
    assert res.objective >= 0.5
    ref = grid_min_2d(X, y, 1.0)
    assert abs(res.objective - ref) <= 2e-3
    # every margin is at most 1 in the unit ball, so the optimum is 1 - ||mean(y x)||
    assert res.objective == pytest.approx(1 - np.linalg.norm((y[:, None] * X).mean(axis=0)), abs=1e-3)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_hinge_solution_feasible_and_certified(seed):
    rng = derive_stream(seed, 0)
    X = rng.standard_normal((30, 4))
    y = rng.choice([-1, 1], size=30)
    res = hinge_minimize(X, y, 1.5)
    assert np.linalg.norm(res.w) <= 1.5 + 1e-12
    assert res.gap <= 1e-3
    assert res.objective == pytest.approx(hinge_objective(res.w, X, y))


def test_hinge_convergence_error_carries_best():
    rng = derive_stream(0, 0)
    X = rng.standard_normal((40, 5))
    y = rng.choice([-1, 1], size=40)
    with pytest.raises(ConvergenceError) as exc:
        hinge_minimize(X, y, 3.0, tol=1e-9, max_iter=3, n_restarts=1)
    assert exc.value.best is not None


def test_hinge_input_validation():
    with pytest.raises(DomainError):
        hinge_minimize(np.ones((2, 1)), np.array([1, 0]), 1.0)
    with pytest.raises(DomainError):
        hinge_minimize(np.ones((2, 1)), np.array([1, -1]), 0.0)


def test_estimator_wrapper():
    X = np.array([[2.0, 0.0], [-2.0, 0.0], [1.5, 1.0], [-1.5, -1.0]])
    y = np.array([1, -1, 1, -1])
    clf = HingeLinearClassifier(rho=2.0).fit(X, y)
    assert list(clf.predict(X)) == list(y)
    assert clf.score(X, y) == 1.0


def test_bound_terms_perfect_encoder_example():
    bt = bound_terms(1.0, 0.3, 2.0, 5.0, 4, 1 / math.e)
    assert bt.C_t == pytest.approx(0.5 * 2.0 * 0.3)
    assert bt.R_t == pytest.approx(1.0)
    assert bt.E_t == pytest.approx(0.5)


def test_bound_terms_zero_gamma():
    assert bound_terms(1.0, 0.0, 2.0, 5.0, 10, 0.05).C_t == 0.0


def test_bound_terms_large_t_limit():
    beta, gamma, rho, B = 0.9, 0.2, 3.0, 4.0
    bt = bound_terms(beta, gamma, rho, B, 10**8, 0.05)
    assert bt.C_t == pytest.approx((1 - beta) * rho * B + beta * rho * gamma, abs=1e-3)
    assert bt.R_t < 1e-3 and bt.E_t < 1e-3


def test_bound_terms_clamps_small_t():
    # ln(1/delta)/(beta t) > 1 would make the second factor negative
    bt = bound_terms(1.0, 0.5, 1.0, 1.0, 1, 0.01)
    assert bt.C_t == 0.0


def _passthrough_setup(k, s, seed):
    w = balanced_hyperplane(k, s, derive_stream(seed, 99))

    def draw(n, rng):
        H = np.stack([sample_user(k, s, rng).values for _ in range(n)])
        return H, H

    return w, draw


def test_passthrough_encoder_separates_when_every_genre_is_seen():
    k = 4
    checked = 0
    for seed in range(10):
        w, draw = _passthrough_setup(k, 1, seed)
        grid = [2 * k, 4 * k]
        curve = semisup_experiment(draw, lambda X: X, w, grid, 500, seed, rho=4.0, gamma=0.0)
        for i, p in enumerate(curve):
            # same stream the experiment used for this grid point's training set
            H, _ = draw(grid[i], derive_stream(seed, i + 1))
            assert p.realized_beta == 1.0
            if H.sum(axis=0).min() > 0:
                checked += 1
                assert p.test_error == 0.0
    assert checked >= 10


def test_no_labels_gives_prior_error():
    k = 10
    w, draw = _passthrough_setup(k, 1, 4)
    curve = semisup_experiment(draw, lambda X: X, w, [0], 2000, 4, rho=4.0, gamma=0.0)
    assert abs(curve[0].test_error - 0.5) <= 3 * math.sqrt(0.25 / 2000)
    assert curve[0].bound is None
