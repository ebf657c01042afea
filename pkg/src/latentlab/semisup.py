"""Norm-constrained hinge classifier, the generalisation-bound terms, and the
labelled-sample curve built from an unsupervised encoder."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .core import derive_stream
from .exceptions import ConvergenceError, DomainError

__all__ = [
    "LinearClassifier",
    "hinge_objective",
    "hinge_minimize",
    "HingeLinearClassifier",
    "BoundTerms",
    "bound_terms",
    "CurvePoint",
    "semisup_experiment",
]


@dataclass(frozen=True)
class LinearClassifier:
    """``w`` with ``||w|| <= rho``; ``gap`` bounds ``objective - optimum``."""

    w: np.ndarray
    rho: float
    objective: float
    gap: float
    iterations: int = 0

    def decision_function(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.w

    def predict(self, X) -> np.ndarray:
        return np.where(self.decision_function(X) >= 0, 1, -1)


def hinge_objective(w, X, y) -> float:
    return float(np.mean(np.maximum(0.0, 1.0 - y * (X @ w))))


def _project(w, rho):
    n = np.linalg.norm(w)
    return w if n <= rho else w * (rho / n)


def _smoothed(w, X, y, mu):
    """Huber-smoothed hinge and its gradient; ``0 <= hinge - smoothed <= mu/2``."""
    z = 1.0 - y * (X @ w)
    val = np.where(z >= mu, z - mu / 2.0, np.where(z > 0, z * z / (2.0 * mu), 0.0))
    dz = np.clip(z / mu, 0.0, 1.0)
    grad = -(X.T @ (dz * y)) / X.shape[0]
    return float(val.mean()), grad


def _fista(X, y, rho, w0, mu, tol, max_iter):
    L = max(np.linalg.norm(X, 2) ** 2 / (X.shape[0] * mu), 1e-12)
    w = _project(w0, rho)
    v, t = w.copy(), 1.0
    gap = math.inf
    for it in range(1, max_iter + 1):
        _, g = _smoothed(v, X, y, mu)
        w_new = _project(v - g / L, rho)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        v = w_new + ((t - 1.0) / t_new) * (w_new - w)
        w, t = w_new, t_new
        if it % 10 == 0 or it == max_iter:
            _, gw = _smoothed(w, X, y, mu)
            # Frank-Wolfe gap of the smoothed problem over the ball
            gap = float(gw @ w + rho * np.linalg.norm(gw)) + mu / 2.0
            if gap <= tol:
                return w, gap, it
    return w, gap, max_iter


def hinge_minimize(X, y, rho, tol=1e-3, max_iter=20000, n_restarts=5, rng=None) -> LinearClassifier:
    """Minimise the mean hinge loss over ``||w||_2 <= rho``.

    Accelerated projected gradient on a Huber-smoothed hinge whose bias is at
    most ``tol/2``.  A run stops once its certified gap (smoothed Frank-Wolfe gap
    plus the smoothing error) is at most ``tol``, which bounds the distance of
    the true objective from the optimum.  The best of ``n_restarts`` random
    feasible starts is returned.

    Raises :class:`ConvergenceError` (carrying the best iterate) if no run
    certifies within ``max_iter`` iterations.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] == 0:
        raise DomainError("no training data")
    if X.shape[0] != y.size:
        raise DomainError("X and y lengths differ")
    if rho <= 0:
        raise DomainError("rho must be positive")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise DomainError("labels must be +1 or -1")
    rng = np.random.default_rng(0) if rng is None else rng
    d = X.shape[1]
    mu = tol
    best = None
    for r in range(max(1, n_restarts)):
        w0 = np.zeros(d) if r == 0 else _project(rng.standard_normal(d), rho * rng.random())
        w, gap, it = _fista(X, y, rho, w0, mu, tol, max_iter)
        obj = hinge_objective(w, X, y)
        cand = LinearClassifier(w, float(rho), obj, gap, it)
        if best is None or (cand.gap <= tol, -cand.objective) > (best.gap <= tol, -best.objective):
            best = cand
    if best.gap > tol:
        raise ConvergenceError(f"gap {best.gap:.3e} above tol {tol:.1e} after {max_iter} iterations",
                               best=best, gap=best.gap)
    return best


class HingeLinearClassifier(ClassifierMixin, BaseEstimator):
    """Estimator wrapper around :func:`hinge_minimize` for ``+-1`` labels."""

    def __init__(self, rho=1.0, tol=1e-3, max_iter=20000, n_restarts=5, random_state=0):
        self.rho = rho
        self.tol = tol
        self.max_iter = max_iter
        self.n_restarts = n_restarts
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_ = np.array([-1, 1])
        res = hinge_minimize(X, y, self.rho, self.tol, self.max_iter, self.n_restarts,
                             np.random.default_rng(self.random_state))
        self.coef_ = res.w
        self.objective_ = res.objective
        self.gap_ = res.gap
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        return check_array(X, dtype=np.float64) @ self.coef_

    def predict(self, X):
        return np.where(self.decision_function(X) >= 0, 1, -1)


@dataclass(frozen=True)
class BoundTerms:
    C_t: float
    R_t: float
    E_t: float
    beta: float
    gamma: float
    rho: float
    B: float
    t: int
    delta: float

    @property
    def total(self) -> float:
        return self.C_t + self.R_t + self.E_t


def bound_terms(beta, gamma, rho, B, t, delta) -> BoundTerms:
    """Encoder-quality, complexity and confidence terms of the test-error bound.

    ``C_t = (1-b)(1 + sqrt(L/((1-b)t))) rho B + b max(0, 1 - sqrt(L/(b t))) rho gamma``
    with ``L = ln(1/delta)``; the first summand is 0 at ``b = 1``.
    ``R_t = sqrt(rho^2/t)`` and ``E_t = sqrt(L/t)``.
    """
    if not 0 < beta <= 1:
        raise DomainError("beta must lie in (0, 1]")
    if not 0 < delta < 1:
        raise DomainError("delta must lie in (0, 1)")
    if t < 1:
        raise DomainError("t must be at least 1")
    for name, v in (("gamma", gamma), ("rho", rho), ("B", B)):
        if v < 0:
            raise DomainError(f"{name} must be nonnegative")
    L = math.log(1.0 / delta)
    first = 0.0 if beta == 1 else (1 - beta) * (1 + math.sqrt(L / ((1 - beta) * t))) * rho * B
    second = beta * max(0.0, 1 - math.sqrt(L / (beta * t))) * rho * gamma
    return BoundTerms(first + second, math.sqrt(rho**2 / t), math.sqrt(L / t),
                      float(beta), float(gamma), float(rho), float(B), int(t), float(delta))


@dataclass(frozen=True)
class CurvePoint:
    t: int
    test_error: float
    bound: BoundTerms | None
    realized_beta: float
    realized_gamma: float
    objective: float = float("nan")
    margin: float = float("nan")
    extra: dict = field(default_factory=dict)

    def row(self) -> dict:
        b = self.bound
        nan = float("nan")
        return {
            "t": self.t,
            "test_error": self.test_error,
            "C_t": b.C_t if b else nan,
            "R_t": b.R_t if b else nan,
            "E_t": b.E_t if b else nan,
            "total_bound": b.total if b else nan,
            "realized_beta": self.realized_beta,
            "realized_gamma": self.realized_gamma,
        }


def semisup_experiment(draw_users, encode, w_true, t_values, n_test, seed, rho, gamma, delta=0.05,
                       tol=1e-3, affine=True, label_fn=None, mapper=None) -> list[CurvePoint]:
    """Test error of a hinge classifier trained on ``t`` encoded users, per ``t``.

    ``draw_users(n, rng)`` returns ``(X, H)``: raw observations and their
    binary latents (``n x k``).  ``encode(X)`` returns ``n x k`` estimates.
    Features are ``2 f(x) - 1`` (or ``f(x)`` with ``affine=False``); labels
    are ``sign(<w_true, 2h - 1>)``.

    ``realized_gamma`` is ``gamma``, a feature-space distance; ``realized_beta``
    is the fraction of training users whose features lie within ``gamma`` of
    the true latent's features.  ``B`` is the largest training feature norm.

    Stream layout: test set on stream 0, train set for grid point ``i`` on
    stream ``i + 1``, restarts on stream ``1000 + i``.  ``mapper(fn, n)``
    may run the grid points concurrently (results in index order).
    """
    w_true = np.asarray(w_true, dtype=np.float64)
    label_fn = label_fn or (lambda H: np.where((2.0 * H - 1.0) @ w_true > 0, 1, -1))
    feat = (lambda F: 2.0 * F - 1.0) if affine else (lambda F: F)
    Xte, Hte = draw_users(n_test, derive_stream(seed, 0))
    Fte = feat(encode(Xte))
    yte = label_fn(Hte)
    t_values = list(t_values)

    def point(i):
        t = t_values[i]
        if t == 0:
            # no labels seen: constant prediction of the smaller label
            return CurvePoint(0, float(np.mean(yte != -1)), None, float("nan"), float(gamma))
        Xtr, Htr = draw_users(t, derive_stream(seed, i + 1))
        Ftr = feat(encode(Xtr))
        ytr = label_fn(Htr)
        clf = hinge_minimize(Ftr, ytr, rho, tol=tol, rng=derive_stream(seed, 1000 + i))
        err = float(np.mean(clf.predict(Fte) != yte))
        dist = np.linalg.norm(Ftr - feat(Htr.astype(np.float64)), axis=1)
        beta = float(np.mean(dist <= gamma))
        B = float(np.max(np.linalg.norm(Ftr, axis=1)))
        margins = ytr * (Ftr @ clf.w)
        bt = bound_terms(beta, gamma, rho, B, t, delta) if beta > 0 else None
        return CurvePoint(int(t), err, bt, beta, float(gamma), clf.objective, float(np.min(margins)))

    mapper = mapper or (lambda fn, n: [fn(i) for i in range(n)])
    return mapper(point, len(t_values))
