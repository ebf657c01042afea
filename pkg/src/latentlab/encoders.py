"""Encoders for the mixture and log-linear models.

The mixture encoder inverts the movie-genre matrix ``A`` with a
low-variance pseudo-inverse ``B`` (``B A = I``, small ``max |B_ij|``) and
thresholds ``B x / T``.  The log-linear encoder returns the normalised sum
of the emitted movies' vectors.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core import GenreStructure, ValidityReport, norm_error
from .exceptions import (
    DegenerateSampleError,
    DimensionError,
    DomainError,
    InfeasibleError,
    SolverError,
)
from .loglinear import MovieVectors, orthonormal_completion
from .mixture import movie_genre_matrix

__all__ = [
    "PseudoInverse",
    "EncoderOutput",
    "low_variance_pseudoinverse",
    "threshold_map",
    "linear_threshold",
    "linear_encode",
    "loglinear_encode",
    "ThresholdedPseudoInverseEncoder",
    "NormalizedSumEncoder",
    "measure_encoder",
    "LogLinearConcentration",
    "loglinear_concentration_report",
]

_HIGHS_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


@dataclass(frozen=True, eq=False)
class PseudoInverse:
    """Left inverse ``B`` (``k x M``) of a movie-genre matrix with its certificate.

    ``lam`` is ``max |B_ij|``; ``residual`` is ``max |(B A - I)_ij|``.
    """

    B: np.ndarray
    lam: float
    residual: float
    tol: float
    source_digest: str | None = None
    row_objectives: np.ndarray | None = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return self.B.shape[0]

    @property
    def M(self) -> int:
        return self.B.shape[1]

    def save(self, path) -> None:
        """Write ``B`` and its certificate to a ``.npz`` archive."""
        meta = {"lam": self.lam, "residual": self.residual, "tol": self.tol,
                "source_digest": self.source_digest}
        np.savez(path, B=self.B, meta=np.array(json.dumps(meta, sort_keys=True)))

    @classmethod
    def load(cls, path) -> "PseudoInverse":
        with np.load(path) as z:
            meta = json.loads(str(z["meta"]))
            return cls(z["B"], meta["lam"], meta["residual"], meta["tol"], meta["source_digest"])


@dataclass(frozen=True)
class EncoderOutput:
    """Encoded latent plus diagnostics.

    ``raw`` is the unthresholded ``B x / T`` for the linear encoder;
    ``sum_norm`` is ``||sum_i W[x_i]||`` for the log-linear encoder.
    """

    h_est: np.ndarray
    raw: np.ndarray | None = None
    tau: float | None = None
    sum_norm: float | None = None


def _as_dense(A) -> np.ndarray:
    if isinstance(A, GenreStructure):
        return movie_genre_matrix(A)
    return A.toarray() if sp.issparse(A) else np.asarray(A, dtype=np.float64)


def _deficient_column(A: np.ndarray):
    rank = 0
    for j in range(A.shape[1]):
        r = np.linalg.matrix_rank(A[:, : j + 1])
        if r == rank:
            return j
        rank = r
    return None


def _solve_row(G, counts, j, polish):
    """Minimise ``max |b_i|`` subject to ``A^T b = e_j`` on grouped rows.

    Movies with identical rows of ``A`` form a group ``g`` of size ``n_g``;
    only the group sum ``S_g`` enters the constraint, and spreading it evenly
    attains the smallest ``max |b_i|``, so the program is solved over
    ``(S, t)`` with ``|S_g| <= n_g t``.  With ``polish`` a second program
    minimises ``sum |S_g|`` (the ``l1`` norm of ``b``) over the optimal face.
    """
    n, k = G.shape
    e = np.zeros(k)
    e[j] = 1.0
    eye = sp.identity(n, format="csr")
    col = sp.csr_matrix(-counts.astype(np.float64).reshape(-1, 1))
    A_ub = sp.vstack([sp.hstack([eye, col]), sp.hstack([-eye, col])], format="csr")
    A_eq = sp.hstack([sp.csr_matrix(G.T), sp.csr_matrix((k, 1))], format="csr")
    c = np.zeros(n + 1)
    c[-1] = 1.0
    bounds = [(None, None)] * n + [(0, None)]
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(2 * n), A_eq=A_eq, b_eq=e, bounds=bounds,
                  method="highs", options=_HIGHS_OPTIONS)
    if res.status == 2:
        raise InfeasibleError(f"no b with A^T b = e_{j}; A is rank deficient", column=j)
    if res.status != 0:
        raise SolverError(f"row {j}: {res.message}")
    S = res.x[:n]
    t = float(res.x[-1])
    if polish:
        # S = Sp - Sm with 0 <= Sp, Sm <= n_g t
        cap = counts * t * (1.0 + 1e-12)
        A_eq2 = sp.hstack([sp.csr_matrix(G.T), -sp.csr_matrix(G.T)], format="csr")
        res2 = linprog(np.ones(2 * n), A_eq=A_eq2, b_eq=e,
                       bounds=list(zip(np.zeros(2 * n), np.concatenate([cap, cap]))),
                       method="highs", options=_HIGHS_OPTIONS)
        if res2.status == 0:
            S = res2.x[:n] - res2.x[n:]
    return S / counts, t


def low_variance_pseudoinverse(A, tol=1e-9, polish=True, n_jobs=1) -> PseudoInverse:
    """Left inverse of ``A`` with the smallest attainable ``max |B_ij|``.

    Each row ``b_j`` solves the linear program ``min ||b||_inf`` subject to
    ``A^T b = e_j`` (HiGHS).  The assembled ``B`` is then corrected by one
    least-squares step so that ``B A = I`` holds to rounding.

    Parameters
    ----------
    A : array-like, sparse matrix or GenreStructure
        ``M x k`` matrix of full column rank.
    tol : float
        Maximum accepted ``|(B A - I)_ij|``.
    polish : bool
        Break ties among optimal rows by minimal ``l1`` norm.
    n_jobs : int
        Rows are independent programs and may be solved concurrently.

    Raises
    ------
    InfeasibleError
        ``A`` is rank deficient; ``column`` names the first dependent column.
    SolverError
        The solver failed, or the final residual exceeds ``tol``.
    """
    digest = A.digest() if isinstance(A, GenreStructure) else None
    A = _as_dense(A)
    if A.ndim != 2:
        raise DimensionError("A must be a matrix")
    M, k = A.shape
    if M < k:
        raise InfeasibleError(f"A has more columns ({k}) than rows ({M})", column=M)
    G, inverse, counts = np.unique(A, axis=0, return_inverse=True, return_counts=True)
    inverse = np.asarray(inverse).ravel()
    if np.linalg.matrix_rank(G) < k:
        j = _deficient_column(G)
        raise InfeasibleError(f"A is rank deficient: column {j} depends on earlier columns", column=j)
    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            rows = list(pool.map(lambda j: _solve_row(G, counts, j, polish), range(k)))
    else:
        rows = [_solve_row(G, counts, j, polish) for j in range(k)]
    B = np.stack([r[0] for r in rows])[:, inverse]
    objectives = np.array([r[1] for r in rows])
    R = B @ A - np.eye(k)
    B = B - R @ np.linalg.solve(A.T @ A, A.T)
    residual = float(np.max(np.abs(B @ A - np.eye(k))))
    if residual > tol:
        raise SolverError(f"residual {residual:.3e} exceeds tol {tol:.1e}", best_residual=residual)
    B.setflags(write=False)
    return PseudoInverse(B, float(np.max(np.abs(B))), residual, float(tol), digest, objectives)


def threshold_map(z, tau) -> np.ndarray:
    """Keep entries ``>= tau``, zero the rest."""
    if tau < 0:
        raise DomainError("tau must be nonnegative")
    z = np.asarray(z, dtype=np.float64)
    return np.where(z >= tau, z, 0.0)


def linear_threshold(lam, k, T) -> float:
    """``2 lam sqrt(ln k / T)``."""
    if T <= 0:
        raise DomainError("T must be positive")
    return 2.0 * lam * np.sqrt(np.log(k) / T)


def linear_encode(pinv: PseudoInverse, x, T=None, k=None, tau=None) -> EncoderOutput:
    """``threshold_map(B x / T, 2 lam sqrt(ln k / T))`` for one count vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (pinv.M,):
        raise DimensionError(f"count vector has shape {x.shape}, expected ({pinv.M},)")
    if np.any(x < 0):
        raise DomainError("counts must be nonnegative")
    total = x.sum()
    T = total if T is None else T
    if T <= 0:
        raise DomainError("T must be positive")
    if abs(total - T) > 1e-9:
        raise DomainError(f"counts sum to {total}, not T={T}")
    k = pinv.k if k is None else k
    raw = pinv.B @ x / T
    tau = linear_threshold(pinv.lam, k, T) if tau is None else tau
    return EncoderOutput(threshold_map(raw, tau), raw=raw, tau=float(tau))


def loglinear_encode(W, sample) -> EncoderOutput:
    """Unit-normalised sum of the emitted movies' vectors."""
    Wm = W.W if isinstance(W, MovieVectors) else np.asarray(W, dtype=np.float64)
    ids = np.asarray(getattr(sample, "movie_ids", sample), dtype=np.int64)
    if ids.size == 0:
        raise DomainError("sample is empty")
    v = Wm[ids].sum(axis=0)
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise DegenerateSampleError("sum of movie vectors is zero")
    return EncoderOutput(v / n, sum_norm=n)


class ThresholdedPseudoInverseEncoder(TransformerMixin, BaseEstimator):
    """Encoder for the linear mixture model.

    ``fit`` takes the movie-genre matrix (or a :class:`GenreStructure`) and
    computes a low-variance pseudo-inverse; ``transform`` maps bag-of-words
    count rows to thresholded genre estimates.

    Parameters
    ----------
    threshold : 'auto' or float
        ``'auto'`` uses ``2 lam sqrt(ln k / T)`` per row, with ``T`` the row sum.
    tol : float
        Residual tolerance for the pseudo-inverse.
    polish : bool
        Minimal-``l1`` tie-breaking in the pseudo-inverse programs.
    n_jobs : int

    Attributes
    ----------
    pinv_ : PseudoInverse
    lambda_ : float
    n_genres_, n_movies_ : int
    """

    def __init__(self, threshold="auto", tol=1e-9, polish=True, n_jobs=1):
        self.threshold = threshold
        self.tol = tol
        self.polish = polish
        self.n_jobs = n_jobs

    def fit(self, A, y=None):
        self.pinv_ = low_variance_pseudoinverse(A, tol=self.tol, polish=self.polish, n_jobs=self.n_jobs)
        self.lambda_ = self.pinv_.lam
        self.n_genres_, self.n_movies_ = self.pinv_.B.shape
        return self

    def _counts(self, X):
        X = check_array(X, accept_sparse=("csr", "csc"), dtype=np.float64)
        if X.shape[1] != self.n_movies_:
            raise DimensionError(f"X has {X.shape[1]} columns, expected {self.n_movies_}")
        T = np.asarray(X.sum(axis=1)).ravel()
        if np.any(T <= 0):
            raise DomainError("every row needs at least one rating")
        return X, T

    def raw_transform(self, X):
        """Unthresholded ``B x / T`` for each row."""
        check_is_fitted(self, "pinv_")
        X, T = self._counts(X)
        return np.asarray(X @ self.pinv_.B.T) / T[:, None]

    def transform(self, X):
        raw = self.raw_transform(X)
        if self.threshold == "auto":
            T = np.asarray(check_array(X, accept_sparse=("csr", "csc")).sum(axis=1)).ravel()
            tau = 2.0 * self.lambda_ * np.sqrt(np.log(self.n_genres_) / T)[:, None]
        else:
            tau = float(self.threshold)
        return np.where(raw >= tau, raw, 0.0)


class NormalizedSumEncoder(TransformerMixin, BaseEstimator):
    """Encoder for the log-linear model: ``sum_i W[x_i] / ||sum_i W[x_i]||``.

    ``fit`` stores the movie vectors; ``transform`` accepts an ``n x M``
    count matrix (dense or sparse) and returns unit rows.
    """

    def fit(self, W, y=None):
        self.W_ = W.W if isinstance(W, MovieVectors) else check_array(W)
        self.n_movies_, self.n_features_out_ = self.W_.shape
        return self

    def transform(self, X):
        check_is_fitted(self, "W_")
        X = check_array(X, accept_sparse=("csr", "csc"), dtype=np.float64)
        if X.shape[1] != self.n_movies_:
            raise DimensionError(f"X has {X.shape[1]} columns, expected {self.n_movies_}")
        V = np.asarray(X @ self.W_)
        norms = np.linalg.norm(V, axis=1)
        if np.any(norms == 0):
            raise DegenerateSampleError("a row sums to the zero vector")
        return V / norms[:, None]


def measure_encoder(generator, encoder, n_trials, error_factor, norm="l1", rng=None) -> ValidityReport:
    """Estimate the probability that ``encoder`` is within ``error_factor``.

    ``generator(rng)`` returns ``(x, h)``; ``encoder(x)`` returns an array
    or :class:`EncoderOutput`.  Success means
    ``||f(x) - h|| <= error_factor * ||h||``.
    """
    if n_trials < 1:
        raise DomainError("n_trials must be positive")
    errors = np.empty(n_trials)
    for i in range(n_trials):
        x, h = generator(rng)
        out = encoder(x)
        est = out.h_est if isinstance(out, EncoderOutput) else out
        h = getattr(h, "values", h)
        errors[i] = norm_error(est, h, norm)
    n_ok = int(np.sum(errors <= error_factor))
    q = {pct: float(np.quantile(errors, pct / 100.0)) for pct in (50, 90, 99)}
    return ValidityReport(float(error_factor), n_ok / n_trials, norm, n_trials, n_ok, q, errors)


@dataclass(frozen=True)
class LogLinearConcentration:
    """Per-sample signal and off-axis statistics of ``sum_i W[x_i]``.

    ``signal[s] = sum_i <W[x_i], h>``; ``offaxis_max_sq[s]`` is the largest
    squared coordinate of the sum along an orthonormal completion of ``h``;
    ``ratio = offaxis_max_sq * d / signal**2``.
    """

    signal: np.ndarray
    offaxis_max_sq: np.ndarray
    ratio: np.ndarray
    T: np.ndarray

    @property
    def signal_mean(self) -> np.ndarray:
        return self.signal


def loglinear_concentration_report(W, samples, h) -> LogLinearConcentration:
    Wm = W.W if isinstance(W, MovieVectors) else np.asarray(W, dtype=np.float64)
    hv = np.asarray(getattr(h, "values", h), dtype=np.float64)
    U = orthonormal_completion(hv)
    signal, off, Ts = [], [], []
    for s in samples:
        ids = np.asarray(getattr(s, "movie_ids", s), dtype=np.int64)
        v = Wm[ids].sum(axis=0)
        signal.append(float(v @ hv))
        off.append(float(np.max((v @ U) ** 2)) if U.shape[1] else 0.0)
        Ts.append(ids.size)
    signal, off = np.array(signal), np.array(off)
    d = Wm.shape[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(signal != 0, off * d / signal**2, np.inf)
    return LogLinearConcentration(signal, off, ratio, np.array(Ts))
