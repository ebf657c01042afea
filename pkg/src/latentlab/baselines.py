"""Raw-space baselines: overlap neighbours, lookup tables, supervised overlap copying.

None of these read a user's latent state when predicting; latents appear
only as simulation-side bookkeeping (genre ids for histograms).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .core import LatentState, RatingSample, as_id_arrays
from .exceptions import DataInconsistencyError, DomainError, InsufficientDataError

__all__ = [
    "UserRecord",
    "overlap",
    "incidence_matrix",
    "pairwise_overlaps",
    "OverlapHistogram",
    "overlap_histogram",
    "knn_predict",
    "larget_thresholds",
    "LookupTableClassifier",
    "supervised_baseline",
    "SupervisedOverlapBaseline",
    "OverlapNeighborsClassifier",
    "accuracy_with_abstain",
]

ABSTAIN = None


@dataclass(frozen=True)
class UserRecord:
    sample: RatingSample
    latent: LatentState | None = None
    label: int | None = None


def _ids(x):
    if isinstance(x, UserRecord):
        x = x.sample
    return x.movie_ids if isinstance(x, RatingSample) else np.asarray(x, dtype=np.int64)


def _mode(x):
    if isinstance(x, UserRecord):
        x = x.sample
    return x.mode if isinstance(x, RatingSample) else "set"


def overlap(a, b) -> int:
    """Shared ratings: ``|a & b|`` for sets, ``sum min(count_a, count_b)`` for multisets."""
    ia, ib = _ids(a), _ids(b)
    if _mode(a) == "set" and _mode(b) == "set":
        return int(np.intersect1d(ia, ib, assume_unique=True).size)
    ca, cb = Counter(ia.tolist()), Counter(ib.tolist())
    return int(sum(min(n, cb[x]) for x, n in ca.items() if x in cb))


def incidence_matrix(samples, num_movies) -> sp.csr_matrix:
    """``n x M`` sparse count matrix of the samples."""
    ids = as_id_arrays([_ids(s) for s in samples])
    indptr = np.concatenate([[0], np.cumsum([a.size for a in ids])])
    cols = np.concatenate(ids) if ids else np.zeros(0, dtype=np.int64)
    X = sp.csr_matrix((np.ones(cols.size, dtype=np.int64), cols, indptr), shape=(len(ids), num_movies))
    X.sum_duplicates()
    return X


def pairwise_overlaps(samples, num_movies, mode="set") -> sp.csr_matrix:
    """All-pairs overlap counts as a sparse symmetric matrix (diagonal kept).

    Set mode is one sparse product. Multiset mode loops over pairs that share
    at least one movie.
    """
    X = incidence_matrix(samples, num_movies)
    if mode == "set":
        if X.nnz and X.data.max() > 1:
            raise DomainError("set-mode samples contain repeated ids")
        return (X @ X.T).tocsr()
    B = X.copy()
    B.data[:] = 1
    cand = (B @ B.T).tocoo()
    rows, cols, vals = [], [], []
    for i, j in zip(cand.row, cand.col):
        a, b = X.getrow(i), X.getrow(j)
        common = np.intersect1d(a.indices, b.indices)
        v = int(np.minimum(a[:, common].toarray(), b[:, common].toarray()).sum())
        rows.append(i)
        cols.append(j)
        vals.append(v)
    return sp.csr_matrix((vals, (rows, cols)), shape=cand.shape)


@dataclass(frozen=True)
class OverlapHistogram:
    """Overlap pmfs of same-genre and different-genre pairs.

    ``ratio[tau]`` estimates ``Pr[diff | O >= tau] / Pr[same | O >= tau]``
    under a uniform genre prior, i.e. ``(k-1) P_diff(O>=tau) / P_same(O>=tau)``.
    """

    pmf_same: np.ndarray
    pmf_diff: np.ndarray
    n_same: int
    n_diff: int
    k: int

    def tail_same(self, tau) -> float:
        return float(self.pmf_same[tau:].sum())

    def tail_diff(self, tau) -> float:
        return float(self.pmf_diff[tau:].sum())

    def ratio(self, tau) -> float:
        ps = self.tail_same(tau)
        if ps == 0:
            return math.inf
        return (self.k - 1) * self.tail_diff(tau) / ps


def overlap_histogram(samples, genres, num_movies, k, pair_budget=None, rng=None, T=None) -> OverlapHistogram:
    """Conditional overlap distributions for same- and different-genre pairs.

    ``genres[i]`` is user ``i``'s (single) genre.  When ``pair_budget`` is
    ``None`` or covers every pair, all pairs are scanned; otherwise
    ``pair_budget`` same-genre and ``pair_budget`` different-genre pairs are
    drawn uniformly with ``rng``.
    """
    n = len(samples)
    if n < 2:
        raise InsufficientDataError("need at least two users")
    genres = np.asarray(genres)
    T = max(_ids(s).size for s in samples) if T is None else T
    total_pairs = n * (n - 1) // 2
    if pair_budget is None or pair_budget >= total_pairs:
        O = pairwise_overlaps(samples, num_movies, "set" if all(_mode(s) == "set" for s in samples) else "multiset")
        iu, ju = np.triu_indices(n, 1)
        vals = np.asarray(O[iu, ju]).ravel()
        same = genres[iu] == genres[ju]
        ov_same, ov_diff = vals[same], vals[~same]
    else:
        if rng is None:
            raise DomainError("sampling pairs needs an rng")
        ov_same, ov_diff = _sample_pairs(samples, genres, pair_budget, rng)
    ov_same = np.asarray(ov_same, dtype=np.int64)
    ov_diff = np.asarray(ov_diff, dtype=np.int64)
    if ov_same.size == 0 or ov_diff.size == 0:
        raise InsufficientDataError("no same-genre or no different-genre pairs")
    pmf_same = np.bincount(ov_same, minlength=T + 1)[: T + 1] / ov_same.size
    pmf_diff = np.bincount(ov_diff, minlength=T + 1)[: T + 1] / ov_diff.size
    return OverlapHistogram(pmf_same, pmf_diff, int(ov_same.size), int(ov_diff.size), int(k))


def _sample_pairs(samples, genres, budget, rng):
    by_genre: dict = {}
    for i, g in enumerate(genres.tolist()):
        by_genre.setdefault(g, []).append(i)
    pools = [np.array(v) for v in by_genre.values() if len(v) >= 2]
    if not pools:
        raise InsufficientDataError("no genre has two users")
    n = len(samples)
    same, diff = [], []
    sizes = np.array([p.size for p in pools], dtype=np.float64)
    weights = sizes * (sizes - 1)
    weights /= weights.sum()
    for _ in range(budget):
        pool = pools[rng.choice(len(pools), p=weights)]
        i, j = rng.choice(pool, size=2, replace=False)
        same.append(overlap(samples[i], samples[j]))
    tries = 0
    while len(diff) < budget:
        i, j = rng.choice(n, size=2, replace=False)
        tries += 1
        if genres[i] != genres[j]:
            diff.append(overlap(samples[i], samples[j]))
        elif tries > 100 * budget:
            raise InsufficientDataError("too few different-genre pairs")
    return same, diff


def _vote(labels):
    """Majority label; ties resolve to ``ABSTAIN``."""
    if not labels:
        return ABSTAIN
    counts = Counter(labels).most_common()
    if len(counts) > 1 and counts[0][1] == counts[1][1]:
        return ABSTAIN
    return counts[0][0]


def knn_predict(train, query, tau, task="genre-label", movie=None):
    """Overlap-threshold neighbour prediction.

    Neighbours are train records sharing at least ``tau`` ratings with the
    query.  ``task='movie'`` predicts 1 iff some neighbour rated ``movie``;
    ``task='genre-label'`` takes the neighbours' majority label.  With no
    neighbours, or a tied vote, the result is ``ABSTAIN`` (``None``).
    """
    if tau < 1:
        raise DomainError("tau must be at least 1")
    neigh = [r for r in train if overlap(r, query) >= tau]
    if not neigh:
        return ABSTAIN
    if task == "movie":
        if movie is None:
            raise DomainError("task 'movie' needs a movie id")
        return int(any(np.any(_ids(r) == movie) for r in neigh))
    if task == "genre-label":
        return _vote([r.label for r in neigh])
    raise DomainError(f"unknown task {task!r}")


def larget_thresholds(s, T, m) -> tuple[float, float]:
    """``((1/s - 1/s^2) T^2/m, (1/s) T^2/m)``: cross-set cap and same-set floor."""
    if s < 1 or m < 1:
        raise DomainError("need s >= 1 and m >= 1")
    base = T * T / m
    return (1.0 / s - 1.0 / (s * s)) * base, base / s


class OverlapNeighborsClassifier(ClassifierMixin, BaseEstimator):
    """Vectorised :func:`knn_predict` over a batch of queries.

    ``fit(X, y)`` stores an ``n x M`` incidence matrix (or list of samples
    with ``num_movies``); ``predict`` votes among train rows with overlap
    ``>= tau``.  Abstentions are reported as ``abstain_value``.
    """

    def __init__(self, tau=1, num_movies=None, abstain_value=0):
        self.tau = tau
        self.num_movies = num_movies
        self.abstain_value = abstain_value

    def _matrix(self, X):
        if sp.issparse(X):
            return X.tocsr()
        if self.num_movies is None:
            raise DomainError("num_movies is required for sample lists")
        return incidence_matrix(X, self.num_movies)

    def fit(self, X, y=None):
        if self.tau < 1:
            raise DomainError("tau must be at least 1")
        self.X_ = self._matrix(X)
        self.y_ = None if y is None else np.asarray(y)
        return self

    def neighbors(self, X) -> sp.csr_matrix:
        check_is_fitted(self, "X_")
        O = (self._matrix(X) @ self.X_.T).tocsr()
        O.data = (O.data >= self.tau).astype(np.int8)
        O.eliminate_zeros()
        return O

    def predict(self, X):
        if self.y_ is None:
            raise DomainError("fit without labels supports only predict_movie")
        N = self.neighbors(X)
        labels = np.unique(self.y_)
        votes = np.column_stack([np.asarray(N @ (self.y_ == c).astype(np.int64)).ravel() for c in labels])
        srt = np.sort(votes, axis=1)
        tie = srt[:, -1] == 0
        if srt.shape[1] > 1:
            tie |= srt[:, -1] == srt[:, -2]
        return np.where(tie, self.abstain_value, labels[np.argmax(votes, axis=1)])

    def predict_movie(self, X, movies):
        """1 if some neighbour rated ``movies[i]``, 0 if none did, abstain without neighbours."""
        N = self.neighbors(X)
        movies = np.asarray(movies, dtype=np.int64)
        Xc = self.X_.tocsc()
        out = np.empty(N.shape[0], dtype=np.int64)
        for i in range(N.shape[0]):
            nb = N.indices[N.indptr[i]:N.indptr[i + 1]]
            if nb.size == 0:
                out[i] = self.abstain_value
                continue
            raters = Xc.indices[Xc.indptr[movies[i]]:Xc.indptr[movies[i] + 1]]
            out[i] = int(np.intersect1d(nb, raters).size > 0)
        return out


class LookupTableClassifier(ClassifierMixin, BaseEstimator):
    """Exact-match table from binary latents to labels.

    ``predict`` returns the stored label on a hit and ``abstain_value`` on a
    miss.  Conflicting labels for one latent raise
    :class:`DataInconsistencyError`.
    """

    def __init__(self, abstain_value=0):
        self.abstain_value = abstain_value

    @staticmethod
    def _key(h):
        h = np.asarray(getattr(h, "values", h))
        return tuple(np.flatnonzero(h).tolist())

    def fit(self, H, y):
        table = {}
        for h, label in zip(H, y):
            key = self._key(h)
            if key in table and table[key] != label:
                raise DataInconsistencyError(f"latent {key} seen with labels {table[key]} and {label}")
            table[key] = label
        self.table_ = table
        return self

    def predict(self, H):
        check_is_fitted(self, "table_")
        return np.array([self.table_.get(self._key(h), self.abstain_value) for h in H])

    def coverage(self, k, s) -> float:
        """Fraction of the ``C(k, s)`` latents present in the table."""
        check_is_fitted(self, "table_")
        n = sum(1 for key in self.table_ if len(key) == s)
        return n / math.comb(k, s)


def supervised_baseline(train, labels, query):
    """Copy the majority label of train users sharing a movie with the query.

    Without any overlap, or on a tied vote, the global majority train label
    is returned (ties there go to the smaller label).
    """
    if len(train) == 0:
        raise InsufficientDataError("empty train set")
    q = set(_ids(query).tolist())
    hits = [lab for s, lab in zip(train, labels) if q.intersection(_ids(s).tolist())]
    glob = _global_majority(labels)
    vote = _vote(hits)
    return glob if vote is ABSTAIN else vote


def _global_majority(labels):
    counts = Counter(labels)
    best = max(counts.values())
    return min(lab for lab, c in counts.items() if c == best)


class SupervisedOverlapBaseline(ClassifierMixin, BaseEstimator):
    """Batch version of :func:`supervised_baseline` using an inverted index."""

    def fit(self, X, y):
        samples = list(X)
        if not samples:
            raise InsufficientDataError("empty train set")
        y = list(y)
        index: dict = {}
        for i, s in enumerate(samples):
            for x in set(_ids(s).tolist()):
                index.setdefault(x, []).append(i)
        self.index_ = index
        self.labels_ = y
        self.majority_ = _global_majority(y)
        return self

    def predict(self, X):
        check_is_fitted(self, "index_")
        out = []
        for q in X:
            users = set()
            for x in set(_ids(q).tolist()):
                users.update(self.index_.get(x, ()))
            vote = _vote([self.labels_[i] for i in sorted(users)])
            out.append(self.majority_ if vote is ABSTAIN else vote)
        return np.array(out)


def accuracy_with_abstain(pred, truth) -> float:
    """Accuracy where ``None`` (abstain) counts as an error."""
    pred = list(pred)
    truth = list(truth)
    if len(pred) != len(truth) or not truth:
        raise DomainError("need equal, nonempty prediction and truth lists")
    return sum(p is not None and p == t for p, t in zip(pred, truth)) / len(truth)
