"""Neighbour graphs, block-model samplers and distinguishing statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, eigsh

from .baselines import incidence_matrix
from .core import GenreStructure, derive_stream
from .exceptions import DomainError, InsufficientDataError, RegimeError

__all__ = [
    "SimpleGraph",
    "BlockParams",
    "nn_graph",
    "block_params",
    "ContiguityCheck",
    "contiguity_condition",
    "sbm_sample",
    "er_sample",
    "GSBMReport",
    "verify_gsbm_bounds",
    "degree_variance",
    "triangle_count",
    "top_centered_eigenvalue",
    "STATISTICS",
    "auc",
    "DistinguishResult",
    "distinguish",
]


@dataclass(frozen=True, eq=False)
class SimpleGraph:
    """Undirected simple graph on ``N`` vertices.

    ``edges`` is an ``E x 2`` int array with ``u < v`` in each row, sorted
    lexicographically.  ``communities`` is optional.
    """

    N: int
    edges: np.ndarray
    communities: np.ndarray | None = None

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if e.size:
            if np.any(e[:, 0] == e[:, 1]):
                raise DomainError("self-loops are not allowed")
            if e.min() < 0 or e.max() >= self.N:
                raise DomainError("edge endpoint out of range")
            e = np.sort(e, axis=1)
            e = np.unique(e, axis=0)
        e.setflags(write=False)
        object.__setattr__(self, "edges", e)
        if self.communities is not None:
            c = np.array(self.communities, dtype=np.int64)
            c.setflags(write=False)
            object.__setattr__(self, "communities", c)

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    def adjacency(self) -> sp.csr_matrix:
        u, v = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * u.size)
        return sp.csr_matrix((data, (np.concatenate([u, v]), np.concatenate([v, u]))), shape=(self.N, self.N))

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.N)

    def to_edge_list(self) -> str:
        """One ``"u v"`` line per edge, sorted."""
        return "".join(f"{u} {v}\n" for u, v in self.edges.tolist())

    def write_edge_list(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_edge_list())


def _from_upper(N, mask_rows, mask_cols, communities=None) -> SimpleGraph:
    return SimpleGraph(N, np.column_stack([mask_rows, mask_cols]), communities)


def nn_graph(samples, tau, num_movies=None) -> SimpleGraph:
    """Edge between two users iff they share at least ``tau`` ratings."""
    if tau < 1:
        raise DomainError("tau must be at least 1")
    samples = list(samples)
    if num_movies is None:
        num_movies = 1 + max(int(np.max(getattr(s, "movie_ids", s))) for s in samples)
    X = incidence_matrix(samples, num_movies)
    X.data = np.ones_like(X.data)
    O = sp.triu(X @ X.T, k=1).tocoo()
    keep = O.data >= tau
    return _from_upper(len(samples), O.row[keep], O.col[keep])


@dataclass(frozen=True)
class BlockParams:
    a: float
    b: float
    phi: float
    k: int
    N: int

    def __post_init__(self):
        if not (0 <= self.b <= self.a <= 1):
            raise DomainError(f"need 0 <= b <= a <= 1, got a={self.a}, b={self.b}")
        if abs(self.phi - (self.a + (self.k - 1) * self.b) / self.k) > 1e-12:
            raise DomainError("phi must equal (a + (k-1) b) / k")

    @classmethod
    def from_ab(cls, a, b, k, N) -> "BlockParams":
        return cls(float(a), float(b), (a + (k - 1) * b) / k, int(k), int(N))


def block_params(T, m, tau, p, k, N) -> BlockParams:
    """``a = tau r^tau``, ``b = (p/2)^tau r^tau / 2`` with ``r = T^2/m``."""
    r = T * T / m
    if r >= 1:
        raise RegimeError(f"T^2/m = {r} must be below 1")
    if not 0 < p < 1:
        raise DomainError("p must lie in (0, 1)")
    a = tau * r**tau
    b = 0.5 * (p / 2.0) ** tau * r**tau
    return BlockParams.from_ab(a, b, k, N)


@dataclass(frozen=True)
class ContiguityCheck:
    holds: bool
    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        """``rhs / lhs``; above 1 when the condition holds."""
        return math.inf if self.lhs == 0 else self.rhs / self.lhs


def contiguity_condition(params: BlockParams) -> ContiguityCheck:
    """``N (a - b)^2 <= (a + (k-1) b) ln k``."""
    if params.k < 2:
        raise DomainError("need k >= 2")
    lhs = params.N * (params.a - params.b) ** 2
    rhs = (params.a + (params.k - 1) * params.b) * math.log(params.k)
    return ContiguityCheck(lhs <= rhs, lhs, rhs)


def _check_prob(*ps):
    for q in ps:
        if not 0 <= q <= 1:
            raise DomainError(f"probability {q} outside [0, 1]")


def sbm_sample(N, k, q_in, q_out, rng) -> SimpleGraph:
    """Stochastic block model with uniform community assignment."""
    _check_prob(q_in, q_out)
    comm = rng.integers(0, k, size=N)
    iu, ju = np.triu_indices(N, 1)
    prob = np.where(comm[iu] == comm[ju], q_in, q_out)
    keep = rng.random(iu.size) < prob
    return _from_upper(N, iu[keep], ju[keep], comm)


def er_sample(N, phi, rng) -> SimpleGraph:
    """Erdos-Renyi graph with edge probability ``phi``."""
    _check_prob(phi)
    iu, ju = np.triu_indices(N, 1)
    keep = rng.random(iu.size) < phi
    return _from_upper(N, iu[keep], ju[keep])


@dataclass(frozen=True)
class GSBMReport:
    max_in_prob: float
    min_out_prob: float
    a: float
    b: float
    sigma_in: float
    sigma_out: float
    n_conforming: int
    conforms: bool


def verify_gsbm_bounds(samples, genres, structure: GenreStructure, tau, params: BlockParams,
                       min_pairs=100, per_block_min=30) -> GSBMReport:
    """Empirical within/cross edge frequencies of the neighbour graph.

    Only users whose core count lies in ``pT +- sqrt(pT) ln m`` take part.
    ``max_in_prob`` is the largest per-genre within frequency and
    ``min_out_prob`` the smallest per-genre-pair cross frequency (blocks
    with fewer than ``per_block_min`` pairs are skipped).  Conformance allows
    3 binomial standard deviations at the bound.
    """
    if structure.variant != "shared-core":
        raise DomainError("verify_gsbm_bounds needs a shared-core structure")
    samples = list(samples)
    genres = np.asarray(genres)
    m, p = structure.m, float(structure.param)
    core = np.asarray(sorted(set.intersection(*[set(g.tolist()) for g in structure.genres])), dtype=np.int64)
    T = np.array([np.asarray(getattr(s, "movie_ids", s)).size for s in samples])
    counts = np.array([np.isin(np.asarray(getattr(s, "movie_ids", s)), core).sum() for s in samples])
    half = np.sqrt(p * T) * np.log(m)
    ok = np.abs(counts - p * T) <= half
    idx = np.flatnonzero(ok)
    n = idx.size
    if n * (n - 1) // 2 < min_pairs:
        raise InsufficientDataError(f"only {n} conforming users")
    X = incidence_matrix([samples[i] for i in idx], structure.num_movies)
    X.data = np.ones_like(X.data)
    A = (X @ X.T).toarray() >= tau
    g = genres[idx]
    k = structure.k
    onehot = np.zeros((n, k))
    onehot[np.arange(n), g] = 1.0
    np.fill_diagonal(A, False)
    edges = onehot.T @ A.astype(np.float64) @ onehot
    sizes = onehot.sum(axis=0)
    pairs = np.outer(sizes, sizes)
    np.fill_diagonal(pairs, sizes * (sizes - 1))
    # diagonal of `edges` counts ordered pairs, matching `pairs`
    freq = np.divide(edges, pairs, out=np.full((k, k), np.nan), where=pairs >= per_block_min)
    diag = np.diag(freq)
    off = freq[~np.eye(k, dtype=bool)]
    if np.all(np.isnan(diag)) or np.all(np.isnan(off)):
        raise InsufficientDataError("no block has enough pairs")
    max_in = float(np.nanmax(diag))
    min_out = float(np.nanmin(off))
    n_in = float(np.min(pairs[np.diag_indices(k)][~np.isnan(diag)])) / 2
    n_out = float(np.min(pairs[~np.eye(k, dtype=bool)][~np.isnan(off)]))
    s_in = math.sqrt(params.a * (1 - params.a) / n_in)
    s_out = math.sqrt(params.b * (1 - params.b) / n_out)
    conforms = max_in <= params.a + 3 * s_in and min_out >= params.b - 3 * s_out
    return GSBMReport(max_in, min_out, params.a, params.b, s_in, s_out, int(n), bool(conforms))


def degree_variance(g: SimpleGraph) -> float:
    return float(np.var(g.degrees()))


def triangle_count(g: SimpleGraph) -> int:
    A = g.adjacency()
    return int(round((A @ A).multiply(A).sum() / 6.0))


def top_centered_eigenvalue(g: SimpleGraph, dense_limit=1000) -> float:
    """Largest eigenvalue of ``A - q 11^T`` with ``q`` the mean edge density.

    Dense ``eigvalsh`` up to ``dense_limit`` vertices, Lanczos above.
    """
    N = g.N
    if N < 2:
        return 0.0
    q = 2.0 * g.n_edges / (N * (N - 1))
    A = g.adjacency()
    if N <= dense_limit:
        return float(np.linalg.eigvalsh(A.toarray() - q)[-1])
    op = LinearOperator((N, N), matvec=lambda x: A @ x - q * x.sum(), dtype=np.float64)
    v0 = np.ones(N) / math.sqrt(N) + np.arange(N) / N**2
    return float(eigsh(op, k=1, which="LA", tol=1e-10, v0=v0, return_eigenvectors=False)[0])


STATISTICS = {
    "degree_variance": degree_variance,
    "triangle_count": triangle_count,
    "top_eigenvalue": top_centered_eigenvalue,
}


def auc(scores_a, scores_b) -> float:
    """``P(S_a > S_b) + P(S_a = S_b) / 2`` over all cross pairs."""
    a = np.asarray(scores_a, dtype=np.float64)[:, None]
    b = np.asarray(scores_b, dtype=np.float64)[None, :]
    return float(np.mean(a > b) + 0.5 * np.mean(a == b))


@dataclass(frozen=True)
class DistinguishResult:
    auc: dict
    combined_auc: float
    best_statistic: str
    n_graphs: int


def distinguish(model_a, model_b, n_graphs, statistics=None, seed=0, min_graphs=50, mapper=None) -> DistinguishResult:
    """AUC of thresholding each statistic to tell two graph models apart.

    ``model_a`` and ``model_b`` map an rng to a :class:`SimpleGraph`.  Graph
    ``i`` of model A uses stream ``2i`` and of model B stream ``2i+1``.
    ``combined_auc`` is the best single statistic's ``max(auc, 1 - auc)``.
    ``mapper(fn, n)`` may evaluate ``fn(0..n-1)`` concurrently; it must
    return results in index order.
    """
    if n_graphs < min_graphs:
        raise DomainError(f"need n_graphs >= {min_graphs}")
    names = list(STATISTICS) if statistics is None else list(statistics)
    mapper = mapper or (lambda fn, n: [fn(i) for i in range(n)])

    def one(i):
        model = model_a if i % 2 == 0 else model_b
        g = model(derive_stream(seed, i))
        return [STATISTICS[n](g) for n in names]

    stats = np.array(mapper(one, 2 * n_graphs), dtype=np.float64)
    aucs = {n: auc(stats[0::2, c], stats[1::2, c]) for c, n in enumerate(names)}
    best = max(names, key=lambda n: max(aucs[n], 1 - aucs[n]))
    return DistinguishResult(aucs, max(aucs[best], 1 - aucs[best]), best, int(n_graphs))
