"""Linear mixture (genre/topic) generative model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .core import GenreStructure, LatentState, RatingSample
from .exceptions import ConstructionError, DomainError, TieError

__all__ = [
    "MixtureModel",
    "make_structure",
    "sample_user",
    "sample_mixing",
    "emit",
    "emit_batch",
    "movie_genre_matrix",
    "label_hyperplane",
    "label_likes_movie",
    "balanced_hyperplane",
]

EMISSION_MODES = ("without-replacement", "independent")


@dataclass(frozen=True)
class MixtureModel:
    """A genre structure plus per-user sparsity ``s`` and sample length ``T``."""

    structure: GenreStructure
    s: int
    T: int
    emission_mode: str = "without-replacement"

    def __post_init__(self):
        if self.emission_mode not in EMISSION_MODES:
            raise DomainError(f"unknown emission mode {self.emission_mode!r}")
        if not 1 <= self.s <= self.structure.k:
            raise DomainError(f"need 1 <= s <= k, got s={self.s}, k={self.structure.k}")
        if self.T < 1:
            raise DomainError("T must be positive")
        if self.emission_mode == "without-replacement" and self.s * self.structure.m < self.T:
            raise DomainError("s*m < T: not enough movies to emit without replacement")

    @property
    def replacement_mode(self) -> str:
        return "set" if self.emission_mode == "without-replacement" else "multiset"


def make_structure(variant, *, k, rng, m=None, M=None, p=None, delta=None, max_attempts=1000):
    """Build a random :class:`GenreStructure`.

    ``shared-core`` needs ``m, k, p`` and sets ``M = round(p m) + k (m - round(p m))``;
    ``disjoint-partition`` needs ``M, k`` (``m = M / k``) and assigns movies by a
    uniform random partition; ``bounded-overlap`` needs ``M, m, k, delta``.

    Movie ids are randomly relabelled in every variant.
    """
    if k < 1:
        raise DomainError("k must be positive")
    if variant == "shared-core":
        if m is None or p is None:
            raise DomainError("shared-core needs m and p")
        if not 0 <= p <= 1:
            raise DomainError("p must lie in [0, 1]")
        core = int(round(p * m))
        n_movies = core + k * (m - core)
        if M is not None and M != n_movies:
            raise DomainError(f"shared-core with these parameters has M={n_movies}, not {M}")
        perm = rng.permutation(n_movies)
        core_ids = perm[:core]
        uniq = perm[core:].reshape(k, m - core)
        genres = tuple(np.concatenate([core_ids, uniq[j]]) for j in range(k))
        return GenreStructure(n_movies, genres, variant, float(p))

    if variant == "disjoint-partition":
        if M is None:
            if m is None:
                raise DomainError("disjoint-partition needs M (or m)")
            M = k * m
        if M % k:
            raise DomainError(f"M={M} is not divisible by k={k}")
        perm = rng.permutation(M).reshape(k, M // k)
        return GenreStructure(M, tuple(perm), variant, None)

    if variant == "bounded-overlap":
        if None in (M, m, delta):
            raise DomainError("bounded-overlap needs M, m and delta")
        if m > M:
            raise DomainError("m exceeds M")
        genres = _bounded_overlap(M, m, k, delta, rng, max_attempts)
        return GenreStructure(M, tuple(genres), variant, float(delta))

    raise DomainError(f"unknown variant {variant!r}")


def _bounded_overlap(M, m, k, delta, rng, max_attempts):
    cap = int(np.floor(delta * m + 1e-9))
    for _ in range(max_attempts):
        owners = [[] for _ in range(M)]  # genres containing each movie
        genres = []
        ok = True
        for j in range(k):
            inter = np.zeros(j, dtype=np.int64)
            members = []
            for x in rng.permutation(M):
                own = owners[x]
                if own and np.any(inter[own] >= cap):
                    continue
                members.append(x)
                if own:
                    inter[own] += 1
                if len(members) == m:
                    break
            if len(members) < m:
                ok = False
                break
            for x in members:
                owners[x].append(j)
            genres.append(np.array(members, dtype=np.int64))
        if ok:
            return genres
    raise ConstructionError(
        f"could not place {k} genres of size {m} in {M} movies with overlap <= {cap} "
        f"after {max_attempts} attempts"
    )


def sample_user(k, s, rng) -> LatentState:
    """Uniformly random ``s``-subset of the ``k`` genres as a 0/1 latent."""
    if not 1 <= s <= k:
        raise DomainError(f"need 1 <= s <= k, got s={s}, k={k}")
    h = np.zeros(k)
    h[rng.choice(k, size=s, replace=False)] = 1.0
    return LatentState("binary", h)


def sample_mixing(user: LatentState, rng, alpha=1.0) -> LatentState:
    """Dirichlet(``alpha``) mixing weights on the user's liked genres."""
    support = user.support
    w = np.zeros(user.values.size)
    w[support] = rng.dirichlet(np.full(support.size, float(alpha)))
    w /= w.sum()
    return LatentState("simplex", w)


def _weights(user: LatentState) -> tuple[np.ndarray, np.ndarray]:
    simplex = user.as_simplex() if user.kind == "binary" else user
    support = simplex.support
    return support, simplex.values[support]


def emit(model: MixtureModel, user: LatentState, rng) -> RatingSample:
    """Draw one user's ``T`` ratings.

    Without replacement: a uniform ``T``-subset of the union of liked genres.
    Independent: ``T`` i.i.d. draws from ``A @ h_simplex``, realised as a
    genre draw by weight followed by a uniform movie within that genre.
    """
    st = model.structure
    support, weights = _weights(user)
    if support.size == 0:
        raise DomainError("user likes no genre")
    if model.emission_mode == "without-replacement":
        pool = st.union(support)
        if pool.size < model.T:
            raise DomainError(f"T={model.T} exceeds union size {pool.size}")
        ids = rng.choice(pool, size=model.T, replace=False)
    else:
        picks = rng.choice(support.size, size=model.T, p=weights)
        idx = rng.integers(0, st.m, size=model.T)
        genre_table = np.stack([st.genres[j] for j in support])
        ids = genre_table[picks, idx]
    return RatingSample(ids, st.num_movies, model.replacement_mode)


def emit_batch(model: MixtureModel, users, rng, chunk_cells=4_000_000) -> list[np.ndarray]:
    """Emit for many users at once; returns one id array per user.

    Single-genre users take a vectorised path. The result has the same
    distribution as calling :func:`emit` per user but not the same draws.
    """
    users = list(users)
    st = model.structure
    if not users:
        return []
    single = all(u.kind == "binary" and u.sparsity == 1 for u in users)
    if not single:
        return [emit(model, u, rng).movie_ids for u in users]
    table = np.stack(st.genres)
    genre = np.array([int(u.support[0]) for u in users], dtype=np.int64)
    n, m, T = genre.size, st.m, model.T
    out = np.empty((n, T), dtype=np.int64)
    if model.emission_mode == "without-replacement":
        if T > m:
            raise DomainError(f"T={T} exceeds genre size {m}")
        if T * T <= m:
            # distinct ordered draws are a uniform subset; redraw rows with repeats
            pos = rng.integers(0, m, size=(n, T))
            bad = _has_repeat(pos)
            while bad.any():
                pos[bad] = rng.integers(0, m, size=(int(bad.sum()), T))
                bad[bad] = _has_repeat(pos[bad])
            out[:] = table[genre[:, None], pos]
            return list(out)
        step = max(1, chunk_cells // m)
        for lo in range(0, n, step):
            hi = min(n, lo + step)
            keys = rng.random((hi - lo, m))
            pos = np.argpartition(keys, T - 1, axis=1)[:, :T] if T < m else np.argsort(keys, axis=1)
            out[lo:hi] = table[genre[lo:hi, None], pos]
    else:
        pos = rng.integers(0, m, size=(n, T))
        out[:] = table[genre[:, None], pos]
    return list(out)


def _has_repeat(pos):
    s = np.sort(pos, axis=1)
    return np.any(s[:, 1:] == s[:, :-1], axis=1)


def movie_genre_matrix(structure: GenreStructure, sparse=False):
    """``M x k`` matrix whose column ``j`` is uniform ``1/m`` on genre ``j``."""
    rows = np.concatenate(structure.genres)
    cols = np.repeat(np.arange(structure.k), structure.m)
    vals = np.full(rows.size, 1.0 / structure.m)
    A = sp.csc_matrix((vals, (rows, cols)), shape=(structure.num_movies, structure.k))
    return A if sparse else A.toarray()


def label_hyperplane(w, h) -> int:
    """``sign(<w, 2h - 1>)`` as ``+1``/``-1``; raises :class:`TieError` at zero."""
    hv = h.values if isinstance(h, LatentState) else np.asarray(h, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if w.shape != hv.shape:
        raise DomainError("w and h must have the same length")
    v = float(np.dot(w, 2.0 * hv - 1.0))
    if v == 0.0:
        raise TieError("<w, 2h-1> is exactly zero; resample w")
    return 1 if v > 0 else -1


def label_likes_movie(structure: GenreStructure, h, movie_id) -> int:
    """1 iff ``movie_id`` belongs to one of the genres liked in ``h``."""
    if not 0 <= movie_id < structure.num_movies:
        raise DomainError(f"movie id {movie_id} out of range")
    hv = h.values if isinstance(h, LatentState) else np.asarray(h)
    for j in np.flatnonzero(hv):
        g = structure.genres[j]
        i = np.searchsorted(g, movie_id)
        if i < g.size and g[i] == movie_id:
            return 1
    return 0


def balanced_hyperplane(k, s, rng) -> np.ndarray:
    """Random ``w`` whose label is +1 on exactly half of the latents.

    Supported for ``s = 1`` (even ``k``), where the label of genre ``j`` is
    ``sign(2 w_j - sum(w))``, and for ``2 s = k`` where any ``w`` is
    balanced because complementing ``h`` flips the sign.
    """
    v = rng.standard_normal(k)
    if 2 * s == k:
        return v
    if s != 1 or k % 2 or k < 4:
        raise DomainError("balanced hyperplanes are built for s=1 with even k >= 4, or s=k/2")
    srt = np.sort(v)
    theta = 0.5 * (srt[k // 2 - 1] + srt[k // 2])
    # shift every coordinate by c so that sum(w)/2 falls at theta + c
    c = (theta - v.sum() / 2.0) / (k / 2.0 - 1.0)
    return v + c
