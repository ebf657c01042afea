"""Shared domain types, norms, validity accounting and random streams."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .exceptions import DimensionError, DomainError

__all__ = [
    "GenreStructure",
    "LatentState",
    "RatingSample",
    "ValidityReport",
    "norm_error",
    "lipschitz_transfer_bound",
    "derive_stream",
]

Norm = Literal["l1", "l2"]
VARIANTS = ("shared-core", "disjoint-partition", "bounded-overlap")

_UINT64 = (1 << 64) - 1


def derive_stream(master_seed: int, stream_id: int) -> np.random.Generator:
    """Return an independent random generator for ``(master_seed, stream_id)``.

    Equal pairs always produce identical sequences; distinct ``stream_id``
    values give statistically independent streams (numpy ``SeedSequence``
    spawn keys), so a stream's output never depends on which thread, or in
    which order, it is consumed.
    """
    seq = np.random.SeedSequence(
        entropy=int(master_seed) & _UINT64, spawn_key=(int(stream_id) & _UINT64,)
    )
    return np.random.Generator(np.random.PCG64(seq))


def _norm(v: np.ndarray, norm: str) -> float:
    if norm == "l1":
        return float(np.sum(np.abs(v)))
    if norm == "l2":
        return float(np.linalg.norm(v))
    raise DomainError(f"unknown norm {norm!r}; expected 'l1' or 'l2'")


def norm_error(h_est, h_true, norm: Norm = "l1") -> float:
    """Relative error ``||h_est - h_true|| / ||h_true||`` in the given norm."""
    h_est = np.asarray(h_est, dtype=np.float64)
    h_true = np.asarray(h_true, dtype=np.float64)
    if h_est.shape != h_true.shape:
        raise DimensionError(f"length mismatch: {h_est.shape} vs {h_true.shape}")
    denom = _norm(h_true, norm)
    if denom == 0.0:
        raise DomainError("reference vector has zero norm")
    return _norm(h_est - h_true, norm) / denom


def lipschitz_transfer_bound(alpha: float, error_factor: float, h_norm: float) -> float:
    """Sup-norm deviation of an ``alpha``-Lipschitz classifier fed an encoder output.

    If ``||f(x) - h|| <= error_factor * ||h||`` then
    ``||C(f(x)) - C(h)||_inf <= error_factor * alpha * ||h||``.
    """
    for name, val in (("alpha", alpha), ("error_factor", error_factor), ("h_norm", h_norm)):
        if val < 0:
            raise DomainError(f"{name} must be nonnegative, got {val}")
    return float(error_factor) * float(alpha) * float(h_norm)


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GenreStructure:
    """Movie/genre incidence: ``k`` genres of ``m`` movies each over ``M`` movies.

    Parameters
    ----------
    num_movies : int
        Total number of movies ``M``.
    genres : sequence of int arrays
        Member ids of each genre; stored sorted and read-only.
    variant : {'shared-core', 'disjoint-partition', 'bounded-overlap'}
    param : float or None
        Core fraction ``p`` for shared-core, overlap bound ``delta`` for
        bounded-overlap, unused for disjoint partitions.
    """

    num_movies: int
    genres: tuple
    variant: str
    param: float | None = None

    def __post_init__(self):
        genres = tuple(_frozen(np.sort(np.asarray(g, dtype=np.int64)), np.int64) for g in self.genres)
        object.__setattr__(self, "genres", genres)
        self.validate()

    @property
    def k(self) -> int:
        return len(self.genres)

    @property
    def m(self) -> int:
        return int(self.genres[0].size)

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise DomainError(f"unknown variant {self.variant!r}")
        if self.k == 0:
            raise DomainError("structure needs at least one genre")
        m = self.genres[0].size
        for j, g in enumerate(self.genres):
            if g.size != m:
                raise DomainError(f"genre {j} has {g.size} members, expected {m}")
            if np.unique(g).size != g.size:
                raise DomainError(f"genre {j} has duplicate members")
            if g.size and (g[0] < 0 or g[-1] >= self.num_movies):
                raise DomainError(f"genre {j} has ids outside [0, {self.num_movies})")
        sets = [set(g.tolist()) for g in self.genres]
        if self.variant == "shared-core":
            core = set.intersection(*sets)
            if len(core) != int(round(self.param * m)):
                raise DomainError(f"core has {len(core)} movies, expected round(p*m)")
            seen: dict[int, int] = {}
            for g in sets:
                for x in g - core:
                    seen[x] = seen.get(x, 0) + 1
            if any(c != 1 for c in seen.values()):
                raise DomainError("non-core movie appears in more than one genre")
        elif self.variant == "disjoint-partition":
            if self.num_movies != self.k * m:
                raise DomainError("disjoint partition requires M = k*m")
            if len(set.union(*sets)) != self.num_movies:
                raise DomainError("genres do not partition the movies")
        else:
            cap = self.param * m
            for i in range(self.k):
                for j in range(i + 1, self.k):
                    if len(sets[i] & sets[j]) > cap + 1e-9:
                        raise DomainError(f"genres {i},{j} intersect in more than delta*m movies")

    def membership(self) -> np.ndarray:
        """Dense ``M x k`` 0/1 incidence matrix."""
        out = np.zeros((self.num_movies, self.k), dtype=np.int8)
        for j, g in enumerate(self.genres):
            out[g, j] = 1
        return out

    def union(self, genre_ids) -> np.ndarray:
        """Sorted union of the members of ``genre_ids``."""
        ids = np.atleast_1d(np.asarray(genre_ids, dtype=np.int64))
        if ids.size == 1:
            return self.genres[int(ids[0])]
        return np.unique(np.concatenate([self.genres[int(j)] for j in ids]))

    def to_dict(self) -> dict:
        return {
            "num_movies": int(self.num_movies),
            "variant": self.variant,
            "param": None if self.param is None else float(self.param),
            "genres": [g.tolist() for g in self.genres],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GenreStructure":
        return cls(d["num_movies"], tuple(d["genres"]), d["variant"], d.get("param"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "GenreStructure":
        return cls.from_dict(json.loads(text))

    def digest(self) -> str:
        """SHA-256 of the canonical JSON encoding."""
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def __eq__(self, other):
        if not isinstance(other, GenreStructure):
            return NotImplemented
        return self.to_json() == other.to_json()

    def __hash__(self):
        return hash(self.digest())


@dataclass(frozen=True, eq=False)
class LatentState:
    """A user's hidden representation.

    ``kind='binary'``: 0/1 genre indicator; ``'simplex'``: nonnegative
    mixing weights summing to one; ``'sphere'``: unit ``l2`` vector.
    """

    kind: str
    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values, np.float64)
        object.__setattr__(self, "values", v)
        if v.ndim != 1:
            raise DimensionError("latent state must be a vector")
        if self.kind == "binary":
            if not np.all((v == 0) | (v == 1)):
                raise DomainError("binary latent must be 0/1")
        elif self.kind == "simplex":
            if np.any(v < -1e-12) or abs(v.sum() - 1.0) > 1e-12:
                raise DomainError("simplex latent must be nonnegative and sum to 1")
        elif self.kind == "sphere":
            if abs(np.linalg.norm(v) - 1.0) > 1e-12:
                raise DomainError("sphere latent must have unit l2 norm")
        else:
            raise DomainError(f"unknown latent kind {self.kind!r}")

    @property
    def sparsity(self) -> int:
        return int(np.count_nonzero(self.values))

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.values)

    def as_simplex(self) -> "LatentState":
        """Uniform mixing weights over the chosen genres."""
        if self.kind == "simplex":
            return self
        if self.kind != "binary":
            raise DomainError("only binary latents have a simplex view")
        return LatentState("simplex", self.values / self.values.sum())

    def __eq__(self, other):
        if not isinstance(other, LatentState):
            return NotImplemented
        return self.kind == other.kind and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.kind, self.values.tobytes()))


@dataclass(frozen=True, eq=False)
class RatingSample:
    """``T`` movie ids emitted by one user.

    In ``'set'`` mode ids are distinct; in ``'multiset'`` mode repeats are
    allowed. ``counts`` is the bag-of-words view of length ``num_movies``.
    """

    movie_ids: np.ndarray
    num_movies: int
    mode: str = "set"

    def __post_init__(self):
        ids = _frozen(self.movie_ids, np.int64)
        object.__setattr__(self, "movie_ids", ids)
        if self.mode not in ("set", "multiset"):
            raise DomainError(f"unknown replacement mode {self.mode!r}")
        if ids.size and (ids.min() < 0 or ids.max() >= self.num_movies):
            raise DomainError("movie id out of range")
        if self.mode == "set" and np.unique(ids).size != ids.size:
            raise DomainError("set-mode sample contains duplicate ids")

    @property
    def T(self) -> int:
        return int(self.movie_ids.size)

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.movie_ids, minlength=self.num_movies)

    def __len__(self):
        return self.T


@dataclass(frozen=True)
class ValidityReport:
    """Empirical encoder quality.

    ``success_prob`` is the fraction of ``trials`` whose relative error was
    at most ``error_factor``; ``quantiles`` maps 50/90/99 to the error
    distribution's quantiles.
    """

    error_factor: float
    success_prob: float
    norm: str
    trials: int
    n_success: int
    quantiles: dict = field(default_factory=dict)
    errors: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.error_factor < 0:
            raise DomainError("error_factor must be nonnegative")
        if self.trials < 1:
            raise DomainError("trials must be positive")
        if not 0 <= self.n_success <= self.trials:
            raise DomainError("n_success out of range")


def as_id_arrays(samples: Sequence) -> list[np.ndarray]:
    """Normalise a list of samples (``RatingSample`` or id arrays) to id arrays."""
    out = []
    for s in samples:
        out.append(s.movie_ids if isinstance(s, RatingSample) else np.asarray(s, dtype=np.int64))
    return out
