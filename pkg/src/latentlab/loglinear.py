"""Continuous log-linear generative model.

Each movie ``x`` carries a vector ``W[x]`` in R^d; a user is a unit vector
``h`` and emits ``T`` i.i.d. movies with ``p(x | h) ∝ exp(<W[x], h>)``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .core import LatentState
from .exceptions import DomainError

__all__ = [
    "MovieVectors",
    "LogLinearSample",
    "sample_movie_vectors",
    "sample_sphere",
    "log_partition_function",
    "partition_function",
    "emission_probabilities",
    "emit_loglinear",
    "expected_partition_function",
    "ZConcentration",
    "z_concentration_report",
    "orthonormal_completion",
]

_HEADER = struct.Struct("<8sQQd")
_MAGIC = b"LLMVEC01"


@dataclass(frozen=True, eq=False)
class MovieVectors:
    """Movie embedding matrix ``W`` (``M x d``) and the scale it was drawn with.

    ``coord_var`` is the per-coordinate variance used at generation time; it
    defaults to ``B**2 / (4 d)``.
    """

    W: np.ndarray
    B: float
    coord_var: float | None = None

    def __post_init__(self):
        W = np.array(self.W, dtype=np.float64)
        if W.ndim != 2:
            raise DomainError("W must be a 2-d array")
        W.setflags(write=False)
        object.__setattr__(self, "W", W)
        if self.coord_var is None:
            object.__setattr__(self, "coord_var", self.B**2 / (4.0 * W.shape[1]))

    @property
    def M(self) -> int:
        return self.W.shape[0]

    @property
    def d(self) -> int:
        return self.W.shape[1]

    def to_bytes(self) -> bytes:
        """Row-major float64 payload behind a ``(magic, M, d, B)`` header."""
        return _HEADER.pack(_MAGIC, self.M, self.d, float(self.B)) + self.W.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes, coord_var=None) -> "MovieVectors":
        magic, M, d, B = _HEADER.unpack_from(blob)
        if magic != _MAGIC:
            raise DomainError("not a movie-vector blob")
        W = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size, count=M * d).reshape(M, d)
        return cls(W.copy(), B, coord_var)

    def metadata(self) -> dict:
        return {"M": self.M, "d": self.d, "B": float(self.B), "coord_var": float(self.coord_var),
                "layout": "row-major float64, little endian", "header": "8s magic, u64 M, u64 d, f64 B"}

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())
        with open(f"{path}.json", "w") as fh:
            json.dump(self.metadata(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "MovieVectors":
        coord_var = None
        try:
            with open(f"{path}.json") as fh:
                coord_var = json.load(fh).get("coord_var")
        except FileNotFoundError:
            pass
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read(), coord_var)


@dataclass(frozen=True)
class LogLinearSample:
    movie_ids: np.ndarray
    latent: LatentState

    @property
    def T(self) -> int:
        return int(np.asarray(self.movie_ids).size)


def sample_movie_vectors(M, d, B, rng, scale="dimension-scaled") -> MovieVectors:
    """Draw ``M`` i.i.d. Gaussian movie vectors.

    ``scale='dimension-scaled'`` uses per-coordinate variance ``B**2 / (4 d)``;
    ``scale='isotropic'`` uses ``B**2`` (``W_x = B v`` with ``v ~ N(0, I)``).
    """
    if M < 1 or d < 1:
        raise DomainError("M and d must be positive")
    if B < 0:
        raise DomainError("B must be nonnegative")
    if scale == "dimension-scaled":
        var = B * B / (4.0 * d)
    elif scale == "isotropic":
        var = float(B * B)
    else:
        raise DomainError(f"unknown scale {scale!r}")
    W = rng.standard_normal((M, d)) * np.sqrt(var)
    return MovieVectors(W, float(B), var)


def sample_sphere(d, rng) -> LatentState:
    """Uniform unit vector in R^d."""
    while True:
        v = rng.standard_normal(d)
        n = np.linalg.norm(v)
        if n > 0:
            v = v / n
            # renormalise once more so the norm is 1 to the last ulp or two
            return LatentState("sphere", v / np.linalg.norm(v))


def _matrix(W) -> np.ndarray:
    return W.W if isinstance(W, MovieVectors) else np.asarray(W, dtype=np.float64)


def _unit(h) -> np.ndarray:
    hv = h.values if isinstance(h, LatentState) else np.asarray(h, dtype=np.float64)
    if abs(np.linalg.norm(hv) - 1.0) > 1e-9:
        raise DomainError("latent must have unit l2 norm")
    return hv


def log_partition_function(W, h) -> float:
    """``log sum_x exp(<W_x, h>)`` via log-sum-exp."""
    return float(logsumexp(_matrix(W) @ _unit(h)))


def partition_function(W, h) -> float:
    """``Z(h) = sum_x exp(<W_x, h>)``."""
    return float(np.exp(log_partition_function(W, h)))


def emission_probabilities(W, h) -> np.ndarray:
    """Softmax of ``W @ h``."""
    scores = _matrix(W) @ _unit(h)
    p = np.exp(scores - logsumexp(scores))
    return p / p.sum()


def emit_loglinear(W, h, T, rng) -> LogLinearSample:
    """``T`` i.i.d. categorical draws from ``p(x | h)``."""
    if T < 1:
        raise DomainError("T must be at least 1")
    p = emission_probabilities(W, h)
    cdf = np.cumsum(p)
    cdf[-1] = 1.0
    ids = np.searchsorted(cdf, rng.random(int(T)), side="right")
    latent = h if isinstance(h, LatentState) else LatentState("sphere", _unit(h))
    return LogLinearSample(ids.astype(np.int64), latent)


def expected_partition_function(M, d, B, coord_var=None) -> float:
    """``E[Z] = M exp(coord_var / 2)``; ``M exp(B**2 / (8 d))`` at the default variance."""
    var = B * B / (4.0 * d) if coord_var is None else coord_var
    return float(M * np.exp(var / 2.0))


@dataclass(frozen=True)
class ZConcentration:
    """Ratios ``Z(h) / E[Z]`` over a batch of random unit latents."""

    ratios: np.ndarray
    expected: float

    @property
    def mean_ratio(self) -> float:
        return float(np.mean(self.ratios))

    @property
    def max_dev(self) -> float:
        return float(np.max(np.abs(self.ratios - 1.0)))

    def frac_within(self, eps) -> float:
        return float(np.mean(np.abs(self.ratios - 1.0) <= eps))


def z_concentration_report(W: MovieVectors, n_latents, rng) -> ZConcentration:
    if n_latents < 1:
        raise DomainError("n_latents must be positive")
    expected = expected_partition_function(W.M, W.d, W.B, W.coord_var)
    log_e = np.log(expected)
    ratios = np.empty(n_latents)
    for i in range(n_latents):
        h = sample_sphere(W.d, rng)
        ratios[i] = np.exp(log_partition_function(W, h) - log_e)
    return ZConcentration(ratios, expected)


def orthonormal_completion(h) -> np.ndarray:
    """``d x (d-1)`` matrix whose columns complete ``h`` to an orthonormal basis.

    Built from the Householder reflection sending ``h`` to ``e_1``; fully
    deterministic given ``h``.
    """
    hv = _unit(h)
    d = hv.size
    e1 = np.zeros(d)
    e1[0] = 1.0
    # reflect along the better-conditioned of h - e1 and h + e1
    sign = 1.0 if hv[0] <= 0 else -1.0
    v = hv - sign * e1
    H = np.eye(d) - 2.0 * np.outer(v, v) / np.dot(v, v)
    return H[:, 1:]
