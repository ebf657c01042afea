"""Exact reference values for small instances.

Everything here is brute force or exact rational arithmetic. Monte Carlo
code elsewhere in the package is checked against these functions.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import GenreStructure, RatingSample
from .exceptions import DomainError, LatentSpaceTooLargeError
from .loglinear import MovieVectors, orthonormal_completion

__all__ = [
    "exact_overlap_pmf_same",
    "enumerate_overlap_pmf_same",
    "exact_overlap_pmf_core",
    "exact_overlap_pmf_indep",
    "IndepOverlap",
    "exact_subset_probabilities",
    "exact_posterior",
    "posterior_mass_within",
    "exact_loglinear_expectations",
    "LogLinearExpectations",
    "exact_min_max_entry",
    "build_fixtures",
    "write_fixtures",
]

ENUMERATION_LIMIT_SAME = 8
ENUMERATION_LIMIT_INDEP = 10**6
LATENT_LIMIT = 10**4


def _check(m, T, tau):
    if not (isinstance(m, (int, np.integer)) and isinstance(T, (int, np.integer))):
        raise DomainError("m and T must be integers")
    if not 0 <= tau <= T <= m:
        raise DomainError(f"need 0 <= tau <= T <= m, got tau={tau}, T={T}, m={m}")


def enumerate_overlap_pmf_same(m, T) -> list[Fraction]:
    """Overlap pmf of two uniform ``T``-subsets of ``[m]`` by listing all pairs."""
    _check(m, T, 0)
    subsets = [frozenset(c) for c in itertools.combinations(range(m), T)]
    counts = [0] * (T + 1)
    for a in subsets:
        for b in subsets:
            counts[len(a & b)] += 1
    total = len(subsets) ** 2
    return [Fraction(c, total) for c in counts]


def exact_overlap_pmf_same(m, T, tau, verify=True) -> Fraction:
    """``C(m-T, T-tau) C(T, tau) / C(m, T)`` as an exact fraction.

    With ``verify`` and ``m <= 8`` the value is also obtained by enumerating
    every pair of subsets, and a mismatch raises ``AssertionError``.
    """
    _check(m, T, tau)
    val = Fraction(math.comb(m - T, T - tau) * math.comb(T, tau), math.comb(m, T))
    if verify and m <= ENUMERATION_LIMIT_SAME:
        enum = enumerate_overlap_pmf_same(m, T)[tau]
        if enum != val:
            raise AssertionError(f"closed form {val} != enumeration {enum} at m={m}, T={T}, tau={tau}")
    return val


def exact_overlap_pmf_core(m, T, core, tau) -> Fraction:
    """Overlap pmf for two users of *different* genres that share a core.

    Each user draws a uniform ``T``-subset of a size-``m`` genre; the genres
    intersect exactly in a core of ``core`` movies, so an overlap can only
    happen inside the core.  Exact sum over both users' core counts.
    """
    _check(m, T, tau)
    if not 0 <= core <= m:
        raise DomainError("core must lie in [0, m]")
    denom = math.comb(m, T)
    hyper = [Fraction(math.comb(core, c) * math.comb(m - core, T - c), denom) for c in range(T + 1)]
    total = Fraction(0)
    for c1, p1 in enumerate(hyper):
        if p1 == 0 or c1 < tau:
            continue
        for c2, p2 in enumerate(hyper):
            if p2 == 0 or c2 < tau:
                continue
            # user 2's c2 core movies are a uniform subset of the core
            inner = Fraction(math.comb(c1, tau) * math.comb(core - c1, c2 - tau), math.comb(core, c2))
            total += p1 * p2 * inner
    return total


@dataclass(frozen=True)
class IndepOverlap:
    """Printed approximation next to the enumerated truth (``None`` if too large)."""

    formula: float
    enumeration: Fraction | None
    difference: float | None


def _compositions(m, T):
    """All count vectors of length ``m`` summing to ``T`` with multinomial weights."""
    rows, weights = [], []
    fact_T = math.factorial(T)
    for bars in itertools.combinations(range(T + m - 1), m - 1):
        prev, c = -1, []
        for b in bars:
            c.append(b - prev - 1)
            prev = b
        c.append(T + m - 1 - prev - 1)
        w = fact_T
        for ci in c:
            w //= math.factorial(ci)
        rows.append(c)
        weights.append(w)
    return np.array(rows, dtype=np.int64), weights


def _indep_pmf_enumerated(m, T) -> list[Fraction]:
    C, w = _compositions(m, T)
    wb = np.array(w, dtype=np.float64)  # sums stay below m**T <= 1e6, exact in float64
    acc = [0] * (T + 1)
    for a, wa in zip(C, w):
        ov = np.minimum(C, a).sum(axis=1)
        by_tau = np.bincount(ov, weights=wb, minlength=T + 1)
        for tau in range(T + 1):
            acc[tau] += wa * int(by_tau[tau])
    total = m ** (2 * T)
    return [Fraction(x, total) for x in acc]


def exact_overlap_pmf_indep(m, T, tau) -> IndepOverlap:
    """Overlap pmf under i.i.d. uniform emission from one size-``m`` genre.

    Overlap is the multiset overlap ``sum_x min(count_a(x), count_b(x))``.
    ``formula`` is ``C(T,tau)^2 (1/m)^tau (1 - (T-tau)/m)^(2(T-tau))``;
    ``enumeration`` is the exact pmf, computed when ``m**T <= 1e6``.
    """
    if not 0 <= tau <= T or m < 1:
        raise DomainError(f"need 0 <= tau <= T and m >= 1, got tau={tau}, T={T}, m={m}")
    formula = math.comb(T, tau) ** 2 * (1.0 / m) ** tau * (1.0 - (T - tau) / m) ** (2 * (T - tau))
    if m**T > ENUMERATION_LIMIT_INDEP:
        return IndepOverlap(float(formula), None, None)
    enum = _indep_pmf_enumerated(m, T)[tau]
    return IndepOverlap(float(formula), enum, float(formula - float(enum)))


def exact_subset_probabilities(union_size, T) -> dict:
    """Every ``T``-subset of ``range(union_size)`` mapped to its probability."""
    if not 0 <= T <= union_size:
        raise DomainError("need 0 <= T <= union_size")
    p = Fraction(1, math.comb(union_size, T))
    return {c: p for c in itertools.combinations(range(union_size), T)}


def exact_posterior(structure: GenreStructure, s, T, x) -> dict:
    """Posterior over binary ``s``-sparse latents given a set-mode sample.

    Returns ``{genre_tuple: Fraction}`` under a uniform prior with
    ``Pr[x | h] = 1 / C(|union(h)|, T)`` when ``x`` lies inside ``union(h)``.
    """
    k = structure.k
    if math.comb(k, s) > LATENT_LIMIT:
        raise LatentSpaceTooLargeError(f"C({k}, {s}) latents exceed {LATENT_LIMIT}")
    ids = x.movie_ids if isinstance(x, RatingSample) else np.asarray(x, dtype=np.int64)
    if isinstance(x, RatingSample) and x.mode != "set":
        raise DomainError("exact_posterior needs a set-mode sample")
    if ids.size != T:
        raise DomainError(f"sample has {ids.size} ids, expected T={T}")
    xs = set(int(i) for i in ids)
    like = {}
    for combo in itertools.combinations(range(k), s):
        u = set(structure.union(list(combo)).tolist())
        if xs <= u:
            like[combo] = Fraction(1, math.comb(len(u), T))
    z = sum(like.values(), Fraction(0))
    if z == 0:
        raise DomainError("sample is impossible under every latent")
    return {h: v / z for h, v in like.items()}


def posterior_mass_within(posterior: dict, k, f_x, gamma, norm="l1") -> Fraction | float:
    """Posterior mass of ``{h : ||h - f_x|| <= gamma ||h||}`` for binary ``h``."""
    f_x = np.asarray(f_x, dtype=np.float64)
    mass = Fraction(0)
    for combo, p in posterior.items():
        h = np.zeros(k)
        h[list(combo)] = 1.0
        d = h - f_x
        if norm == "l1":
            lhs, rhs = np.abs(d).sum(), gamma * np.abs(h).sum()
        else:
            lhs, rhs = np.linalg.norm(d), gamma * np.linalg.norm(h)
        if lhs <= rhs:
            mass += p
    return mass


@dataclass(frozen=True)
class LogLinearExpectations:
    tilted_mean_signal: float
    offaxis_means: np.ndarray
    Z: float


def exact_loglinear_expectations(W, h) -> LogLinearExpectations:
    """Exact ``E[<W_x, h>]`` and ``E[<W_x, u_j>]`` under ``p(x | h)`` by direct summation."""
    Wm = W.W if isinstance(W, MovieVectors) else np.asarray(W, dtype=np.float64)
    hv = np.asarray(getattr(h, "values", h), dtype=np.float64)
    if Wm.size > 10**8:
        raise DomainError("M*d too large for exact summation")
    scores = Wm @ hv
    top = scores.max()
    e = np.exp(scores - top)
    z_scaled = e.sum()
    p = e / z_scaled
    U = orthonormal_completion(hv)
    return LogLinearExpectations(float(p @ scores), (p @ Wm) @ U, float(z_scaled * np.exp(top)))


def exact_min_max_entry(A) -> np.ndarray:
    """Per-row optimum of ``min ||b||_inf s.t. A^T b = e_j`` by vertex enumeration.

    At an optimal vertex at most ``k-1`` coordinates of ``b`` lie strictly
    inside ``(-t, t)``.  For every free set ``F`` of size ``k-1`` and every
    sign pattern on the rest, the square system in ``(b_F, t)`` is solved and
    kept if feasible.  Exponential; meant for ``M <= 8``.
    """
    A = np.asarray(A, dtype=np.float64)
    M, k = A.shape
    if M > 10:
        raise DomainError("vertex enumeration is limited to M <= 10")
    best = np.full(k, np.inf)
    for F in itertools.combinations(range(M), k - 1):
        rest = [i for i in range(M) if i not in F]
        for signs in itertools.product((-1.0, 1.0), repeat=len(rest)):
            # unknowns: b_F (k-1), t (1); equations: A^T b = e_j
            S = np.zeros((k, k))
            S[:, : k - 1] = A[list(F), :].T
            S[:, k - 1] = A[rest, :].T @ np.array(signs)
            if abs(np.linalg.det(S)) < 1e-12:
                continue
            for j in range(k):
                e = np.zeros(k)
                e[j] = 1.0
                sol = np.linalg.solve(S, e)
                t = sol[-1]
                if t < -1e-12 or np.any(np.abs(sol[:-1]) > t + 1e-9):
                    continue
                best[j] = min(best[j], t)
    return best


def build_fixtures() -> dict:
    """Small exact values used by the property tests, as JSON-ready data."""
    same = {f"{m},{T}": [str(v) for v in enumerate_overlap_pmf_same(m, T)]
            for m in range(1, 9) for T in range(0, min(m, 4) + 1)}
    indep = {}
    for m, T in ((2, 1), (3, 2), (4, 3), (5, 2)):
        for tau in range(T + 1):
            r = exact_overlap_pmf_indep(m, T, tau)
            indep[f"{m},{T},{tau}"] = {"formula": r.formula, "enumeration": str(r.enumeration),
                                       "difference": r.difference}
    return {
        "overlap_pmf_same": same,
        "overlap_pmf_indep": indep,
        "notes": {"posterior_delta": "delta = sqrt(1 - beta_hat)",
                  "indep_overlap": "sum over movies of min(count_a, count_b)"},
    }


def write_fixtures(path) -> dict:
    fx = build_fixtures()
    with open(path, "w") as fh:
        json.dump(fx, fh, indent=2, sort_keys=True)
    return fx
