"""Exact-reference checks: pseudo-inverse optimality, overlap pmfs, posterior concentration."""

from __future__ import annotations

import json
import math

import numpy as np

from ..core import LatentState, RatingSample, derive_stream, norm_error
from ..encoders import linear_encode, low_variance_pseudoinverse
from ..mixture import MixtureModel, emit, emit_batch, make_structure, movie_genre_matrix, sample_user
from ..oracle import (
    build_fixtures,
    enumerate_overlap_pmf_same,
    exact_min_max_entry,
    exact_overlap_pmf_same,
    exact_posterior,
    posterior_mass_within,
)
from .base import NUMBER, POS_INT, ExperimentResult, as_float, map_trials, register

LONG_COLUMNS = ["section", "key", "metric", "value"]


def _pinv_checks(seed, n_random, n_oracle, threads):
    def random_case(i):
        rng = derive_stream(seed, 100 + i)
        k = int(rng.integers(1, 11))
        M = int(rng.integers(k, 51))
        A = rng.standard_normal((M, k))
        P = low_variance_pseudoinverse(A)
        return f"random{i};M={M};k={k}", P.residual, P.lam

    def oracle_case(i):
        rng = derive_stream(seed, 10_000 + i)
        k = int(rng.integers(1, 4))
        M = int(rng.integers(k, 7))
        A = rng.standard_normal((M, k)) if i % 2 else rng.random((M, k))
        P = low_variance_pseudoinverse(A)
        exact = float(np.max(exact_min_max_entry(A)))
        return f"oracle{i};M={M};k={k}", P.lam, exact

    rnd = map_trials(random_case, n_random, threads)
    orc = map_trials(oracle_case, n_oracle, threads)
    rng = derive_stream(seed, 1)
    structures = [
        ("shared-core", make_structure("shared-core", m=20, k=5, p=0.5, rng=rng)),
        ("disjoint-partition", make_structure("disjoint-partition", M=60, k=6, rng=rng)),
        ("bounded-overlap", make_structure("bounded-overlap", M=200, m=40, k=5, delta=0.2, rng=rng)),
    ]
    st_rows = []
    for name, st in structures:
        P = low_variance_pseudoinverse(st)
        st_rows.append((name, P.residual, P.lam))
    # disjoint k=3, m=2: the indicator matrix is optimal with lambda 1
    small = make_structure("disjoint-partition", M=6, k=3, rng=rng)
    A = movie_genre_matrix(small)
    orc.append(("disjoint;M=6;k=3", low_variance_pseudoinverse(A).lam, float(np.max(exact_min_max_entry(A)))))
    return rnd, orc, st_rows


def _overlap_mc(seed, m, T, n_pairs, chunk, threads):
    st = make_structure("disjoint-partition", M=m, k=1, rng=derive_stream(seed, 2))
    model = MixtureModel(st, 1, T)
    user = LatentState("binary", np.ones(1))
    n_chunks = -(-n_pairs // chunk)

    def run(c):
        n = min(chunk, n_pairs - c * chunk)
        rng = derive_stream(seed, 20_000 + c)
        ids = np.array(emit_batch(model, [user] * (2 * n), rng))
        a, b = np.sort(ids[:n], axis=1), np.sort(ids[n:], axis=1)
        # overlap of two sorted rows via broadcasting equality
        ov = (a[:, :, None] == b[:, None, :]).sum(axis=(1, 2))
        return np.bincount(ov, minlength=T + 1)

    counts = np.sum(map_trials(run, n_chunks, threads), axis=0)
    return counts, n_pairs


def _posterior(seed, cfg, threads):
    m, k, p, T = int(cfg["post_m"]), int(cfg["post_k"]), as_float(cfg["post_p"]), int(cfg["post_T"])
    st = make_structure("shared-core", m=m, k=k, p=p, rng=derive_stream(seed, 3))
    pinv = low_variance_pseudoinverse(st)
    model = MixtureModel(st, 1, T)
    gamma = pinv.lam * math.sqrt(1 / T)

    def sample(stream):
        rng = derive_stream(seed, stream)
        h = sample_user(k, 1, rng)
        x = emit(model, h, rng)
        return h, x, linear_encode(pinv, x.counts, T, k).h_est

    def beta_trial(i):
        h, _, f = sample(30_000 + i)
        return norm_error(f, h.values, "l1") <= gamma

    n_beta = int(cfg["post_beta_trials"])
    beta = float(np.mean(map_trials(beta_trial, n_beta, threads)))
    delta = math.sqrt(max(0.0, 1.0 - beta))

    def post_trial(i):
        _, x, f = sample(40_000 + i)
        post = exact_posterior(st, 1, T, RatingSample(x.movie_ids, st.num_movies, "set"))
        return float(posterior_mass_within(post, k, f, gamma, "l1"))

    masses = np.array(map_trials(post_trial, int(cfg["post_x_trials"]), threads))
    frac = float(np.mean(masses >= 1 - delta))
    return {"lambda": pinv.lam, "beta_hat": beta, "gamma_hat": gamma, "delta": delta,
            "frac_x_concentrated": frac, "required": 1 - delta, "n_beta": n_beta, "n_x": masses.size}


@register(
    "oracle-fixtures",
    "exact references: pseudo-inverse optimality, overlap pmf agreement, posterior concentration",
    {
        "n_random": POS_INT, "n_oracle": POS_INT,
        "mc_m": POS_INT, "mc_T": POS_INT, "mc_pairs": POS_INT, "mc_chunk": POS_INT,
        "mc_taus": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "post_m": POS_INT, "post_k": POS_INT, "post_p": NUMBER, "post_T": POS_INT,
        "post_beta_trials": POS_INT, "post_x_trials": POS_INT,
    },
)
def run_oracle(cfg, threads=1) -> ExperimentResult:
    seed = int(cfg["seed"])
    rows = []
    rnd, orc, st_rows = _pinv_checks(seed, int(cfg["n_random"]), int(cfg["n_oracle"]), threads)
    rows += [{"section": "pinv_random", "key": key, "metric": "residual", "value": r} for key, r, _ in rnd]
    rows += [{"section": "pinv_structure", "key": key, "metric": "residual", "value": r} for key, r, _ in st_rows]
    rows += [{"section": "pinv_oracle", "key": key, "metric": "lambda_minus_exact", "value": lam - ex}
             for key, lam, ex in orc]

    m, T, n_pairs = int(cfg["mc_m"]), int(cfg["mc_T"]), int(cfg["mc_pairs"])
    counts, n = _overlap_mc(seed, m, T, n_pairs, int(cfg["mc_chunk"]), threads)
    z_scores = {}
    for tau in cfg["mc_taus"]:
        exact = float(exact_overlap_pmf_same(m, T, int(tau), verify=False))
        freq = counts[int(tau)] / n
        sigma = math.sqrt(exact * (1 - exact) / n)
        z = (freq - exact) / sigma if sigma > 0 else (0.0 if freq == exact else math.inf)
        z_scores[str(tau)] = z
        rows += [
            {"section": "overlap_mc", "key": f"tau={tau}", "metric": "freq", "value": float(freq)},
            {"section": "overlap_mc", "key": f"tau={tau}", "metric": "exact", "value": exact},
            {"section": "overlap_mc", "key": f"tau={tau}", "metric": "z", "value": float(z)},
        ]
    mismatches = 0
    for mm in range(1, 9):
        for TT in range(0, min(mm, 4) + 1):
            enum = enumerate_overlap_pmf_same(mm, TT)
            mismatches += sum(exact_overlap_pmf_same(mm, TT, t, verify=False) != enum[t] for t in range(TT + 1))
    rows.append({"section": "overlap_enum", "key": "m<=8;T<=4", "metric": "mismatches", "value": mismatches})

    post = _posterior(seed, cfg, threads)
    rows += [{"section": "posterior", "key": "shared-core", "metric": key, "value": v} for key, v in post.items()]

    summary = {
        "pinv_random_max_residual": max(r for _, r, _ in rnd),
        "pinv_structure_max_residual": max(r for _, r, _ in st_rows),
        "pinv_oracle_max_gap": max(abs(lam - ex) for _, lam, ex in orc),
        "overlap_z": z_scores,
        "overlap_enum_mismatches": mismatches,
        "posterior": post,
    }
    fixtures = build_fixtures()
    return ExperimentResult(LONG_COLUMNS, rows, summary,
                            {"fixtures.json": json.dumps(fixtures, indent=2, sort_keys=True) + "\n"})
