"""Overlap-based nearest-neighbour experiments in the small-T and large-T regimes."""

from __future__ import annotations

import itertools

import numpy as np
import scipy.sparse as sp

from ..baselines import OverlapNeighborsClassifier, incidence_matrix, larget_thresholds, overlap, overlap_histogram
from ..core import LatentState, derive_stream
from ..mixture import MixtureModel, emit, emit_batch, make_structure
from ..oracle import exact_overlap_pmf_core, exact_overlap_pmf_same
from .base import NUMBER, POS_INT, ExperimentResult, as_float, map_trials, register

LONG_COLUMNS = ["section", "key", "metric", "value"]


def _single_genre_users(k, n, rng):
    genres = rng.integers(0, k, size=n)
    users = []
    for g in genres:
        h = np.zeros(k)
        h[g] = 1.0
        users.append(LatentState("binary", h))
    return genres, users


@register(
    "nn-separation-small-T",
    "overlaps carry almost no genre signal when T is small relative to sqrt(m)",
    {
        "m": POS_INT, "T": POS_INT, "p": NUMBER, "N": POS_INT, "runs": POS_INT,
        "k": POS_INT,
        "k_grid": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
        "overlap_cap": POS_INT,
    },
)
def run_small_t(cfg, threads=1) -> ExperimentResult:
    """Streams: structure 0; run ``r`` users on ``1 + r``; k-grid point ``j``
    structure and users on ``10**6 + j``."""
    seed = int(cfg["seed"])
    m, T, p, N = int(cfg["m"]), int(cfg["T"]), as_float(cfg["p"]), int(cfg["N"])
    k = int(cfg["k"])
    st = make_structure("shared-core", m=m, k=k, p=p, rng=derive_stream(seed, 0))
    model = MixtureModel(st, 1, T)

    def run(r):
        rng = derive_stream(seed, 1 + r)
        _, users = _single_genre_users(k, N, rng)
        X = incidence_matrix(emit_batch(model, users, rng), st.num_movies)
        O = sp.triu(X @ X.T, k=1)
        return int(O.max()) if O.nnz else 0

    maxima = map_trials(run, int(cfg["runs"]), threads)
    rows = [{"section": "max_overlap", "key": f"run={r}", "metric": "max_pairwise_overlap", "value": v}
            for r, v in enumerate(maxima)]
    cap = int(cfg["overlap_cap"])
    frac_ok = float(np.mean(np.array(maxima) <= cap))

    core = int(round(p * m))
    same_tail = 1 - float(exact_overlap_pmf_same(m, T, 0, verify=False))
    diff_tail = 1 - float(exact_overlap_pmf_core(m, T, core, 0))
    k_grid = [int(x) for x in cfg["k_grid"]]

    def grid_point(j):
        kk = k_grid[j]
        rng = derive_stream(seed, 1_000_000 + j)
        stk = make_structure("shared-core", m=m, k=kk, p=p, rng=rng)
        genres, users = _single_genre_users(kk, N, rng)
        samples = emit_batch(MixtureModel(stk, 1, T), users, rng)
        return overlap_histogram(samples, genres, stk.num_movies, kk, T=T)

    hists = map_trials(grid_point, len(k_grid), threads)
    ratios = []
    for kk, hist in zip(k_grid, hists):
        r1 = hist.ratio(1)
        ratios.append(r1)
        exact = (kk - 1) * diff_tail / same_tail
        rows += [
            {"section": "posterior_ratio", "key": f"k={kk}", "metric": "ratio_tau1", "value": r1},
            {"section": "posterior_ratio", "key": f"k={kk}", "metric": "ratio_tau1_exact", "value": exact},
            {"section": "posterior_ratio", "key": f"k={kk}", "metric": "p_same_ge1", "value": hist.tail_same(1)},
            {"section": "posterior_ratio", "key": f"k={kk}", "metric": "p_diff_ge1", "value": hist.tail_diff(1)},
            {"section": "posterior_ratio", "key": f"k={kk}", "metric": "k_over_4", "value": kk / 4},
        ]
    summary = {
        "max_overlap_frac_within_cap": frac_ok,
        "max_overlap_largest": int(max(maxima)),
        "overlap_cap": cap,
        "ratio_by_k": dict(zip(map(str, k_grid), ratios)),
        "ratio_ge_k_over_4": all(r >= kk / 4 for r, kk in zip(ratios, k_grid)),
        "ratio_increasing": all(b > a for a, b in zip(ratios, ratios[1:])),
        "exact_same_tail": same_tail,
        "exact_diff_tail": diff_tail,
    }
    return ExperimentResult(LONG_COLUMNS, rows, summary)


@register(
    "nn-separation-large-T",
    "overlap thresholds separate users by genre set when T^2/m is large",
    {
        "m": POS_INT, "s": POS_INT, "T": POS_INT, "k": POS_INT, "M": POS_INT, "delta": NUMBER,
        "pairs": POS_INT, "n_train": POS_INT, "n_queries": POS_INT,
        "same_factor": NUMBER, "diff_factor": NUMBER, "tau_factor": NUMBER,
    },
)
def run_large_t(cfg, threads=1) -> ExperimentResult:
    """Streams: structure 0; same pair ``i`` on ``1 + i``, different pair on
    ``10**6 + i``; train user ``j`` on ``2*10**6 + j``; query ``q`` on ``3*10**6 + q``."""
    seed = int(cfg["seed"])
    m, s, T, k = int(cfg["m"]), int(cfg["s"]), int(cfg["T"]), int(cfg["k"])
    st = make_structure("bounded-overlap", M=int(cfg["M"]), m=m, k=k, delta=as_float(cfg["delta"]),
                        rng=derive_stream(seed, 0))
    model = MixtureModel(st, s, T)
    combos = list(itertools.combinations(range(k), s))
    diff_max, same_min = larget_thresholds(s, T, m)
    lo = as_float(cfg["same_factor"]) * same_min
    hi = as_float(cfg["diff_factor"]) * diff_max

    def latent(combo):
        h = np.zeros(k)
        h[list(combo)] = 1.0
        return LatentState("binary", h)

    def same_pair(i):
        rng = derive_stream(seed, 1 + i)
        c = combos[rng.integers(len(combos))]
        return overlap(emit(model, latent(c), rng), emit(model, latent(c), rng))

    def diff_pair(i):
        rng = derive_stream(seed, 1_000_000 + i)
        a, b = rng.choice(len(combos), size=2, replace=False)
        shared = len(set(combos[a]) & set(combos[b]))
        return overlap(emit(model, latent(combos[a]), rng), emit(model, latent(combos[b]), rng)), shared

    n_pairs = int(cfg["pairs"])
    same = np.array(map_trials(same_pair, n_pairs, threads))
    diff = map_trials(diff_pair, n_pairs, threads)
    diff_ov = np.array([d[0] for d in diff])
    diff_shared = np.array([d[1] for d in diff])
    same_ok = float(np.mean(same >= lo))
    diff_ok = float(np.mean(diff_ov <= hi))
    one = diff_shared == 1
    diff_ok_one = float(np.mean(diff_ov[one] <= hi)) if one.any() else float("nan")

    def train_user(j):
        rng = derive_stream(seed, 2_000_000 + j)
        return emit(model, latent(combos[rng.integers(len(combos))]), rng).movie_ids

    def query(q):
        rng = derive_stream(seed, 3_000_000 + q)
        combo = combos[rng.integers(len(combos))]
        x = emit(model, latent(combo), rng)
        union = st.union(list(combo))
        if q % 2 == 0:
            pool = np.setdiff1d(union, x.movie_ids, assume_unique=True)
            truth = 1
        else:
            pool = np.setdiff1d(np.arange(st.num_movies), union, assume_unique=True)
            truth = 0
        return x.movie_ids, int(pool[rng.integers(pool.size)]), truth

    train = map_trials(train_user, int(cfg["n_train"]), threads)
    queries = map_trials(query, int(cfg["n_queries"]), threads)
    tau = as_float(cfg["tau_factor"]) * same_min
    clf = OverlapNeighborsClassifier(tau=tau, num_movies=st.num_movies, abstain_value=-1).fit(train)
    pred = clf.predict_movie([q[0] for q in queries], [q[1] for q in queries])
    truth = np.array([q[2] for q in queries])
    acc = float(np.mean(pred == truth))
    abstain = float(np.mean(pred == -1))

    rows = [{"section": "same_pair", "key": f"pair={i}", "metric": "overlap", "value": int(v)}
            for i, v in enumerate(same)]
    rows += [{"section": "diff_pair", "key": f"pair={i};shared={int(sh)}", "metric": "overlap", "value": int(v)}
             for i, (v, sh) in enumerate(zip(diff_ov, diff_shared))]
    rows += [
        {"section": "threshold", "key": "same_floor", "metric": "value", "value": lo},
        {"section": "threshold", "key": "diff_cap", "metric": "value", "value": hi},
        {"section": "knn", "key": f"tau={tau}", "metric": "accuracy", "value": acc},
        {"section": "knn", "key": f"tau={tau}", "metric": "abstain_rate", "value": abstain},
    ]
    summary = {
        "same_frac_ok": same_ok,
        "diff_frac_ok": diff_ok,
        "diff_frac_ok_sharing_one": diff_ok_one,
        "pair_frac_ok": min(same_ok, diff_ok),
        "same_floor": lo,
        "diff_cap": hi,
        "same_mean_overlap": float(same.mean()),
        "diff_mean_overlap_sharing_one": float(diff_ov[one].mean()) if one.any() else float("nan"),
        "knn_accuracy": acc,
        "knn_abstain_rate": abstain,
        "knn_tau": tau,
    }
    return ExperimentResult(LONG_COLUMNS, rows, summary)
