"""Neighbour-graph detection experiment."""

from __future__ import annotations

import functools
import math

import numpy as np

from ..core import LatentState, derive_stream
from ..graphs import (
    BlockParams,
    block_params,
    contiguity_condition,
    distinguish,
    er_sample,
    sbm_sample,
    verify_gsbm_bounds,
)
from ..mixture import MixtureModel, emit_batch, make_structure
from .base import NUMBER, POS_INT, ExperimentResult, as_float, map_trials, register

LONG_COLUMNS = ["section", "key", "metric", "value"]


@register(
    "manifold-detect",
    "matched block-model vs random-graph distinguishers and neighbour-graph block frequencies",
    {
        "n_graphs": {"type": "integer", "minimum": 50},
        "contig_m": POS_INT, "contig_T": POS_INT, "contig_tau": POS_INT, "contig_p": NUMBER, "contig_k": POS_INT,
        "viol_N": POS_INT, "viol_k": POS_INT, "viol_c_in": NUMBER, "viol_c_out": NUMBER,
        "gsbm_m": POS_INT, "gsbm_T": POS_INT, "gsbm_p": NUMBER, "gsbm_k": POS_INT, "gsbm_tau": POS_INT,
        "gsbm_N": POS_INT,
    },
)
def run_manifold(cfg, threads=1) -> ExperimentResult:
    """Streams: contiguity distinguisher on seed ``seed``; violating regime on
    ``seed + 1`` and its block-formula variant on ``seed + 2``; neighbour-graph
    users on stream ``(seed, 0)``."""
    seed = int(cfg["seed"])
    n_graphs = int(cfg["n_graphs"])
    mapper = functools.partial(map_trials, threads=threads)

    m, T, tau = int(cfg["contig_m"]), int(cfg["contig_T"]), int(cfg["contig_tau"])
    N = int(round((m / (T * T)) ** tau))
    bp = block_params(T, m, tau, as_float(cfg["contig_p"]), int(cfg["contig_k"]), N)
    cc = contiguity_condition(bp)
    res_c = distinguish(lambda r: sbm_sample(bp.N, bp.k, bp.a, bp.b, r),
                        lambda r: er_sample(bp.N, bp.phi, r), n_graphs, seed=seed, mapper=mapper)

    vN, vk = int(cfg["viol_N"]), int(cfg["viol_k"])
    q_in, q_out = as_float(cfg["viol_c_in"]) / vN, as_float(cfg["viol_c_out"]) / vN
    vp = BlockParams.from_ab(q_in, q_out, vk, vN)
    vc = contiguity_condition(vp)
    res_v = distinguish(lambda r: sbm_sample(vN, vk, q_in, q_out, r),
                        lambda r: er_sample(vN, vp.phi, r), n_graphs, seed=seed + 1, mapper=mapper)

    # the same violation built from the overlap block formulas, reported only
    fp = block_params(T, m, tau, as_float(cfg["contig_p"]), vk, vN)
    fc = contiguity_condition(fp)
    res_f = distinguish(lambda r: sbm_sample(vN, vk, fp.a, fp.b, r),
                        lambda r: er_sample(vN, fp.phi, r), n_graphs, seed=seed + 2, mapper=mapper)

    gm, gT, gk, gN = int(cfg["gsbm_m"]), int(cfg["gsbm_T"]), int(cfg["gsbm_k"]), int(cfg["gsbm_N"])
    gp, gtau = as_float(cfg["gsbm_p"]), int(cfg["gsbm_tau"])
    rng = derive_stream(seed, 0)
    st = make_structure("shared-core", m=gm, k=gk, p=gp, rng=rng)
    genres = rng.integers(0, gk, size=gN)
    users = []
    for g in genres:
        h = np.zeros(gk)
        h[g] = 1.0
        users.append(LatentState("binary", h))
    samples = emit_batch(MixtureModel(st, 1, gT), users, rng)
    gb = block_params(gT, gm, gtau, gp, gk, gN)
    rep = verify_gsbm_bounds(samples, genres, st, gtau, gb)

    rows = []
    for name, res, params, chk in (("contiguity", res_c, bp, cc), ("violating", res_v, vp, vc),
                                   ("violating_formula", res_f, fp, fc)):
        key = f"N={params.N};k={params.k}"
        rows += [{"section": name, "key": key, "metric": f"auc_{s}", "value": v} for s, v in res.auc.items()]
        rows += [
            {"section": name, "key": key, "metric": "combined_auc", "value": res.combined_auc},
            {"section": name, "key": key, "metric": "a", "value": params.a},
            {"section": name, "key": key, "metric": "b", "value": params.b},
            {"section": name, "key": key, "metric": "lhs", "value": chk.lhs},
            {"section": name, "key": key, "metric": "rhs", "value": chk.rhs},
        ]
    key = f"N={gN};k={gk}"
    rows += [{"section": "gsbm", "key": key, "metric": f, "value": getattr(rep, f)}
             for f in ("max_in_prob", "min_out_prob", "a", "b", "sigma_in", "sigma_out", "n_conforming", "conforms")]
    summary = {
        "contiguity": {"N": bp.N, "k": bp.k, "a": bp.a, "b": bp.b, "holds": cc.holds, "margin": cc.margin,
                       "auc": res_c.auc, "combined_auc": res_c.combined_auc},
        "violating": {"N": vN, "k": vk, "a": q_in, "b": q_out, "holds": vc.holds,
                      "excess": vc.lhs / vc.rhs if vc.rhs else math.inf,
                      "auc": res_v.auc, "combined_auc": res_v.combined_auc},
        "violating_formula": {"N": vN, "k": vk, "a": fp.a, "b": fp.b, "holds": fc.holds,
                              "excess": fc.lhs / fc.rhs if fc.rhs else math.inf,
                              "auc": res_f.auc, "combined_auc": res_f.combined_auc},
        "gsbm": {"max_in_prob": rep.max_in_prob, "min_out_prob": rep.min_out_prob, "a": rep.a, "b": rep.b,
                 "conforms": rep.conforms, "n_conforming": rep.n_conforming},
    }
    return ExperimentResult(LONG_COLUMNS, rows, summary)
