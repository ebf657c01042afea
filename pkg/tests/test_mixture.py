import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from latentlab import LatentState, derive_stream
from latentlab.exceptions import DomainError, TieError
from latentlab.mixture import (
    MixtureModel,
    balanced_hyperplane,
    emit,
    emit_batch,
    label_hyperplane,
    label_likes_movie,
    make_structure,
    movie_genre_matrix,
    sample_user,
)


def test_shared_core_counts(rng):
    s = make_structure("shared-core", m=4, k=2, p=0.5, rng=rng)
    assert s.num_movies == 6
    core = np.intersect1d(s.genres[0], s.genres[1])
    assert core.size == 2
    assert all(np.setdiff1d(g, core).size == 2 for g in s.genres)


def test_disjoint_partition(rng):
    s = make_structure("disjoint-partition", M=6, k=3, rng=rng)
    assert sorted(np.concatenate(s.genres).tolist()) == list(range(6))
    assert all(g.size == 2 for g in s.genres)


def test_bounded_overlap_pairwise_cap(rng):
    s = make_structure("bounded-overlap", M=950, m=100, k=10, delta=0.05, rng=rng)
    for a, b in itertools.combinations(s.genres, 2):
        assert len(set(a.tolist()) & set(b.tolist())) <= 5
    assert all(np.unique(g).size == 100 for g in s.genres)


def test_make_structure_rejects_bad_params(rng):
    with pytest.raises(DomainError):
        make_structure("disjoint-partition", M=7, k=3, rng=rng)
    with pytest.raises(DomainError):
        make_structure("shared-core", m=4, k=2, p=1.5, rng=rng)
    with pytest.raises(DomainError):
        make_structure("nope", k=2, rng=rng)


def test_sample_user_forced(rng):
    assert np.array_equal(sample_user(5, 5, rng).values, np.ones(5))


def test_sample_user_balanced():
    rng = derive_stream(1, 0)
    first = sum(sample_user(2, 1, rng).values[0] for _ in range(10_000))
    # chi-square against 50/50
    assert stats.chisquare([first, 10_000 - first]).pvalue > 0.0027


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12).flatmap(lambda k: st.tuples(st.just(k), st.integers(1, k))), st.integers(0, 1000))
def test_sample_user_popcount(ks, seed):
    k, s = ks
    assert sample_user(k, s, derive_stream(seed, 0)).sparsity == s


def test_emit_whole_union(rng):
    st_ = make_structure("shared-core", m=6, k=3, p=0.5, rng=rng)
    h = LatentState("binary", [1, 0, 1])
    union = st_.union([0, 2])
    x = emit(MixtureModel(st_, 2, union.size), h, rng)
    assert sorted(x.movie_ids.tolist()) == union.tolist()


@pytest.mark.parametrize("mode", ["without-replacement", "independent"])
def test_emit_disjoint_stays_in_genre(rng, mode):
    st_ = make_structure("disjoint-partition", M=40, k=4, rng=rng)
    model = MixtureModel(st_, 1, 8, mode)
    for _ in range(50):
        h = sample_user(4, 1, rng)
        x = emit(model, h, rng)
        assert np.isin(x.movie_ids, st_.genres[int(h.support[0])]).all()


def test_emit_uniform_over_genre():
    rng = derive_stream(7, 0)
    st_ = make_structure("shared-core", m=20, k=3, p=0.5, rng=rng)
    model = MixtureModel(st_, 1, 10)
    h = LatentState("binary", [1, 0, 0])
    users = [h] * 100_000
    ids = np.concatenate(emit_batch(model, users, rng))
    counts = np.bincount(ids, minlength=st_.num_movies)[st_.genres[0]]
    assert counts.sum() == 1_000_000
    assert stats.chisquare(counts).pvalue > 0.0027


def test_emit_batch_matches_set_semantics(rng):
    st_ = make_structure("shared-core", m=30, k=4, p=0.5, rng=rng)
    model = MixtureModel(st_, 2, 12)
    users = [sample_user(4, 2, rng) for _ in range(200)]
    for u, ids in zip(users, emit_batch(model, users, rng)):
        assert np.unique(ids).size == 12
        assert np.isin(ids, st_.union(u.support)).all()


def test_movie_genre_matrix_disjoint():
    from latentlab import GenreStructure

    s = GenreStructure(4, ([0, 1], [2, 3]), "disjoint-partition")
    A = movie_genre_matrix(s)
    assert np.allclose(A[:, 0], [0.5, 0.5, 0, 0])
    assert np.allclose(A[:, 1], [0, 0, 0.5, 0.5])


@pytest.mark.parametrize("variant,kw", [
    ("shared-core", dict(m=10, k=4, p=0.3)),
    ("disjoint-partition", dict(M=30, k=5)),
    ("bounded-overlap", dict(M=200, m=20, k=6, delta=0.1)),
])
def test_movie_genre_matrix_columns_sum_to_one(rng, variant, kw):
    A = movie_genre_matrix(make_structure(variant, rng=rng, **kw))
    assert np.allclose(A.sum(axis=0), 1.0, atol=1e-12)


def test_movie_genre_matrix_full_core_rank_one(rng):
    A = movie_genre_matrix(make_structure("shared-core", m=5, k=3, p=1.0, rng=rng))
    assert np.linalg.matrix_rank(A) == 1


def test_label_hyperplane_examples():
    assert label_hyperplane([1, 0], LatentState("binary", [1, 0])) == 1
    assert label_hyperplane([1, 0], LatentState("binary", [0, 1])) == -1
    with pytest.raises(TieError):
        label_hyperplane(np.ones(4), LatentState("binary", [1, 1, 0, 0]))


def test_label_likes_movie(rng):
    st_ = make_structure("disjoint-partition", M=6, k=3, rng=rng)
    h = LatentState("binary", [0, 1, 0])
    assert label_likes_movie(st_, h, int(st_.genres[1][0])) == 1
    assert label_likes_movie(st_, h, int(st_.genres[0][0])) == 0
    sc = make_structure("shared-core", m=6, k=3, p=0.5, rng=rng)
    core = np.intersect1d(sc.genres[0], sc.genres[1])
    for j in range(3):
        hj = np.zeros(3)
        hj[j] = 1
        assert all(label_likes_movie(sc, hj, int(c)) == 1 for c in core)


@pytest.mark.parametrize("k,s", [(4, 1), (10, 1), (20, 1), (6, 3)])
def test_balanced_hyperplane_splits_latents(k, s):
    w = balanced_hyperplane(k, s, derive_stream(3, k))
    labels = [label_hyperplane(w, np.isin(np.arange(k), c).astype(float))
              for c in itertools.combinations(range(k), s)]
    assert sum(l == 1 for l in labels) * 2 == len(labels)
