import math
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latentlab import GenreStructure, LatentState, RatingSample, derive_stream, lipschitz_transfer_bound, norm_error
from latentlab.exceptions import DimensionError, DomainError


def test_norm_error_identity():
    assert norm_error([0.5, 0.5], [0.5, 0.5], "l1") == 0.0


def test_norm_error_zero_estimate():
    assert norm_error([0, 0], [0.5, 0.5], "l1") == 1.0


def test_norm_error_orthogonal_l2():
    assert norm_error([1, 0], [0, 1], "l2") == pytest.approx(math.sqrt(2))


def test_norm_error_rejects_bad_input():
    with pytest.raises(DimensionError):
        norm_error([1, 0, 0], [1, 0])
    with pytest.raises(DomainError):
        norm_error([1, 0], [0, 0])
    with pytest.raises(DomainError):
        norm_error([1, 0], [1, 0], "linf")


@given(st.lists(st.integers(-1000, 1000).map(lambda i: i / 100), min_size=1, max_size=8), st.sampled_from(["l1", "l2"]))
def test_norm_error_nonnegative_and_zero_on_self(v, norm):
    v = np.array(v)
    if not np.any(v):
        return
    assert norm_error(v, v, norm) == 0.0
    assert norm_error(-v, v, norm) == pytest.approx(2.0)


@pytest.mark.parametrize("alpha,eps,hn,expected", [(2, 0.1, 1, 0.2), (0, 0.5, 3, 0.0), (1, 0, 5, 0.0)])
def test_lipschitz_transfer_bound(alpha, eps, hn, expected):
    assert lipschitz_transfer_bound(alpha, eps, hn) == pytest.approx(expected)


def test_lipschitz_transfer_bound_rejects_negative():
    with pytest.raises(DomainError):
        lipschitz_transfer_bound(-1, 0.1, 1)


def test_derive_stream_deterministic():
    a = derive_stream(42, 0).random(1000)
    b = derive_stream(42, 0).random(1000)
    assert np.array_equal(a, b)


def test_derive_stream_separates_streams():
    assert not np.array_equal(derive_stream(42, 0).random(1000), derive_stream(42, 1).random(1000))


def test_derive_stream_thread_independent():
    ref = derive_stream(42, 7).random(1000)
    out = [None] * 8

    def work(i):
        out[i] = derive_stream(42, 7).random(1000)

    threads = [threading.Thread(target=work, args=(i,)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(np.array_equal(ref, o) for o in out)


def test_structure_roundtrip_and_digest():
    g = GenreStructure(6, ([0, 1, 2], [2, 3, 4]), "bounded-overlap", 0.34)
    again = GenreStructure.from_json(g.to_json())
    assert again == g
    assert again.digest() == g.digest()
    assert g.k == 2 and g.m == 3
    assert list(g.union([0, 1])) == [0, 1, 2, 3, 4]


def test_structure_validation():
    with pytest.raises(DomainError):
        GenreStructure(4, ([0, 1], [1, 2, 3]), "bounded-overlap", 0.5)
    with pytest.raises(DomainError):
        GenreStructure(3, ([0, 5],), "disjoint-partition")


def test_latent_state_kinds():
    h = LatentState("binary", [1, 0, 1])
    assert h.sparsity == 2
    assert np.allclose(h.as_simplex().values, [0.5, 0, 0.5])
    with pytest.raises(DomainError):
        LatentState("binary", [0.5, 0.5])
    with pytest.raises(DomainError):
        LatentState("sphere", [1.0, 1.0])
    with pytest.raises(DomainError):
        LatentState("simplex", [0.7, 0.7])


def test_rating_sample_modes():
    x = RatingSample([0, 2, 2], 4, "multiset")
    assert x.T == 3
    assert list(x.counts) == [1, 0, 2, 0]
    with pytest.raises(DomainError):
        RatingSample([0, 0], 4, "set")
    with pytest.raises(DomainError):
        RatingSample([4], 4)
