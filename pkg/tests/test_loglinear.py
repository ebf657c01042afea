import math

import numpy as np
import pytest
from scipy import stats

from latentlab import LatentState, derive_stream
from latentlab.exceptions import DomainError
from latentlab.loglinear import (
    MovieVectors,
    emit_loglinear,
    expected_partition_function,
    orthonormal_completion,
    partition_function,
    sample_movie_vectors,
    sample_sphere,
    z_concentration_report,
)


def test_coordinate_variance():
    W = sample_movie_vectors(100_000, 25, 2.0, derive_stream(0, 0))
    n = W.W.size
    var = float(np.var(W.W))
    # variance of the sample variance of a Gaussian is 2 sigma^4 / n
    assert abs(var - 0.04) <= 3 * math.sqrt(2 * 0.04**2 / n)


def test_zero_scale_gives_zero_rows():
    assert not np.any(sample_movie_vectors(10, 4, 0.0, derive_stream(0, 0)).W)


def test_movie_vectors_deterministic():
    a = sample_movie_vectors(50, 5, 2.0, derive_stream(9, 1))
    b = sample_movie_vectors(50, 5, 2.0, derive_stream(9, 1))
    assert np.array_equal(a.W, b.W)


def test_movie_vectors_bytes_roundtrip(tmp_path):
    W = sample_movie_vectors(20, 3, 1.0, derive_stream(1, 1))
    assert np.array_equal(MovieVectors.from_bytes(W.to_bytes()).W, W.W)
    W.save(tmp_path / "w.bin")
    assert np.array_equal(MovieVectors.load(tmp_path / "w.bin").W, W.W)


def test_partition_function_zero_and_single():
    h = sample_sphere(4, derive_stream(0, 0))
    assert partition_function(np.zeros((7, 4)), h) == pytest.approx(7.0)
    w0 = np.array([[0.3, -0.2, 0.1, 0.5]])
    assert partition_function(w0, h) == pytest.approx(math.exp(float(w0[0] @ h.values)))


def test_partition_function_mean_over_redraws():
    rng = derive_stream(5, 0)
    h = sample_sphere(25, rng)
    zs = np.array([partition_function(sample_movie_vectors(1000, 25, 2.0, rng), h) for _ in range(200)])
    target = 1000 * math.exp(0.02)
    assert target == pytest.approx(expected_partition_function(1000, 25, 2.0))
    assert abs(zs.mean() - target) <= 3 * zs.std(ddof=1) / math.sqrt(zs.size)


def test_emit_uniform_when_weights_zero():
    h = sample_sphere(3, derive_stream(0, 0))
    x = emit_loglinear(np.zeros((10, 3)), h, 100_000, derive_stream(0, 1))
    assert stats.chisquare(np.bincount(x.movie_ids, minlength=10)).pvalue > 0.0027


def test_emit_two_movie_softmax():
    h = LatentState("sphere", [1.0, 0.0])
    W = np.array([[math.log(3), 0.0], [0.0, 0.0]])
    n = 100_000
    x = emit_loglinear(W, h, n, derive_stream(0, 2))
    freq = np.mean(x.movie_ids == 0)
    assert abs(freq - 0.75) <= 3 * math.sqrt(0.75 * 0.25 / n)


def test_emit_requires_positive_t():
    with pytest.raises(DomainError):
        emit_loglinear(np.zeros((3, 2)), LatentState("sphere", [1.0, 0.0]), 0, derive_stream(0, 0))


def test_z_concentration_large_m():
    rng = derive_stream(11, 0)
    W = sample_movie_vectors(100_000, 100, 2.0, rng)
    rep = z_concentration_report(W, 100, rng)
    assert rep.frac_within(0.02) == 1.0


def test_z_concentration_single_movie_dispersed_and_deterministic():
    W = sample_movie_vectors(1, 100, 2.0, derive_stream(0, 0))
    a = z_concentration_report(W, 20, derive_stream(0, 1))
    b = z_concentration_report(W, 20, derive_stream(0, 1))
    assert np.array_equal(a.ratios, b.ratios)
    assert a.max_dev > 0


def test_orthonormal_completion():
    h = sample_sphere(6, derive_stream(2, 0)).values
    U = orthonormal_completion(h)
    Q = np.column_stack([h, U])
    assert np.allclose(Q.T @ Q, np.eye(6), atol=1e-12)
