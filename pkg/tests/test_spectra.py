import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgdgenlab.spectra import (
    BlockCovariance,
    DenseCovariance,
    DiagonalCovariance,
    Spectrum,
    make_spectrum,
    norm_A,
    norm_A_lambda,
    norm_A_S,
    sample_gaussian,
    truncated_trace,
)


def test_make_spectrum_examples():
    np.testing.assert_allclose(make_spectrum("polynomial", 3, c=2).values, [1, 0.25, 1 / 9], rtol=1e-15)
    np.testing.assert_array_equal(make_spectrum("constant", 4, v=1).values, [1, 1, 1, 1])
    np.testing.assert_allclose(make_spectrum("exponential", 2, c=1).values, [math.exp(-1), math.exp(-2)], rtol=1e-15)


@pytest.mark.parametrize(
    "args",
    [("polynomial", 0, 2.0), ("polynomial", -3, 2.0), ("polynomial", 3, 0.0), ("exponential", 3, -1.0), ("weird", 3, 1.0)],
)
def test_make_spectrum_rejects_bad_parameters(args):
    profile, p, c = args
    with pytest.raises(ValueError):
        make_spectrum(profile, p, c=c)


def test_spectrum_validation():
    with pytest.raises(ValueError):
        Spectrum([0.5, 1.0])
    with pytest.raises(ValueError):
        Spectrum([1.0, -0.1])
    with pytest.raises(ValueError):
        Spectrum([])


def test_norm_A_examples():
    A = DiagonalCovariance([2.0, 0.5])
    assert norm_A([1.0, 1.0], A) == pytest.approx(2.5)
    assert norm_A([0.0, 0.0], A) == 0.0
    assert norm_A([3.0, 4.0], np.eye(2)) == pytest.approx(25.0)
    assert norm_A([3.0, 4.0], np.eye(2), squared=False) == pytest.approx(5.0)
    with pytest.raises(ValueError):
        norm_A([1.0, 2.0, 3.0], A)


def test_norm_A_lambda_examples():
    A = DiagonalCovariance([2.0, 0.5])
    assert norm_A_lambda([1.0, 1.0], A, 1.0) == pytest.approx(1.5)
    assert norm_A_lambda([1.0, 1.0], A, 3.0) == pytest.approx(2.5)
    assert norm_A_lambda([1.0, 0.0], np.eye(2), 1.0) == pytest.approx(1.0)
    for bad in (0.0, -1.0):
        with pytest.raises(ValueError):
            norm_A_lambda([1.0, 1.0], A, bad)


def test_norm_A_S_examples():
    assert norm_A_S([3.0, -4.0], DiagonalCovariance([2.0, 0.5])) == pytest.approx(4.0)
    assert norm_A_S([0.0, 0.0], DiagonalCovariance([2.0, 0.5])) == 0.0
    v1 = np.array([1.0, 1.0]) / math.sqrt(2)
    v2 = np.array([1.0, -1.0]) / math.sqrt(2)
    A = 3.0 * np.outer(v1, v1) + 1.0 * np.outer(v2, v2)
    assert norm_A_S(v1, A) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        norm_A_S([1.0], DiagonalCovariance([2.0, 0.5]))


def test_truncated_trace_examples():
    spec = make_spectrum("polynomial", 3, c=2)
    assert truncated_trace(spec, 0.2) == pytest.approx(0.2 + 0.2 + 1 / 9)
    assert truncated_trace(spec, 5.0) == pytest.approx(spec.trace())
    assert truncated_trace(make_spectrum("constant", 3, v=1), 0.5) == pytest.approx(1.5)


def test_sample_gaussian_degenerate_and_identity():
    rng = np.random.default_rng(0)
    assert np.all(sample_gaussian(DiagonalCovariance([0.0, 0.0, 0.0]), rng, 10) == 0.0)
    x = sample_gaussian(DiagonalCovariance(np.ones(4)), rng, 100_000)
    assert np.max(np.abs(np.cov(x.T) - np.eye(4))) < 0.05


def test_sample_gaussian_diagonal_variances():
    rng = np.random.default_rng(1)
    n = 100_000
    x = sample_gaussian(DiagonalCovariance([1.0, 0.25]), rng, n)
    var = x.var(axis=0, ddof=1)
    se = np.array([1.0, 0.25]) * math.sqrt(2.0 / (n - 1))
    assert np.all(np.abs(var - [1.0, 0.25]) <= 3 * se)


def _random_psd(rng, p):
    M = rng.standard_normal((p, p))
    return M @ M.T / p


def test_covariance_representations_agree():
    rng = np.random.default_rng(2)
    sx = DenseCovariance(_random_psd(rng, 3))
    sz = DiagonalCovariance([0.5, 0.2])
    block = BlockCovariance(sx, sz)
    dense = DenseCovariance(block.matrix())
    v = rng.standard_normal(5)
    assert block.quad(v) == pytest.approx(dense.quad(v))
    np.testing.assert_allclose(block.matvec(v), dense.matvec(v), atol=1e-12)
    np.testing.assert_allclose(block.eigenvalues, dense.eigenvalues, atol=1e-12)
    assert block.trace() == pytest.approx(dense.trace())
    assert block.op_norm() == pytest.approx(dense.op_norm())
    for lam in (0.05, 0.3, 1.0):
        assert norm_A_lambda(v, block, lam) == pytest.approx(norm_A_lambda(v, dense, lam))
    assert norm_A_S(v, block) == pytest.approx(norm_A_S(v, dense))
    # the square root reproduces the covariance
    S = block.sqrt_apply(np.eye(5))
    np.testing.assert_allclose(S @ S.T, block.matrix(), atol=1e-12)


def test_block_with_cross_term():
    sx = DiagonalCovariance([1.0, 1.0])
    sz = DiagonalCovariance([0.5])
    B = np.array([[0.2], [0.1]])
    block = BlockCovariance(sx, sz, B)
    M = block.matrix()
    np.testing.assert_allclose(M[:2, 2], [0.2, 0.1])
    S = block.sqrt_apply(np.eye(3))
    np.testing.assert_allclose(S @ S.T, M, atol=1e-12)


def test_dense_rejects_non_psd():
    with pytest.raises(ValueError):
        DenseCovariance([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(ValueError):
        DenseCovariance([[1.0, 0.5], [0.0, 1.0]])


@settings(max_examples=60, deadline=None)
@given(p=st.integers(1, 12), seed=st.integers(0, 2**32 - 1), lam=st.floats(1e-3, 10.0))
def test_norm_orderings(p, seed, lam):
    rng = np.random.default_rng(seed)
    A = DenseCovariance(_random_psd(rng, p))
    v = rng.standard_normal(p)
    vals, vecs = A.eigh()
    oracle = float(np.sum(np.minimum(lam, vals) * (vecs.T @ v) ** 2))
    got = norm_A_lambda(v, A, lam)
    assert got == pytest.approx(oracle, rel=1e-10, abs=1e-14)
    assert got <= norm_A(v, A) * (1 + 1e-12) + 1e-15
    assert norm_A(v, A) <= A.trace() * norm_A_S(v, A) ** 2 * (1 + 1e-12) + 1e-15
    # monotone in lambda
    assert norm_A_lambda(v, A, lam / 2) <= got * (1 + 1e-12) + 1e-15


@settings(max_examples=40, deadline=None)
@given(p=st.integers(1, 10), seed=st.integers(0, 2**32 - 1), lam=st.floats(1e-3, 5.0))
def test_truncated_trace_oracle(p, seed, lam):
    vals = np.sort(np.random.default_rng(seed).uniform(0, 2, p))[::-1]
    assert truncated_trace(Spectrum(vals), lam) == pytest.approx(np.sum(np.minimum(lam, vals)))
    assert truncated_trace(Spectrum(vals), lam) <= Spectrum(vals).trace() + 1e-12
