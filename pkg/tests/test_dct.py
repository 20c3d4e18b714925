import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from arnet.dct import TrajectoryCoefficients, build_basis, decode, encode
from arnet.motion import ConfigurationError, MotionSequence


def dct_direct(x):
    """O(M^2) orthonormal DCT-II by explicit summation, one channel."""
    M = len(x)
    out = np.zeros(M)
    for k in range(M):
        s = np.sqrt(1.0 / M) if k == 0 else np.sqrt(2.0 / M)
        acc = 0.0
        for n in range(M):
            acc += x[n] * np.cos(np.pi * (2 * n + 1) * k / (2 * M))
        out[k] = s * acc
    return out


def test_basis_m1():
    np.testing.assert_array_equal(build_basis(1).basis, [[1.0]])


def test_basis_m4_first_row():
    np.testing.assert_allclose(build_basis(4).basis[0], [0.5, 0.5, 0.5, 0.5], atol=1e-15)


@pytest.mark.parametrize("M", [1, 2, 3, 7, 20, 35, 64])
def test_basis_orthonormal(M):
    assert build_basis(M).defect() <= 1e-9


def test_basis_rejects_zero():
    with pytest.raises(ConfigurationError):
        build_basis(0)


def test_constant_channel_is_dc_only():
    M, c = 12, 0.37
    coef = encode(MotionSequence(np.full((M, 3), c)), M).coeffs
    np.testing.assert_allclose(coef[0], c * np.sqrt(M), atol=1e-12)
    assert np.max(np.abs(coef[1:])) <= 1e-9


def test_encode_matches_direct_summation(rng):
    x = rng.normal(size=(10, 3))
    coef = encode(MotionSequence(x), 10).coeffs
    for c in range(3):
        assert np.max(np.abs(coef[:, c] - dct_direct(x[:, c]))) <= 1e-12


def test_round_trip_full(rng):
    x = MotionSequence(rng.normal(size=(20, 6)))
    assert np.max(np.abs(decode(encode(x)).values - x.values)) <= 1e-9


def test_zero_coefficients_decode_to_zero():
    c = TrajectoryCoefficients(np.zeros((4, 3)), 9)
    out = decode(c)
    assert out.n_frames == 9 and np.all(out.values == 0)


def test_truncation_removes_top_harmonic():
    M = 8
    top = build_basis(M).basis[M - 1]
    x = MotionSequence(np.stack([top, top, top], axis=1))
    out = decode(encode(x, M - 2))
    assert np.max(np.abs(out.values)) <= 1e-12


def test_encode_rejects_l_above_m(rng):
    with pytest.raises(ValueError):
        encode(MotionSequence(rng.normal(size=(5, 3))), 6)


def test_coefficients_invariants():
    with pytest.raises(ValueError):
        TrajectoryCoefficients(np.zeros((6, 3)), 5)
    with pytest.raises(ValueError):
        TrajectoryCoefficients(np.full((2, 3), np.inf), 5)


_seq = st.integers(1, 24).flatmap(
    lambda M: arrays(np.float64, (M, 3), elements=st.floats(-10, 10)))


@settings(max_examples=50, deadline=None)
@given(_seq, _seq, st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(x, y, a, b):
    if x.shape != y.shape:
        y = np.resize(y, x.shape)
    lhs = encode(MotionSequence(a * x + b * y)).coeffs
    rhs = a * encode(MotionSequence(x)).coeffs + b * encode(MotionSequence(y)).coeffs
    assert np.max(np.abs(lhs - rhs)) <= 1e-9


@settings(max_examples=50, deadline=None)
@given(_seq)
def test_parseval(x):
    coef = encode(MotionSequence(x)).coeffs
    assert abs(np.linalg.norm(coef) - np.linalg.norm(x)) <= 1e-9


@settings(max_examples=30, deadline=None)
@given(_seq)
def test_truncation_error_non_increasing(x):
    M = x.shape[0]
    seq = MotionSequence(x)
    errs = [np.linalg.norm(decode(encode(seq, L)).values - x) for L in range(1, M + 1)]
    assert all(b <= a + 1e-9 for a, b in zip(errs, errs[1:]))
