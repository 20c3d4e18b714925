"""Orthonormal DCT-II trajectory codec with optional high-frequency truncation."""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .motion import ConfigurationError, MotionSequence


@dataclass(frozen=True, eq=False)
class DctBasis:
    M: int
    basis: np.ndarray

    def defect(self):
        return float(np.max(np.abs(self.basis.T @ self.basis - np.eye(self.M))))


@dataclass(frozen=True, eq=False)
class TrajectoryCoefficients:
    """Leading ``L`` DCT coefficients per channel, shape (L, C)."""

    coeffs: np.ndarray
    M_original: int
    frame_rate: float = 25.0

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64)
        if c.ndim != 2:
            raise ValueError("coefficients must be 2D (L, C)")
        if not 1 <= c.shape[0] <= self.M_original:
            raise ValueError(f"need 1 <= L <= M, got L={c.shape[0]}, M={self.M_original}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "coeffs", c)

    @property
    def L(self):
        return self.coeffs.shape[0]


@lru_cache(maxsize=64)
def _basis_matrix(M):
    k = np.arange(M)[:, None]
    n = np.arange(M)[None, :]
    b = np.cos(np.pi * (2 * n + 1) * k / (2 * M))
    b[0] *= np.sqrt(1.0 / M)
    b[1:] *= np.sqrt(2.0 / M)
    b.setflags(write=False)
    return b


def build_basis(M):
    if M < 1:
        raise ConfigurationError(f"DCT size must be >= 1, got {M}")
    return DctBasis(int(M), _basis_matrix(int(M)))


def encode(x, L=None):
    M = x.n_frames
    L = M if L is None else L
    if not 1 <= L <= M:
        raise ValueError(f"retained coefficient count L={L} must lie in [1, {M}]")
    full = _basis_matrix(M) @ x.values
    return TrajectoryCoefficients(full[:L], M, x.frame_rate)


def decode(c):
    basis = _basis_matrix(c.M_original)
    return MotionSequence(basis[:c.L].T @ c.coeffs, c.frame_rate)


def encode_batch(values, L=None):
    """(B, M, C) frames -> (B, C, L) node-major coefficients used by the networks."""
    M = values.shape[1]
    L = M if L is None else L
    if not 1 <= L <= M:
        raise ValueError(f"retained coefficient count L={L} must lie in [1, {M}]")
    return np.einsum("lm,bmc->bcl", _basis_matrix(M)[:L], values)


def decode_batch(coeffs, M):
    """(B, C, L) node-major coefficients -> (B, M, C) frames."""
    L = coeffs.shape[-1]
    return np.einsum("lm,bcl->bmc", _basis_matrix(M)[:L], coeffs)
