"""Hot reduction kernels: per-joint distance loss and frame-norm error.

Each kernel has a numba ``@njit`` implementation and a pure-numpy twin.
Set ``ARNET_NUMBA=0`` in the environment to force the numpy path; the
numba path is also skipped silently when numba cannot be imported.
"""
import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False


def numba_requested():
    return os.environ.get("ARNET_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")


USE_NUMBA = HAVE_NUMBA and numba_requested()


# --- numpy reference path -------------------------------------------------

def joint_norm_loss_np(diff, joint_dim, squared):
    """Mean per-joint Euclidean norm of ``diff`` and its gradient.

    ``diff`` has shape (..., C) with C divisible by ``joint_dim``.  The mean
    runs over every joint of every leading index.  Joints at exactly zero
    distance receive a zero subgradient.
    """
    d = diff.reshape(-1, joint_dim)
    count = d.shape[0]
    if squared:
        sq = np.einsum("ij,ij->i", d, d)
        return float(sq.sum() / count), (2.0 / count) * diff
    norms = np.sqrt(np.einsum("ij,ij->i", d, d))
    safe = np.where(norms > 0.0, norms, 1.0)
    grad = np.where(norms[:, None] > 0.0, d / safe[:, None], 0.0) / count
    return float(norms.sum() / count), grad.reshape(diff.shape).astype(diff.dtype, copy=False)


def frame_norms_np(diff):
    """Euclidean norm over the last axis of a 2D array."""
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


# --- numba path -----------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _joint_norm_loss_nb(d, squared):
        count = d.shape[0]
        jd = d.shape[1]
        grad = np.zeros_like(d)
        total = 0.0
        for i in range(count):
            s = 0.0
            for j in range(jd):
                s += d[i, j] * d[i, j]
            if squared:
                total += s
                for j in range(jd):
                    grad[i, j] = 2.0 * d[i, j] / count
            else:
                r = np.sqrt(s)
                total += r
                if r > 0.0:
                    for j in range(jd):
                        grad[i, j] = d[i, j] / r / count
        return total / count, grad

    @njit(cache=True)
    def _frame_norms_nb(d):
        out = np.empty(d.shape[0])
        for i in range(d.shape[0]):
            s = 0.0
            for j in range(d.shape[1]):
                s += d[i, j] * d[i, j]
            out[i] = np.sqrt(s)
        return out


def joint_norm_loss_nb(diff, joint_dim, squared):
    d = np.ascontiguousarray(diff).reshape(-1, joint_dim)
    loss, grad = _joint_norm_loss_nb(d, bool(squared))
    return float(loss), grad.reshape(diff.shape)


def frame_norms_nb(diff):
    return _frame_norms_nb(np.ascontiguousarray(diff, dtype=np.float64))


def joint_norm_loss(diff, joint_dim, squared=False):
    if USE_NUMBA:
        return joint_norm_loss_nb(diff, joint_dim, squared)
    return joint_norm_loss_np(diff, joint_dim, squared)


def frame_norms(diff):
    if USE_NUMBA:
        return frame_norms_nb(diff)
    return frame_norms_np(diff)
