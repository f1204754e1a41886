"""Hot quadrature kernels with a numba path and a pure-numpy fallback.

The backend is chosen at import time: numba is used when it can be imported
and the environment variable ``QUASIDG_NUMBA`` is not set to ``0``.  Call
:func:`set_backend` to switch at runtime (tests and the benchmark do this).
"""
import os
import warnings

import numpy as np

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def decorator(func):
            return func
        return decorator


def _default_backend():
    flag = os.environ.get("QUASIDG_NUMBA", "1").strip().lower()
    if flag in ("0", "false", "no", "off"):
        return "numpy"
    if not HAVE_NUMBA:
        warnings.warn("numba not available, falling back to numpy kernels")
        return "numpy"
    return "numba"


_BACKEND = _default_backend()


def backend():
    return _BACKEND


def set_backend(name):
    """Select ``"numba"`` or ``"numpy"``; returns the previous backend."""
    global _BACKEND
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown kernel backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    previous, _BACKEND = _BACKEND, name
    return previous


# ---------------------------------------------------------------- numpy


def _mass_blocks_np(phi, w):
    # one GEMM against the pointwise outer products phi_i phi_j
    nq, m = phi.shape
    P = (phi[:, :, None] * phi[:, None, :]).reshape(nq, m * m)
    return (w @ P).reshape(len(w), m, m)


def _moments_np(phi, w):
    return w @ phi


# ---------------------------------------------------------------- numba


@njit(cache=True, fastmath=True)
def _mass_blocks_nb(phi, w):
    nb, nq = w.shape
    m = phi.shape[1]
    P = np.empty((m * (m + 1) // 2, nq))
    idx = 0
    for i in range(m):
        for j in range(i, m):
            for g in range(nq):
                P[idx, g] = phi[g, i] * phi[g, j]
            idx += 1
    out = np.empty((nb, m, m))
    for b in range(nb):
        idx = 0
        for i in range(m):
            for j in range(i, m):
                s = 0.0
                for g in range(nq):
                    s += w[b, g] * P[idx, g]
                out[b, i, j] = s
                out[b, j, i] = s
                idx += 1
    return out


@njit(cache=True, fastmath=True)
def _moments_nb(phi, w):
    nb, nq = w.shape
    m = phi.shape[1]
    phiT = np.ascontiguousarray(phi.T)
    out = np.empty((nb, m))
    for b in range(nb):
        for i in range(m):
            s = 0.0
            for g in range(nq):
                s += w[b, g] * phiT[i, g]
            out[b, i] = s
    return out


# ---------------------------------------------------------------- dispatch


def mass_blocks(phi, w):
    """Weighted mass blocks ``sum_g w[b,g] phi[g,i] phi[g,j]``.

    Parameters
    ----------
    phi : (nq, m) array
        Basis values at the quadrature points.
    w : (..., nq) array
        Pointwise weights (quadrature weight times Jacobian times coefficient).

    Returns
    -------
    (..., m, m) array
    """
    phi = np.ascontiguousarray(phi, dtype=float)
    w = np.asarray(w, dtype=float)
    lead = w.shape[:-1]
    w2 = np.ascontiguousarray(w.reshape(-1, w.shape[-1]))
    if _BACKEND == "numba":
        out = _mass_blocks_nb(phi, w2)
    else:
        out = _mass_blocks_np(phi, w2)
    m = phi.shape[1]
    return out.reshape(lead + (m, m))


def moments(phi, w):
    """Weighted moments ``sum_g w[b,g] phi[g,i]``; shape ``(..., m)``."""
    phi = np.ascontiguousarray(phi, dtype=float)
    w = np.asarray(w, dtype=float)
    lead = w.shape[:-1]
    w2 = np.ascontiguousarray(w.reshape(-1, w.shape[-1]))
    if _BACKEND == "numba":
        out = _moments_nb(phi, w2)
    else:
        out = _moments_np(phi, w2)
    return out.reshape(lead + (phi.shape[1],))
