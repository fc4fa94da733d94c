"""Hot numeric kernels for the pairwise inequality terms.

The constrained-welfare row couples every ordered pair of samples through
(M - max(Y_s, Y_t)) / (e_s * e_t), an O(N^2) reduction that dominates build
time once datasets reach the tens of thousands of samples.  Each kernel has
a numba @njit implementation and a pure-numpy twin; the active backend is
chosen at import time.

Set HEAVISOLVE_PURE_NUMPY=1 to force the numpy path (or it is used
automatically when numba is unavailable).  ``benchmarks/bench_kernels.py``
compares the two.
"""
from __future__ import annotations

import os

import numpy as np

__all__ = ["pair_matrix", "pair_sum", "backend_name"]

_CHUNK = 2048


def pair_matrix_numpy(atom_idx: np.ndarray, y: np.ndarray, inv_e: np.ndarray,
                      m_bound: float, n_atoms: int) -> np.ndarray:
    """Accumulate (M - max(y_s, y_t)) * inv_e_s * inv_e_t into atom pairs.

    Returns the K x K matrix over ordered atom pairs; no 1/N^2 scaling.
    """
    n = y.shape[0]
    out = np.zeros(n_atoms * n_atoms)
    for lo in range(0, n, _CHUNK):
        hi = min(lo + _CHUNK, n)
        w = (m_bound - np.maximum.outer(y[lo:hi], y)) * np.outer(inv_e[lo:hi], inv_e)
        flat = atom_idx[lo:hi, None] * n_atoms + atom_idx[None, :]
        out += np.bincount(flat.ravel(), weights=w.ravel(), minlength=n_atoms * n_atoms)
    return out.reshape(n_atoms, n_atoms)


def pair_sum_numpy(y: np.ndarray, inv_e: np.ndarray, m_bound: float) -> float:
    """Sum of (M - max(y_s, y_t)) * inv_e_s * inv_e_t over ordered pairs."""
    n = y.shape[0]
    total = 0.0
    for lo in range(0, n, _CHUNK):
        hi = min(lo + _CHUNK, n)
        w = (m_bound - np.maximum.outer(y[lo:hi], y)) * np.outer(inv_e[lo:hi], inv_e)
        total += float(w.sum())
    return total


def _build_numba():
    from numba import njit

    @njit(cache=True)
    def pair_matrix_numba(atom_idx, y, inv_e, m_bound, n_atoms):
        n = y.shape[0]
        out = np.zeros((n_atoms, n_atoms))
        for s in range(n):
            ys = y[s]
            ws = inv_e[s]
            us = atom_idx[s]
            for t in range(n):
                yt = y[t]
                big = ys if ys > yt else yt
                out[us, atom_idx[t]] += (m_bound - big) * ws * inv_e[t]
        return out

    @njit(cache=True)
    def pair_sum_numba(y, inv_e, m_bound):
        n = y.shape[0]
        total = 0.0
        for s in range(n):
            ys = y[s]
            ws = inv_e[s]
            for t in range(n):
                yt = y[t]
                big = ys if ys > yt else yt
                total += (m_bound - big) * ws * inv_e[t]
        return total

    return pair_matrix_numba, pair_sum_numba


def _select():
    if os.environ.get("HEAVISOLVE_PURE_NUMPY", "").strip() in ("1", "true", "yes"):
        return pair_matrix_numpy, pair_sum_numpy, "numpy"
    try:
        matrix, total = _build_numba()
    except ImportError:
        return pair_matrix_numpy, pair_sum_numpy, "numpy"
    return matrix, total, "numba"


pair_matrix, pair_sum, _BACKEND = _select()


def backend_name() -> str:
    """Name of the active kernel backend, "numba" or "numpy"."""
    return _BACKEND
