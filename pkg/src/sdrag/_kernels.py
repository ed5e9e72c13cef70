"""Cosine-scoring kernels for the flat index scan.

Two implementations of the same float64 math: a numba ``@njit`` kernel and a
pure-numpy fallback. ``SDRAG_KERNEL`` selects one explicitly ("numba" or
"numpy"); unset, numba is used when importable. Both return, for each stored
row, cosine(row, query) computed in float64 over the float32 stored values,
with zero-norm rows scoring 0.0.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import ConfigError


def cosine_scores_numpy(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    m = matrix.astype(np.float64, copy=False)
    q = query.astype(np.float64, copy=False)
    dots = m @ q
    norms = np.sqrt(np.einsum("ij,ij->i", m, m))
    qn = float(np.sqrt(q @ q))
    denom = norms * qn
    out = np.zeros(m.shape[0], dtype=np.float64)
    np.divide(dots, denom, out=out, where=denom > 0.0)
    return out


def _build_numba_kernel():
    from numba import njit

    @njit(cache=True)
    def _scores(matrix, query):  # pragma: no cover - jitted
        n, d = matrix.shape
        qn = 0.0
        for j in range(d):
            qn += query[j] * query[j]
        qn = np.sqrt(qn)
        out = np.zeros(n, dtype=np.float64)
        for i in range(n):
            dot = 0.0
            nrm = 0.0
            for j in range(d):
                v = np.float64(matrix[i, j])
                dot += v * query[j]
                nrm += v * v
            denom = np.sqrt(nrm) * qn
            if denom > 0.0:
                out[i] = dot / denom
        return out

    def cosine_scores_numba(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
        return _scores(matrix, query.astype(np.float64, copy=False))

    return cosine_scores_numba


def _select():
    choice = os.environ.get("SDRAG_KERNEL", "").strip().lower()
    if choice not in ("", "numba", "numpy"):
        raise ConfigError(f"SDRAG_KERNEL must be 'numba' or 'numpy', got {choice!r}")
    if choice == "numpy":
        return cosine_scores_numpy, "numpy"
    try:
        return _build_numba_kernel(), "numba"
    except ImportError:
        if choice == "numba":
            raise ConfigError("SDRAG_KERNEL=numba but numba is not importable")
        return cosine_scores_numpy, "numpy"


cosine_scores, KERNEL_BACKEND = _select()
