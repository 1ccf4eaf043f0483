"""NumPy fallback for the pairwise-similarity kernels.

Same contracts as the compiled extension: float32 inputs, float64 accumulation,
degree counts over the sign-of-dot adjacency without materializing the full
N x N matrix (row blocks keep memory at O(block * N)). BLAS decides the
within-dot summation order here; the compiled kernel accumulates strictly in
index order. Products of float32 values are exact in float64, so the two
backends can only disagree when a true sum sits inside the rounding noise of
zero.
"""

from __future__ import annotations

import numpy as np

_BLOCK_ROWS = 256


def _as64(arr: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(arr, dtype=np.float64)


def degree_counts(feats: np.ndarray) -> np.ndarray:
    """degrees[p] = #{q : f_p . f_q >= 0}, q ranging over all patches incl. p."""
    f = _as64(feats)
    n = f.shape[0]
    out = np.empty(n, dtype=np.int64)
    for a in range(0, n, _BLOCK_ROWS):
        b = min(a + _BLOCK_ROWS, n)
        out[a:b] = (f[a:b] @ f.T >= 0.0).sum(axis=1)
    return out


def degree_counts_symqk(queries: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """Degrees under the symmetrized query/key rule: q_p . k_q + k_p . q_q >= 0."""
    q = _as64(queries)
    k = _as64(keys)
    n = q.shape[0]
    out = np.empty(n, dtype=np.int64)
    for a in range(0, n, _BLOCK_ROWS):
        b = min(a + _BLOCK_ROWS, n)
        s = q[a:b] @ k.T + k[a:b] @ q.T
        out[a:b] = (s >= 0.0).sum(axis=1)
    return out


def seed_dots(feats: np.ndarray, p_star: int) -> np.ndarray:
    """f_q . f_{p*} for every patch q, float64."""
    f = _as64(feats)
    return f @ f[p_star]


def seed_dots_symqk(queries: np.ndarray, keys: np.ndarray, p_star: int) -> np.ndarray:
    """q_q . k_{p*} + k_q . q_{p*} for every patch q, float64."""
    q = _as64(queries)
    k = _as64(keys)
    return q @ k[p_star] + k @ q[p_star]


def mask_scores(feats: np.ndarray, seeds: np.ndarray) -> np.ndarray:
    """score[q] = sum over seeds s (ascending) of f_q . f_s, float64."""
    f = _as64(feats)
    s = np.asarray(seeds, dtype=np.int64)
    return (f @ f[s].T).sum(axis=1)


def mask_scores_symqk(queries: np.ndarray, keys: np.ndarray, seeds: np.ndarray) -> np.ndarray:
    """score[q] = sum over seeds s of (k_q . q_s + q_q . k_s), float64."""
    q = _as64(queries)
    k = _as64(keys)
    s = np.asarray(seeds, dtype=np.int64)
    return (k @ q[s].T + q @ k[s].T).sum(axis=1)
