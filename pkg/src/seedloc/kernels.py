"""Kernel dispatch: the compiled extension when built, the NumPy fallback otherwise.

Set SEEDLOC_KERNELS=numpy or SEEDLOC_KERNELS=compiled to force a backend;
the default ("auto") prefers the extension. All entry points normalize inputs
to C-contiguous float32 so both backends see identical bytes.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_np

_REQUESTED = os.environ.get("SEEDLOC_KERNELS", "auto")
if _REQUESTED not in ("auto", "compiled", "numpy"):
    raise ValueError(f"SEEDLOC_KERNELS must be auto, compiled or numpy, got {_REQUESTED!r}")

_compiled = None
if _REQUESTED in ("auto", "compiled"):
    try:
        from . import _simkern as _compiled
    except ImportError:
        _compiled = None
if _REQUESTED == "compiled" and _compiled is None:
    raise ImportError("SEEDLOC_KERNELS=compiled but the extension is not built")

_impl = _compiled if _compiled is not None else _kernels_np
BACKEND = "compiled" if _compiled is not None else "numpy"


def _f32(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.float32)
    if out.ndim != 2:
        raise ValueError(f"expected a (N, dim) array, got shape {out.shape}")
    return out


def _seed_idx(seeds) -> np.ndarray:
    s = np.ascontiguousarray(seeds, dtype=np.int64)
    if s.ndim != 1 or s.size < 1:
        raise ValueError("seeds must be a non-empty 1-D index array")
    return s


def degree_counts(feats: np.ndarray) -> np.ndarray:
    return _impl.degree_counts(_f32(feats))


def degree_counts_symqk(queries: np.ndarray, keys: np.ndarray) -> np.ndarray:
    return _impl.degree_counts_symqk(_f32(queries), _f32(keys))


def seed_dots(feats: np.ndarray, p_star: int) -> np.ndarray:
    return _impl.seed_dots(_f32(feats), int(p_star))


def seed_dots_symqk(queries: np.ndarray, keys: np.ndarray, p_star: int) -> np.ndarray:
    return _impl.seed_dots_symqk(_f32(queries), _f32(keys), int(p_star))


def mask_scores(feats: np.ndarray, seeds) -> np.ndarray:
    return _impl.mask_scores(_f32(feats), _seed_idx(seeds))


def mask_scores_symqk(queries: np.ndarray, keys: np.ndarray, seeds) -> np.ndarray:
    return _impl.mask_scores_symqk(_f32(queries), _f32(keys), _seed_idx(seeds))
