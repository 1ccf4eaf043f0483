"""Binary patch-similarity graph: sign-of-dot adjacency, degrees, inverse-degree field.

Two patches are adjacent when their feature dot product is non-negative (exact
zeros take the edge). The symmetrized query/key variant signs
q_p . k_q + k_p . q_q instead, which is symmetric by construction. Degrees
count all patches including the patch itself; self-dots are sums of squares,
so every degree is at least 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .tensorio import FeatureMap

SIMILARITY_VARIANTS = ("key", "query", "value", "sym-qk")


@dataclass(frozen=True)
class SimilarityMode:
    """Which features feed the pairwise sign rule.

    key/query/value sign the dot of that single feature map; sym-qk signs the
    symmetrized query-key product and needs both maps.
    """

    variant: str

    def __post_init__(self):
        if self.variant not in SIMILARITY_VARIANTS:
            raise ValueError(
                f"unknown similarity mode {self.variant!r}, expected one of "
                f"{SIMILARITY_VARIANTS}"
            )

    @property
    def is_sym_qk(self) -> bool:
        return self.variant == "sym-qk"

    @property
    def required_roles(self) -> tuple[str, ...]:
        return ("query", "key") if self.is_sym_qk else (self.variant,)


@dataclass(frozen=True, eq=False)
class DegreeMap:
    """Per-patch degree vector over the similarity graph.

    Plain dot-sign degrees are always >= 1 (the self-dot is a sum of squares);
    the symmetrized query/key rule carries no such self-edge guarantee, so the
    type admits zero degrees.
    """

    grid_h: int
    grid_w: int
    degrees: np.ndarray

    def __post_init__(self):
        deg = np.ascontiguousarray(self.degrees, dtype=np.int64)
        n = self.grid_h * self.grid_w
        if deg.shape != (n,):
            raise ValueError(f"degrees shape {deg.shape} does not match N={n}")
        if deg.min(initial=0) < 0 or deg.max(initial=0) > n:
            raise ValueError(f"degrees must lie in [0, {n}]")
        object.__setattr__(self, "degrees", deg)

    @property
    def num_patches(self) -> int:
        return self.grid_h * self.grid_w


def _check_index(fm: FeatureMap, p: int) -> None:
    if not 0 <= p < fm.num_patches:
        raise IndexError(f"patch index {p} out of range [0, {fm.num_patches})")


def check_same_geometry(queries: FeatureMap, keys: FeatureMap) -> None:
    if (queries.grid_h, queries.grid_w, queries.dim) != (keys.grid_h, keys.grid_w, keys.dim):
        raise ValueError(
            f"geometry mismatch: queries {queries.grid_h}x{queries.grid_w}x{queries.dim} "
            f"vs keys {keys.grid_h}x{keys.grid_w}x{keys.dim}"
        )


def similarity_sign(features: FeatureMap, p: int, q: int) -> bool:
    """True iff f_p . f_q >= 0 (float64 accumulation)."""
    _check_index(features, p)
    _check_index(features, q)
    f = features.data.astype(np.float64)
    return bool(float(f[p] @ f[q]) >= 0.0)


def similarity_sign_symqk(queries: FeatureMap, keys: FeatureMap, p: int, q: int) -> bool:
    """True iff q_p . k_q + k_p . q_q >= 0."""
    check_same_geometry(queries, keys)
    _check_index(queries, p)
    _check_index(queries, q)
    qd = queries.data.astype(np.float64)
    kd = keys.data.astype(np.float64)
    return bool(float(qd[p] @ kd[q]) + float(kd[p] @ qd[q]) >= 0.0)


def degree_map(features: FeatureMap) -> DegreeMap:
    """Degree of every patch, streamed without materializing the adjacency."""
    counts = kernels.degree_counts(features.data)
    return DegreeMap(features.grid_h, features.grid_w, counts)


def degree_map_symqk(queries: FeatureMap, keys: FeatureMap) -> DegreeMap:
    check_same_geometry(queries, keys)
    counts = kernels.degree_counts_symqk(queries.data, keys.data)
    return DegreeMap(queries.grid_h, queries.grid_w, counts)


def adjacency_dense(features: FeatureMap) -> np.ndarray:
    """Dense boolean adjacency; debug path, must agree exactly with degree_map."""
    f = features.data.astype(np.float64)
    return f @ f.T >= 0.0


def adjacency_dense_symqk(queries: FeatureMap, keys: FeatureMap) -> np.ndarray:
    check_same_geometry(queries, keys)
    q = queries.data.astype(np.float64)
    k = keys.data.astype(np.float64)
    return q @ k.T + k @ q.T >= 0.0


def inverse_degree_field(dm: DegreeMap) -> np.ndarray:
    """1/d_p per patch (float64). Dot-sign degrees are always >= 1; a zero
    degree (possible only under sym-qk) has no finite reciprocal and raises."""
    if dm.degrees.min(initial=1) < 1:
        raise ValueError("inverse degree undefined for degree-0 patches")
    return 1.0 / dm.degrees.astype(np.float64)
