"""Single-object localization from patch features.

Pipeline per image: pick the lowest-degree patch as the seed, expand it to the
low-degree patches that correlate positively with it, build a binary mask from
the summed seed correlations, keep the 4-connected component containing the
seed, and return that component's pixel bounding box.

Everything is a pure function with pinned tie-breaking (ascending linear patch
index), so the whole pipeline is deterministic. Ordering ties "arbitrarily" is
allowed by the construction; pinning them keeps reruns byte-identical.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels, patchgraph
from .boxes import DegenerateBoxError, PixelBox, patch_rect_to_pixels
from .patchgraph import DegreeMap, SimilarityMode, check_same_geometry
from .tensorio import FeatureMap, ImageManifest

DEFAULT_EXPANSION_BUDGET = 100


@dataclass(frozen=True, eq=False)
class SeedSet:
    """Initial seed, the k lowest-degree candidates, and the correlated subset.

    Plain dot-sign expansion always keeps the initial seed (its self-dot is a
    sum of squares). The symmetrized query/key filter signs 2 * q_p . k_p at
    the seed itself, which can be negative, so there the initial seed may drop
    out and the seed set may even be empty.
    """

    initial: int
    expansion_budget: int
    candidates: np.ndarray  # int64, (degree asc, index asc) order
    seeds: np.ndarray       # int64, ascending index, subset of candidates

    def __post_init__(self):
        cand = np.ascontiguousarray(self.candidates, dtype=np.int64)
        seeds = np.ascontiguousarray(self.seeds, dtype=np.int64)
        if self.initial not in cand:
            raise ValueError("initial seed missing from candidates")
        if not np.isin(seeds, cand).all():
            raise ValueError("seeds must be a subset of candidates")
        object.__setattr__(self, "candidates", cand)
        object.__setattr__(self, "seeds", seeds)


@dataclass(frozen=True, eq=False)
class PatchMask:
    """Boolean object-membership bit per patch."""

    grid_h: int
    grid_w: int
    bits: np.ndarray

    def __post_init__(self):
        bits = np.ascontiguousarray(self.bits, dtype=bool)
        if bits.shape != (self.grid_h * self.grid_w,):
            raise ValueError(
                f"bits shape {bits.shape} does not match grid {self.grid_h}x{self.grid_w}"
            )
        object.__setattr__(self, "bits", bits)


@dataclass(frozen=True, eq=False)
class LocalizeResult:
    """Full pipeline state of one image, for rendering and debugging."""

    degrees: DegreeMap
    seed: int
    seed_set: SeedSet
    mask: PatchMask
    box: PixelBox
    seed_only_box: PixelBox | None = None


def select_seed(dm: DegreeMap) -> int:
    """Global argmin of the degrees; equal minima resolve to the smallest index."""
    return int(np.argmin(dm.degrees))


def _candidate_order(dm: DegreeMap, k: int) -> np.ndarray:
    n = dm.num_patches
    if k < 1:
        raise ValueError(f"expansion budget k={k} must be >= 1")
    if k > n:
        warnings.warn(f"expansion budget k={k} exceeds N={n}; clamping to N", stacklevel=3)
        k = n
    order = np.lexsort((np.arange(n), dm.degrees))
    return order[:k]


def expand_seed(features: FeatureMap, dm: DegreeMap, p_star: int, k: int) -> SeedSet:
    """Correlated low-degree patches: candidates are the min(k, N) patches in
    (degree asc, index asc) order; seeds keep those with f_q . f_{p*} >= 0."""
    candidates = _candidate_order(dm, k)
    dots = kernels.seed_dots(features.data, p_star)
    seeds = candidates[dots[candidates] >= 0.0]
    return SeedSet(int(p_star), k, candidates, np.sort(seeds))


def expand_seed_symqk(
    queries: FeatureMap, keys: FeatureMap, dm: DegreeMap, p_star: int, k: int
) -> SeedSet:
    """Seed expansion under the symmetrized query/key correlation."""
    check_same_geometry(queries, keys)
    candidates = _candidate_order(dm, k)
    dots = kernels.seed_dots_symqk(queries.data, keys.data, p_star)
    seeds = candidates[dots[candidates] >= 0.0]
    return SeedSet(int(p_star), k, candidates, np.sort(seeds))


def _require_seeds(seeds: SeedSet) -> None:
    if seeds.seeds.size == 0:
        raise ValueError(
            f"empty seed set around patch {seeds.initial}: no candidate passed the "
            "correlation filter (possible only under sym-qk)"
        )


def build_mask(features: FeatureMap, seeds: SeedSet) -> PatchMask:
    """bits[q] = (sum over seeds s of f_q . f_s >= 0), seed sum in ascending index order.

    bits[initial] is always true: every seed passed the correlation filter
    against the initial patch, and its mask contribution there is that same
    non-negative quantity. The analogous argument covers the sym-qk variant.
    """
    _require_seeds(seeds)
    scores = kernels.mask_scores(features.data, seeds.seeds)
    return PatchMask(features.grid_h, features.grid_w, scores >= 0.0)


def build_mask_symqk(queries: FeatureMap, keys: FeatureMap, seeds: SeedSet) -> PatchMask:
    check_same_geometry(queries, keys)
    _require_seeds(seeds)
    scores = kernels.mask_scores_symqk(queries.data, keys.data, seeds.seeds)
    return PatchMask(queries.grid_h, queries.grid_w, scores >= 0.0)


def connected_components(mask: PatchMask) -> list[np.ndarray]:
    """4-connected components of the true bits, as sorted index arrays.

    Components are ordered by their smallest contained index. Two-pass
    union-find labeling over the patch grid.
    """
    h, w = mask.grid_h, mask.grid_w
    bits = mask.bits.reshape(h, w)
    parent = np.full(h * w, -1, dtype=np.int64)

    def find(x: int) -> int:
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    for r in range(h):
        for c in range(w):
            if not bits[r, c]:
                continue
            p = r * w + c
            parent[p] = p
            if c > 0 and bits[r, c - 1]:
                left = find(p - 1)
                parent[left] = find(p)
            if r > 0 and bits[r - 1, c]:
                up = find(p - w)
                a, b = find(up), find(p)
                if a != b:
                    parent[a] = b

    groups: dict[int, list[int]] = {}
    for p in range(h * w):
        if parent[p] != -1:
            groups.setdefault(find(p), []).append(p)
    comps = [np.asarray(sorted(members), dtype=np.int64) for members in groups.values()]
    comps.sort(key=lambda comp: int(comp[0]))
    return comps


def extract_box(mask: PatchMask, p_star: int, manifest: ImageManifest) -> PixelBox:
    """Pixel bounding box of the mask component containing the seed, clipped to the image."""
    if mask.grid_h != manifest.grid_h or mask.grid_w != manifest.grid_w:
        raise ValueError(
            f"mask grid {mask.grid_h}x{mask.grid_w} does not match manifest grid "
            f"{manifest.grid_h}x{manifest.grid_w}"
        )
    if not mask.bits[p_star]:
        raise ValueError(f"seed patch {p_star} is not set in the mask")
    component = None
    for comp in connected_components(mask):
        if p_star in comp:
            component = comp
            break
    assert component is not None
    rows = component // mask.grid_w
    cols = component % mask.grid_w
    return patch_rect_to_pixels(
        int(rows.min()), int(rows.max()), int(cols.min()), int(cols.max()),
        manifest.patch_size, manifest.image_w, manifest.image_h,
    )


def _resolve_inputs(features, mode: SimilarityMode):
    if mode.is_sym_qk:
        if not (isinstance(features, tuple) and len(features) == 2):
            raise ValueError("sym-qk mode needs a (queries, keys) pair of feature maps")
        queries, keys = features
        check_same_geometry(queries, keys)
        return queries, keys
    if not isinstance(features, FeatureMap):
        raise ValueError(f"mode {mode.variant!r} needs a single feature map")
    return features, None


def localize_details(
    features,
    manifest: ImageManifest,
    k: int = DEFAULT_EXPANSION_BUDGET,
    mode: SimilarityMode | str = "key",
    with_seed_only_box: bool = False,
) -> LocalizeResult:
    """Run the full pipeline and keep the intermediate state.

    features is a single FeatureMap, or a (queries, keys) pair in sym-qk mode.
    with_seed_only_box also computes the k=1 box (what the seed alone yields).
    """
    if isinstance(mode, str):
        mode = SimilarityMode(mode)
    primary, keys = _resolve_inputs(features, mode)
    if primary.num_patches != manifest.num_patches:
        raise ValueError(
            f"feature map has {primary.num_patches} patches but manifest implies "
            f"{manifest.num_patches}"
        )

    if mode.is_sym_qk:
        dm = patchgraph.degree_map_symqk(primary, keys)
    else:
        dm = patchgraph.degree_map(primary)
    p_star = select_seed(dm)

    def run(budget: int) -> tuple[SeedSet, PatchMask, PixelBox]:
        if mode.is_sym_qk:
            sset = expand_seed_symqk(primary, keys, dm, p_star, budget)
            m = build_mask_symqk(primary, keys, sset)
        else:
            sset = expand_seed(primary, dm, p_star, budget)
            m = build_mask(primary, sset)
        return sset, m, extract_box(m, p_star, manifest)

    seed_set, mask, box = run(k)
    seed_only_box = None
    if with_seed_only_box:
        try:
            _, _, seed_only_box = run(1)
        except DegenerateBoxError:
            seed_only_box = None  # seed patch in padding; the main box already errored or not
    return LocalizeResult(dm, p_star, seed_set, mask, box, seed_only_box)


def localize(
    features,
    manifest: ImageManifest,
    k: int = DEFAULT_EXPANSION_BUDGET,
    mode: SimilarityMode | str = "key",
) -> PixelBox:
    """One box per image; see localize_details for the intermediate state."""
    return localize_details(features, manifest, k, mode).box
