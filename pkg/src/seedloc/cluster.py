"""Pseudo-labeling of discovered boxes: seeded K-means over crop descriptors,
cluster-to-class matching via minimum-cost assignment, and image-neighbor
retrieval by descriptor cosine similarity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assignment import hungarian
from .datasets import AnnotationSet, Detection
from .evalmetrics import iou
from .tensorio import CropDescriptor

KMEANS_MAX_ITER = 300
KMEANS_REL_TOL = 1e-4


@dataclass(frozen=True, eq=False)
class ClusterModel:
    """K centroids over box descriptors plus per-image assignments."""

    k: int
    centroids: np.ndarray            # (k, dim) float64
    assignments: dict[str, int]      # image_id -> cluster id
    inertia: float
    inertia_history: tuple[float, ...] = ()

    def __post_init__(self):
        cent = np.ascontiguousarray(self.centroids, dtype=np.float64)
        if cent.shape[0] != self.k:
            raise ValueError(f"{cent.shape[0]} centroids for k={self.k}")
        if self.inertia < 0:
            raise ValueError(f"negative inertia {self.inertia}")
        bad = [i for i, c in self.assignments.items() if not 0 <= c < self.k]
        if bad:
            raise ValueError(f"assignments outside [0, {self.k}): {bad[:5]}")
        object.__setattr__(self, "centroids", cent)

    def to_json(self) -> str:
        doc = {
            "k": self.k,
            "centroids": self.centroids.tolist(),
            "assignments": dict(sorted(self.assignments.items())),
            "inertia": self.inertia,
            "inertia_history": list(self.inertia_history),
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ClusterModel":
        doc = json.loads(text)
        return cls(
            k=doc["k"],
            centroids=np.asarray(doc["centroids"], dtype=np.float64),
            assignments={str(k): int(v) for k, v in doc["assignments"].items()},
            inertia=float(doc["inertia"]),
            inertia_history=tuple(doc.get("inertia_history", ())),
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ClusterModel":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class ClusterClassMap:
    """Injective cluster -> class-name map; clusters beyond the class count stay unmatched."""

    pairs: dict[int, str] = field(default_factory=dict)
    unmatched: tuple[int, ...] = ()

    def to_json(self) -> str:
        doc = {
            "pairs": {str(c): name for c, name in sorted(self.pairs.items())},
            "unmatched": list(self.unmatched),
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ClusterClassMap":
        doc = json.loads(text)
        return cls(
            pairs={int(c): str(name) for c, name in doc["pairs"].items()},
            unmatched=tuple(int(c) for c in doc.get("unmatched", ())),
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ClusterClassMap":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def _descriptor_matrix(descriptors: list[CropDescriptor]) -> tuple[list[str], np.ndarray]:
    if not descriptors:
        raise ValueError("no descriptors given")
    dim = descriptors[0].vector.size
    for d in descriptors:
        if d.vector.size != dim:
            raise ValueError(
                f"descriptor dim mismatch: {d.image_id!r} has {d.vector.size}, expected {dim}"
            )
    ids = [d.image_id for d in descriptors]
    x = np.stack([d.vector for d in descriptors]).astype(np.float64)
    return ids, x


def _kmeanspp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((x - x[chosen[0]]) ** 2).sum(axis=1)
    while len(chosen) < k:
        total = float(d2.sum())
        if total <= 0.0:
            # all remaining points coincide with a centroid; take the first unused index
            for i in range(n):
                if i not in chosen:
                    chosen.append(i)
                    break
        else:
            idx = int(rng.choice(n, p=d2 / total))
            chosen.append(idx)
        d2 = np.minimum(d2, ((x - x[chosen[-1]]) ** 2).sum(axis=1))
    return x[chosen].copy()


def _assign(x: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)  # ties resolve to the lowest cluster id
    return labels, d2[np.arange(x.shape[0]), labels]


def _repair_empty(
    x: np.ndarray, centroids: np.ndarray, labels: np.ndarray, dists: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Reseed each empty cluster with the farthest point from its assigned centroid.

    The stolen point is pinned to the reseeded cluster (its distance there is
    exactly zero, so this only overrides a tie) to guarantee termination even
    with duplicate points. An empty cluster is never anyone's unique nearest
    centroid, so moving it cannot increase any point's distance.
    """
    k = centroids.shape[0]
    stolen: dict[int, int] = {}
    while True:
        counts = np.bincount(labels, minlength=k)
        empty = np.flatnonzero(counts == 0)
        if empty.size == 0:
            return centroids, labels, dists
        candidates = np.argsort(-dists, kind="stable")
        point = next(int(i) for i in candidates if int(i) not in stolen)
        target = int(empty[0])
        stolen[point] = target
        centroids[target] = x[point]
        labels, dists = _assign(x, centroids)
        for pt, cl in stolen.items():
            labels[pt] = cl
            dists[pt] = ((x[pt] - centroids[cl]) ** 2).sum()


def kmeans(descriptors: list[CropDescriptor], k: int, seed: int = 0) -> ClusterModel:
    """Seeded deterministic K-means (k-means++ init, Lloyd iterations).

    Stops when the relative inertia change drops below 1e-4 or after 300
    iterations. Empty clusters are reseeded with the farthest point. Raises
    ValueError when k exceeds the number of descriptors or dims disagree.
    """
    ids, x = _descriptor_matrix(descriptors)
    if k < 1 or k > x.shape[0]:
        raise ValueError(f"k={k} must be in [1, {x.shape[0]}] for {x.shape[0]} descriptors")

    rng = np.random.Generator(np.random.PCG64(seed))
    centroids = _kmeanspp_init(x, k, rng)

    history: list[float] = []
    prev = float("inf")
    labels = None
    for _ in range(KMEANS_MAX_ITER):
        labels, dists = _assign(x, centroids)
        centroids, labels, dists = _repair_empty(x, centroids, labels, dists)
        inertia = float(dists.sum())
        assert inertia <= prev * (1.0 + 1e-12) + 1e-12, "inertia increased"
        history.append(inertia)
        if np.isfinite(prev) and (prev - inertia) < KMEANS_REL_TOL * max(prev, 1e-300):
            break
        prev = inertia
        for c in range(k):
            centroids[c] = x[labels == c].mean(axis=0)

    assignments = {ids[i]: int(labels[i]) for i in range(len(ids))}
    return ClusterModel(k, centroids, assignments, history[-1], tuple(history))


def match_clusters(
    preds: list[Detection],
    ground_truth: AnnotationSet,
    k: int | None = None,
    iou_threshold: float = 0.5,
) -> ClusterClassMap:
    """Match cluster ids to ground-truth class names.

    The matching cost of (cluster c, class y) is the negated number of cluster-c
    boxes overlapping some class-y ground-truth box at IoU >= threshold; the
    minimum-cost injective assignment gives the map. With more clusters than
    classes the leftover clusters stay unmatched and their detections are
    ignored by class-aware scoring.
    """
    classes = sorted(ground_truth.class_names())
    if not classes:
        raise ValueError("empty ground truth: no classes to match against")
    labeled = [p for p in preds if p.label is not None]
    if not labeled:
        raise ValueError("no labeled predictions to match")
    missing = sorted({p.image_id for p in labeled} - set(ground_truth.images()))
    if missing:
        raise ValueError(f"predictions for images without ground truth: {missing[:5]}")

    n_clusters = k if k is not None else max(p.label for p in labeled) + 1
    hits = np.zeros((n_clusters, len(classes)), dtype=np.float64)
    class_col = {name: j for j, name in enumerate(classes)}
    for p in labeled:
        if not 0 <= p.label < n_clusters:
            raise ValueError(f"label {p.label} outside [0, {n_clusters})")
        seen = set()
        for obj in ground_truth.objects_of(p.image_id):
            if obj.class_name in seen:
                continue
            if iou(p.box, obj.box) >= iou_threshold:
                hits[p.label, class_col[obj.class_name]] += 1.0
                seen.add(obj.class_name)

    mapping = hungarian(-hits)
    pairs = {c: classes[j] for c, j in mapping.items()}
    unmatched = tuple(c for c in range(n_clusters) if c not in pairs)
    return ClusterClassMap(pairs, unmatched)


def retrieve_neighbors(
    descriptors: list[CropDescriptor], tau: int = 10
) -> dict[str, list[str]]:
    """Top-tau most cosine-similar other images per image.

    Zero-norm descriptors sort last (their similarity is treated as -inf);
    equal similarities break ties by ascending image id.
    """
    ids, x = _descriptor_matrix(descriptors)
    n = len(ids)
    if tau < 1:
        raise ValueError(f"tau={tau} must be >= 1")
    if n < tau + 1:
        raise ValueError(f"need at least tau+1={tau + 1} images, got {n}")
    if len(set(ids)) != n:
        raise ValueError("duplicate image ids among descriptors")

    norms = np.sqrt((x * x).sum(axis=1))
    safe = np.where(norms > 0.0, norms, 1.0)
    unit = x / safe[:, None]
    sims = unit @ unit.T
    zero = norms == 0.0
    sims[zero, :] = -np.inf
    sims[:, zero] = -np.inf

    neighbors: dict[str, list[str]] = {}
    for i in range(n):
        ranked = sorted(
            (j for j in range(n) if j != i), key=lambda j: (-sims[i, j], ids[j])
        )
        neighbors[ids[i]] = [ids[j] for j in ranked[:tau]]
    return neighbors
