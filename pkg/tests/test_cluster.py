from itertools import combinations

import numpy as np
import pytest

from seedloc.boxes import PixelBox
from seedloc.cluster import (
    ClusterClassMap,
    ClusterModel,
    kmeans,
    match_clusters,
    retrieve_neighbors,
)
from seedloc.datasets import AnnotationSet, Detection, GtObject
from seedloc.tensorio import CropDescriptor

from oracles import brute_assignment


def descs(vectors, prefix="img"):
    return [
        CropDescriptor(f"{prefix}_{i:03d}", np.asarray(v, dtype=np.float64).reshape(-1))
        for i, v in enumerate(vectors)
    ]


def partition_inertia(points, groups):
    total = 0.0
    for g in groups:
        vals = np.asarray([points[i] for i in g], dtype=np.float64)
        total += float(((vals - vals.mean(axis=0)) ** 2).sum())
    return total


class TestKMeans:
    def test_k_equals_points_zero_inertia(self, rng):
        d = descs(rng.standard_normal((5, 3)))
        model = kmeans(d, k=5, seed=0)
        assert model.inertia == 0.0
        assert sorted(model.assignments.values()) == [0, 1, 2, 3, 4]

    def test_two_well_separated_pairs(self):
        points = [0.0, 0.1, 10.0, 10.1]
        d = descs([[p] for p in points])
        model = kmeans(d, k=2, seed=0)
        # oracle: enumerate every 2-partition of the four points
        best = min(
            partition_inertia(points, (left, tuple(set(range(4)) - set(left))))
            for r in range(1, 4)
            for left in combinations(range(4), r)
        )
        assert best == pytest.approx(0.01, abs=1e-12)
        assert model.inertia == pytest.approx(best, abs=1e-9)
        assert sorted(float(c[0]) for c in model.centroids) == pytest.approx([0.05, 10.05])
        a = model.assignments
        assert a["img_000"] == a["img_001"] != a["img_002"]
        assert a["img_002"] == a["img_003"]

    def test_deterministic_given_seed(self, rng):
        d = descs(rng.standard_normal((20, 4)))
        m1 = kmeans(d, k=4, seed=7)
        m2 = kmeans(d, k=4, seed=7)
        assert m1.assignments == m2.assignments
        assert np.array_equal(m1.centroids, m2.centroids)
        assert m1.inertia_history == m2.inertia_history

    def test_inertia_history_non_increasing(self, rng):
        d = descs(rng.standard_normal((60, 5)))
        model = kmeans(d, k=6, seed=3)
        history = model.inertia_history
        assert all(b <= a * (1 + 1e-12) for a, b in zip(history, history[1:]))

    def test_k_too_large(self, rng):
        d = descs(rng.standard_normal((3, 2)))
        with pytest.raises(ValueError, match="k=4"):
            kmeans(d, k=4)

    def test_dim_mismatch(self):
        bad = [
            CropDescriptor("a", np.zeros(3, dtype=np.float32)),
            CropDescriptor("b", np.zeros(2, dtype=np.float32)),
        ]
        with pytest.raises(ValueError, match="dim mismatch"):
            kmeans(bad, k=1)

    def test_duplicate_points_do_not_hang(self):
        d = descs([[0.0], [0.0], [0.0], [10.0]])
        model = kmeans(d, k=3, seed=0)
        assert model.k == 3
        assert len(set(model.assignments.values())) == 3

    def test_model_round_trip(self, rng):
        d = descs(rng.standard_normal((10, 3)))
        model = kmeans(d, k=3, seed=1)
        back = ClusterModel.from_json(model.to_json())
        assert back.assignments == model.assignments
        assert np.array_equal(back.centroids, model.centroids)
        assert back.inertia == model.inertia


def simple_gt(entries):
    """entries: image_id -> list of (class_name, corners)."""
    sizes = {}
    annotations = {}
    for image_id, objs in entries.items():
        sizes[image_id] = (1000, 1000)
        annotations[image_id] = [GtObject(name, PixelBox(*c)) for name, c in objs]
    return AnnotationSet(sizes, annotations)


def det(image_id, corners, label=None, score=1.0):
    return Detection(image_id, PixelBox(*corners, score=score), score, label)


class TestMatchClusters:
    def test_pure_clusters_identity_quality(self):
        gt = simple_gt(
            {
                "a": [("cat", (0, 0, 10, 10))],
                "b": [("cat", (0, 0, 10, 10))],
                "c": [("dog", (20, 20, 40, 40))],
                "d": [("dog", (20, 20, 40, 40))],
            }
        )
        preds = [
            det("a", (0, 0, 10, 10), label=0),
            det("b", (0, 0, 10, 10), label=0),
            det("c", (20, 20, 40, 40), label=1),
            det("d", (20, 20, 40, 40), label=1),
        ]
        cmap = match_clusters(preds, gt)
        assert cmap.pairs == {0: "cat", 1: "dog"}
        assert cmap.unmatched == ()

    def test_more_clusters_than_classes(self):
        gt = simple_gt({"a": [("cat", (0, 0, 10, 10))], "b": [("cat", (0, 0, 10, 10))]})
        preds = [det("a", (0, 0, 10, 10), label=0), det("b", (500, 500, 600, 600), label=1)]
        cmap = match_clusters(preds, gt, k=2)
        assert cmap.pairs == {0: "cat"}
        assert cmap.unmatched == (1,)

    def test_confusion_counts_match_brute_force(self, rng):
        classes = ["bird", "cat", "dog"]
        hits = rng.integers(0, 6, size=(3, 3)).astype(float)
        gt_entries = {}
        preds = []
        image = 0
        for c in range(3):
            for j, cls in enumerate(classes):
                for _ in range(int(hits[c, j])):
                    image_id = f"i{image:03d}"
                    image += 1
                    gt_entries[image_id] = [(cls, (0, 0, 10, 10))]
                    preds.append(det(image_id, (0, 0, 10, 10), label=c))
        gt = simple_gt(gt_entries)
        cmap = match_clusters(preds, gt, k=3)
        want, _ = brute_assignment(-hits)
        assert cmap.pairs == {c: classes[j] for c, j in want.items()}

    def test_relabeling_permutes_the_map(self, rng):
        classes = ["bird", "cat", "dog"]
        # distinct hit counts so the optimum is unique
        hits = np.array([[9, 1, 0], [0, 7, 2], [1, 0, 5]], dtype=float)
        gt_entries = {}
        preds_rows = []
        image = 0
        for c in range(3):
            for j, cls in enumerate(classes):
                for _ in range(int(hits[c, j])):
                    image_id = f"i{image:03d}"
                    image += 1
                    gt_entries[image_id] = [(cls, (0, 0, 10, 10))]
                    preds_rows.append((image_id, c))
        gt = simple_gt(gt_entries)
        perm = {0: 2, 1: 0, 2: 1}
        base = match_clusters(
            [det(i, (0, 0, 10, 10), label=c) for i, c in preds_rows], gt, k=3
        )
        permuted = match_clusters(
            [det(i, (0, 0, 10, 10), label=perm[c]) for i, c in preds_rows], gt, k=3
        )
        assert permuted.pairs == {perm[c]: name for c, name in base.pairs.items()}

    def test_empty_ground_truth(self):
        with pytest.raises(ValueError, match="empty ground truth"):
            match_clusters([det("a", (0, 0, 1, 1), label=0)], AnnotationSet(), k=1)

    def test_map_round_trip(self):
        cmap = ClusterClassMap({0: "cat", 2: "dog"}, unmatched=(1,))
        assert ClusterClassMap.from_json(cmap.to_json()) == cmap


class TestRetrieveNeighbors:
    def test_duplicates_are_each_others_top(self):
        d = descs([[1, 0], [1, 0], [0, 1]])
        neighbors = retrieve_neighbors(d, tau=1)
        assert neighbors["img_000"] == ["img_001"]
        assert neighbors["img_001"] == ["img_000"]

    def test_orthogonal_one_hots_tie_by_id(self):
        d = descs(np.eye(4))
        neighbors = retrieve_neighbors(d, tau=2)
        assert neighbors["img_000"] == ["img_001", "img_002"]
        assert neighbors["img_003"] == ["img_000", "img_001"]

    def test_matches_exhaustive_cosine_oracle(self, rng):
        vectors = rng.standard_normal((20, 8))
        d = descs(vectors)
        ids = [x.image_id for x in d]
        neighbors = retrieve_neighbors(d, tau=10)
        unit = vectors / np.linalg.norm(vectors, axis=1, keepdims=True)
        for i, image_id in enumerate(ids):
            sims = unit @ unit[i]
            want = sorted(
                (j for j in range(20) if j != i), key=lambda j: (-sims[j], ids[j])
            )[:10]
            assert neighbors[image_id] == [ids[j] for j in want]

    def test_cosine_symmetry(self, rng):
        vectors = rng.standard_normal((6, 4))
        unit = vectors / np.linalg.norm(vectors, axis=1, keepdims=True)
        sims = unit @ unit.T
        assert np.allclose(sims, sims.T)

    def test_zero_norm_sorts_last(self):
        d = descs([[1, 0], [0.9, 0.1], [0, 0], [1, 0.1]])
        neighbors = retrieve_neighbors(d, tau=3)
        assert neighbors["img_000"][-1] == "img_002"

    def test_too_few_images(self):
        d = descs([[1, 0], [0, 1]])
        with pytest.raises(ValueError, match="tau"):
            retrieve_neighbors(d, tau=2)
