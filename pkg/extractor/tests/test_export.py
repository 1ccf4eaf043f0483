"""Round trip: export real images, re-validate everything with the seedloc loaders."""

import numpy as np
import pytest

from seedloc import cli as seedloc_cli
from seedloc import datasets, tensorio

from vitexport.cli import main
from vitexport.export import ExtractionJob, extract, list_images


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="session")
def exported(real_images, tmp_path_factory):
    out = tmp_path_factory.mktemp("export")
    rc = run("extract", "--model", "vit-s16-dino",
             "--roles", "keys,queries,values,attention",
             "--images", real_images, "--out", out)
    assert rc == 0
    return out


class TestRoundTrip:
    def test_ten_images_pass_loader_validation(self, exported):
        entries = datasets.read_dataset_manifest(exported / "dataset.json")
        assert len(entries) == 10
        violations = []
        for entry in entries:
            manifest_path = exported / entry.manifest
            try:
                manifest = tensorio.read_manifest(manifest_path)
                for role, rel in manifest.feature_files.items():
                    path = manifest_path.parent / rel
                    if role == "attention":
                        stack = tensorio.read_attention_stack(path)
                        if (stack.grid_h, stack.grid_w) != (manifest.grid_h, manifest.grid_w):
                            raise ValueError("attention grid disagrees with manifest")
                    else:
                        fm = tensorio.read_feature_map(path)
                        if fm.kind != role:
                            raise ValueError(f"kind {fm.kind} stored under role {role}")
                        if fm.num_patches != manifest.num_patches:
                            raise ValueError("feature grid disagrees with manifest")
            except ValueError as exc:
                violations.append(f"{entry.image_id}: {exc}")
        assert violations == []
        print(f"ACCEPTANCE extractor-round-trip: PASS (10 images, 0 violations)")

    def test_grid_geometry_matches_padding_rule(self, exported, real_images):
        from PIL import Image

        for path in sorted(real_images.iterdir()):
            manifest = tensorio.read_manifest(exported / path.stem / "manifest.json")
            with Image.open(path) as img:
                assert (manifest.image_w, manifest.image_h) == img.size
            assert manifest.pad_w == -(-manifest.image_w // 16) * 16
            assert manifest.pad_h == -(-manifest.image_h // 16) * 16
            assert manifest.grid_w == manifest.pad_w // 16

    def test_feature_dimensions(self, exported):
        fm = tensorio.read_feature_map(exported / "astronaut" / "key.lfea")
        assert fm.dim == 384  # 6 heads x 64, concatenated
        stack = tensorio.read_attention_stack(exported / "astronaut" / "attention.latt")
        assert stack.heads == 6
        # attention rows are softmax slices over N+1 keys; patch mass < 1
        sums = stack.data.sum(axis=1)
        assert (sums > 0).all() and (sums <= 1.0 + 1e-5).all()

    def test_export_is_deterministic(self, real_images, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            assert run("extract", "--model", "vit-s16-dino", "--roles", "keys",
                       "--images", real_images, "--out", out) == 0
        for path in sorted(out_a.rglob("*")):
            if path.is_file():
                other = out_b / path.relative_to(out_a)
                assert other.read_bytes() == path.read_bytes(), path.name


class TestPipelineIntegration:
    def test_detect_runs_on_exported_features(self, exported, tmp_path):
        preds = tmp_path / "preds.jsonl"
        rc = seedloc_cli.main(["detect", "--dataset-manifest", str(exported / "dataset.json"),
                               "--out", str(preds)])
        assert rc == 0
        detections = datasets.read_predictions(preds)
        assert len(detections) == 10
        for det in detections:
            assert det.box.area > 0

    def test_crop_descriptors_round_trip(self, exported, real_images, tmp_path):
        preds = tmp_path / "preds.jsonl"
        seedloc_cli.main(["detect", "--dataset-manifest", str(exported / "dataset.json"),
                          "--out", str(preds)])
        crops_out = tmp_path / "crops"
        rc = run("extract", "--model", "vit-s16-dino", "--roles", "crops",
                 "--images", real_images, "--out", crops_out, "--boxes", preds)
        assert rc == 0
        descriptors = tensorio.read_crop_descriptors(crops_out / "crops.lcls")
        assert sorted(d.image_id for d in descriptors) == sorted(
            p.stem for p in real_images.iterdir()
        )
        for d in descriptors:
            assert d.vector.shape == (384,)

    def test_missing_box_is_an_error(self, real_images, tmp_path, capsys):
        boxes = tmp_path / "preds.jsonl"
        boxes.write_text('{"image_id": "astronaut", "x_min": 0, "y_min": 0, '
                         '"x_max": 32, "y_max": 32, "score": 1.0}\n')
        rc = run("extract", "--roles", "crops", "--images", real_images,
                 "--out", tmp_path / "c", "--boxes", boxes)
        assert rc == 1
        assert "no box" in capsys.readouterr().err


class TestJobValidation:
    def test_unknown_role(self, real_images, tmp_path):
        with pytest.raises(ValueError, match="unknown roles"):
            ExtractionJob(list_images(real_images), "vit-s16-dino", ("cls",), tmp_path)

    def test_crops_needs_boxes(self, real_images, tmp_path):
        with pytest.raises(ValueError, match="boxes"):
            ExtractionJob(list_images(real_images), "vit-s16-dino", ("crops",), tmp_path)

    def test_undecodable_image(self, tmp_path):
        bad = tmp_path / "imgs"
        bad.mkdir()
        (bad / "broken.png").write_bytes(b"not a png")
        rc = run("extract", "--roles", "keys", "--images", bad, "--out", tmp_path / "o")
        assert rc == 1
