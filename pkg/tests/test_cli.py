import json

import numpy as np
import pytest
from PIL import Image

from seedloc import datasets, tensorio
from seedloc.cli import main
from seedloc.cluster import ClusterModel
from seedloc.evalmetrics import EvalReport


def run(*argv):
    return main([str(a) for a in argv])


def write_voc_gt(gt_dir, image_id, corners, size=(224, 224)):
    x_min, y_min, x_max, y_max = corners
    gt_dir.mkdir(exist_ok=True)
    (gt_dir / f"{image_id}.xml").write_text(
        "<annotation>"
        f"<filename>{image_id}.jpg</filename>"
        f"<size><width>{size[0]}</width><height>{size[1]}</height></size>"
        "<object><name>cat</name><difficult>0</difficult><truncated>0</truncated>"
        f"<bndbox><xmin>{x_min + 1}</xmin><ymin>{y_min + 1}</ymin>"
        f"<xmax>{x_max}</xmax><ymax>{y_max}</ymax></bndbox></object>"
        "</annotation>"
    )


class TestDetect:
    def test_boxes_match_planted_fixtures(self, fixture_dataset, tmp_path):
        out = tmp_path / "preds.jsonl"
        assert run("detect", "--dataset-manifest", fixture_dataset["manifest"],
                   "--out", out) == 0
        preds = datasets.read_predictions(out)
        assert {p.image_id: p.box.corners() for p in preds} == fixture_dataset["expected"]

    def test_rerun_is_byte_identical(self, fixture_dataset, tmp_path):
        first, second = tmp_path / "p1.jsonl", tmp_path / "p2.jsonl"
        assert run("detect", "--dataset-manifest", fixture_dataset["manifest"], "--out", first) == 0
        assert run("detect", "--dataset-manifest", fixture_dataset["manifest"], "--out", second) == 0
        assert first.read_bytes() == second.read_bytes()

    def test_parallel_jobs_identical_output(self, fixture_dataset, tmp_path):
        serial, parallel = tmp_path / "s.jsonl", tmp_path / "p.jsonl"
        run("detect", "--dataset-manifest", fixture_dataset["manifest"], "--out", serial)
        run("detect", "--dataset-manifest", fixture_dataset["manifest"], "--out", parallel,
            "--jobs", 2)
        assert serial.read_bytes() == parallel.read_bytes()

    def test_empty_dataset_gives_empty_output(self, tmp_path):
        manifest = tmp_path / "empty.json"
        datasets.write_dataset_manifest([], manifest)
        out = tmp_path / "preds.jsonl"
        assert run("detect", "--dataset-manifest", manifest, "--out", out) == 0
        assert out.read_text() == ""

    def test_missing_feature_file_aborts_with_name(self, fixture_dataset, tmp_path, capsys):
        (fixture_dataset["root"] / "img_b" / "key.lfea").unlink()
        out = tmp_path / "preds.jsonl"
        assert run("detect", "--dataset-manifest", fixture_dataset["manifest"], "--out", out) == 1
        assert "img_b" in capsys.readouterr().err

    def test_skip_missing_continues(self, fixture_dataset, tmp_path):
        (fixture_dataset["root"] / "img_b" / "key.lfea").unlink()
        out = tmp_path / "preds.jsonl"
        assert run("detect", "--dataset-manifest", fixture_dataset["manifest"], "--out", out,
                   "--skip-missing") == 0
        preds = datasets.read_predictions(out)
        assert [p.image_id for p in preds] == ["img_a", "img_c"]


class TestBaseline:
    def test_head_boxes_cover_planted_attention(self, fixture_dataset, tmp_path):
        out = tmp_path / "base.jsonl"
        assert run("baseline", "--dataset-manifest", fixture_dataset["manifest"],
                   "--head", 0, "--out", out) == 0
        preds = {p.image_id: p.box.corners() for p in datasets.read_predictions(out)}
        # the planted attention block is the top-valued region; with
        # floor(0.6 N) >> block size the largest component still contains it
        for image_id, expected in fixture_dataset["expected"].items():
            box = preds[image_id]
            assert box[0] <= expected[0] and box[1] <= expected[1]
            assert box[2] >= expected[2] and box[3] >= expected[3]

    def test_bcc_and_haiou_strategies_run(self, fixture_dataset, tmp_path):
        for head in ("bcc", "haiou"):
            out = tmp_path / f"{head}.jsonl"
            assert run("baseline", "--dataset-manifest", fixture_dataset["manifest"],
                       "--head", head, "--out", out) == 0
            assert len(datasets.read_predictions(out)) == 3


class TestCluster:
    def _descriptors(self, fixture_dataset, tmp_path):
        ids = sorted(fixture_dataset["expected"])
        vectors = {"img_a": [1.0, 0.0], "img_b": [0.9, 0.1], "img_c": [0.0, 1.0]}
        descs = [tensorio.CropDescriptor(i, np.array(vectors[i])) for i in ids]
        path = tmp_path / "crops.lcls"
        tensorio.write_crop_descriptors(descs, path)
        return path

    def test_labels_and_model_written(self, fixture_dataset, tmp_path):
        preds = tmp_path / "preds.jsonl"
        run("detect", "--dataset-manifest", fixture_dataset["manifest"], "--out", preds)
        crops = self._descriptors(fixture_dataset, tmp_path)
        labeled, model_path = tmp_path / "labeled.jsonl", tmp_path / "model.json"
        assert run("cluster", "--predictions", preds, "--descriptors", crops,
                   "--clusters", 2, "--seed", 0,
                   "--out-predictions", labeled, "--out-model", model_path) == 0
        model = ClusterModel.load(model_path)
        assert model.k == 2
        back = datasets.read_predictions(labeled)
        labels = {p.image_id: p.label for p in back}
        assert labels["img_a"] == labels["img_b"] != labels["img_c"]

    def test_clusters_default_to_class_count(self, fixture_dataset, tmp_path):
        preds = tmp_path / "preds.jsonl"
        run("detect", "--dataset-manifest", fixture_dataset["manifest"], "--out", preds)
        crops = self._descriptors(fixture_dataset, tmp_path)
        gt_dir = tmp_path / "gt"
        for image_id, corners in fixture_dataset["expected"].items():
            write_voc_gt(gt_dir, image_id, corners)  # one class -> K = 1
        model_path = tmp_path / "model.json"
        assert run("cluster", "--predictions", preds, "--descriptors", crops,
                   "--gt-voc", gt_dir, "--out-predictions", tmp_path / "l.jsonl",
                   "--out-model", model_path) == 0
        assert ClusterModel.load(model_path).k == 1

    def test_k_too_large_surfaces_exit_code(self, fixture_dataset, tmp_path, capsys):
        preds = tmp_path / "preds.jsonl"
        run("detect", "--dataset-manifest", fixture_dataset["manifest"], "--out", preds)
        crops = self._descriptors(fixture_dataset, tmp_path)
        rc = run("cluster", "--predictions", preds, "--descriptors", crops,
                 "--clusters", 9, "--out-predictions", tmp_path / "l.jsonl",
                 "--out-model", tmp_path / "m.json")
        assert rc == 1
        assert "k=9" in capsys.readouterr().err


class TestEval:
    def test_corloc_fixture_two_thirds(self, fixture_dataset, tmp_path):
        preds = tmp_path / "preds.jsonl"
        run("detect", "--dataset-manifest", fixture_dataset["manifest"], "--out", preds)
        gt_dir = tmp_path / "gt"
        expected = fixture_dataset["expected"]
        write_voc_gt(gt_dir, "img_a", expected["img_a"])          # IoU 1.0 hit
        write_voc_gt(gt_dir, "img_b", (150, 150, 200, 200))       # disjoint   miss
        write_voc_gt(gt_dir, "img_c", expected["img_c"])          # IoU 1.0 hit
        report_path = tmp_path / "report.json"
        table_path = tmp_path / "report.txt"
        assert run("eval", "corloc", "--predictions", preds, "--gt-voc", gt_dir,
                   "--out", report_path, "--table", table_path) == 0
        report = EvalReport.from_json(report_path.read_text())
        assert report.metrics["corloc"] == pytest.approx(200 / 3, abs=0.01)
        assert "66.67" in table_path.read_text()

    def test_odap_runs_on_fixture(self, fixture_dataset, tmp_path):
        preds = tmp_path / "preds.jsonl"
        run("detect", "--dataset-manifest", fixture_dataset["manifest"], "--out", preds)
        gt_dir = tmp_path / "gt"
        for image_id, corners in fixture_dataset["expected"].items():
            write_voc_gt(gt_dir, image_id, corners)
        report_path = tmp_path / "odap.json"
        assert run("eval", "odap", "--predictions", preds, "--gt-voc", gt_dir,
                   "--out", report_path) == 0
        report = EvalReport.from_json(report_path.read_text())
        assert report.metrics["odAP50"] == 1.0
        assert report.metrics["odAP[50-95]"] == 1.0

    def test_ap_with_labels_writes_class_map(self, fixture_dataset, tmp_path):
        preds = tmp_path / "preds.jsonl"
        run("detect", "--dataset-manifest", fixture_dataset["manifest"], "--out", preds)
        rows = [json.loads(line) for line in preds.read_text().splitlines()]
        for i, row in enumerate(rows):
            row["label"] = i % 2
        labeled = tmp_path / "labeled.jsonl"
        labeled.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in rows))
        gt_dir = tmp_path / "gt"
        for image_id, corners in fixture_dataset["expected"].items():
            write_voc_gt(gt_dir, image_id, corners)
        report_path, map_path = tmp_path / "ap.json", tmp_path / "map.json"
        assert run("eval", "ap", "--predictions", labeled, "--gt-voc", gt_dir,
                   "--out", report_path, "--out-map", map_path) == 0
        report = EvalReport.from_json(report_path.read_text())
        assert "mean_ap" in report.metrics
        assert map_path.exists()

    def test_corret_on_descriptors(self, fixture_dataset, tmp_path):
        ids = sorted(fixture_dataset["expected"])
        descs = [tensorio.CropDescriptor(i, np.array([1.0, float(j)])) for j, i in enumerate(ids)]
        crops = tmp_path / "crops.lcls"
        tensorio.write_crop_descriptors(descs, crops)
        gt_dir = tmp_path / "gt"
        for image_id, corners in fixture_dataset["expected"].items():
            write_voc_gt(gt_dir, image_id, corners)
        report_path = tmp_path / "corret.json"
        assert run("eval", "corret", "--descriptors", crops, "--gt-voc", gt_dir,
                   "--tau", 1, "--out", report_path) == 0
        report = EvalReport.from_json(report_path.read_text())
        assert report.metrics["corret"] == 100.0  # single class everywhere

    def test_missing_required_inputs(self, tmp_path, capsys):
        assert run("eval", "corloc", "--gt-voc", tmp_path, "--out", tmp_path / "r.json") == 1
        assert "--predictions" in capsys.readouterr().err


class TestRender:
    def test_two_files_per_image(self, fixture_dataset, tmp_path):
        images_root = tmp_path / "images"
        images_root.mkdir()
        for image_id in fixture_dataset["expected"]:
            Image.new("RGB", (224, 224), (90, 120, 150)).save(images_root / f"{image_id}.png")
        out_dir = tmp_path / "render"
        assert run("render", "--dataset-manifest", fixture_dataset["manifest"],
                   "--images-root", images_root, "--out-dir", out_dir,
                   "--image-id", "img_a") == 0
        files = sorted(p.name for p in out_dir.iterdir())
        assert files == ["img_a_degrees.png", "img_a_overlay.png"]

    def test_render_rerun_byte_identical(self, fixture_dataset, tmp_path):
        images_root = tmp_path / "images"
        images_root.mkdir()
        for image_id in fixture_dataset["expected"]:
            Image.new("RGB", (224, 224), (90, 120, 150)).save(images_root / f"{image_id}.png")
        out_a, out_b = tmp_path / "r1", tmp_path / "r2"
        for out in (out_a, out_b):
            assert run("render", "--dataset-manifest", fixture_dataset["manifest"],
                       "--images-root", images_root, "--out-dir", out,
                       "--image-id", "img_b") == 0
        assert (out_a / "img_b_overlay.png").read_bytes() == (out_b / "img_b_overlay.png").read_bytes()
        assert (out_a / "img_b_degrees.png").read_bytes() == (out_b / "img_b_degrees.png").read_bytes()
