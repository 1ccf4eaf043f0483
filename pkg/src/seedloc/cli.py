"""Command-line surface: detect, baseline, cluster, eval, render.

All data goes to files; diagnostics go to stderr. Every command is
deterministic given its inputs and --seed, and reruns are byte-identical.
Images are processed in image_id order; --jobs parallelizes per image while
keeping the output order fixed.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from multiprocessing import Pool
from pathlib import Path

from . import attnseg, cluster, datasets, evalmetrics, render, tensorio
from .localize import DEFAULT_EXPANSION_BUDGET as DEFAULT_K
from .localize import localize_details
from .patchgraph import SimilarityMode


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _load_feature_inputs(manifest: tensorio.ImageManifest, manifest_dir: Path, mode: SimilarityMode):
    loaded = {}
    for role in mode.required_roles:
        rel = manifest.feature_files.get(role)
        if rel is None:
            raise FileNotFoundError(
                f"image {manifest.image_id!r}: manifest lists no {role!r} feature file"
            )
        path = manifest_dir / rel
        if not path.exists():
            raise FileNotFoundError(f"image {manifest.image_id!r}: missing feature file {path}")
        fm = tensorio.read_feature_map(path)
        if fm.num_patches != manifest.num_patches:
            raise ValueError(
                f"image {manifest.image_id!r}: feature grid {fm.grid_h}x{fm.grid_w} "
                f"disagrees with manifest grid {manifest.grid_h}x{manifest.grid_w}"
            )
        loaded[role] = fm
    if mode.is_sym_qk:
        return loaded["query"], loaded["key"]
    return loaded[mode.variant]


def _manifest_for(entry: datasets.DatasetEntry, dataset_manifest_path: Path):
    manifest_path = dataset_manifest_path.parent / entry.manifest
    manifest = tensorio.read_manifest(manifest_path)
    if manifest.image_id != entry.image_id:
        raise ValueError(
            f"dataset manifest says {entry.image_id!r} but {manifest_path} "
            f"says {manifest.image_id!r}"
        )
    return manifest, manifest_path.parent


def _detect_one(task) -> tuple[str, dict | None, list[str]]:
    """Worker: localize one image; returns (image_id, row or None, notes)."""
    entry_manifest, dataset_manifest, mode_variant, k, skip_missing, verbose = task
    notes: list[str] = []
    mode = SimilarityMode(mode_variant)
    try:
        entry = entry_manifest
        manifest, manifest_dir = _manifest_for(entry, Path(dataset_manifest))
        features = _load_feature_inputs(manifest, manifest_dir, mode)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            result = localize_details(features, manifest, k=k, mode=mode)
        notes.extend(f"{entry.image_id}: {w.message}" for w in caught)
        if verbose:
            deg = result.degrees.degrees
            notes.append(
                f"{entry.image_id}: N={manifest.num_patches} seed={result.seed} "
                f"degree min/median/max = {int(deg.min())}/{int(sorted(deg)[len(deg) // 2])}/"
                f"{int(deg.max())}"
            )
        box = result.box
    except (FileNotFoundError, ValueError) as exc:
        if not skip_missing:
            raise
        notes.append(f"{entry_manifest.image_id}: skipped ({exc})")
        return entry_manifest.image_id, None, notes
    row = {
        "image_id": entry_manifest.image_id,
        "box": (box.x_min, box.y_min, box.x_max, box.y_max),
        "score": box.score,
    }
    return entry_manifest.image_id, row, notes


def _rows_to_detections(rows: list[dict]) -> list[datasets.Detection]:
    from .boxes import PixelBox

    return [
        datasets.Detection(r["image_id"], PixelBox(*r["box"], score=r["score"]))
        for r in rows
    ]


def cmd_detect(args) -> int:
    entries = datasets.read_dataset_manifest(args.dataset_manifest)
    tasks = [
        (e, str(args.dataset_manifest), args.mode, args.k, args.skip_missing, args.verbose)
        for e in entries
    ]
    if args.jobs > 1 and len(tasks) > 1:
        with Pool(args.jobs) as pool:
            results = pool.map(_detect_one, tasks)
    else:
        results = [_detect_one(t) for t in tasks]
    rows = []
    for _, row, notes in results:
        for note in notes:
            _log(note)
        if row is not None:
            rows.append(row)
    datasets.write_predictions(_rows_to_detections(rows), args.out)
    _log(f"detect: wrote {len(rows)} boxes to {args.out}")
    return 0


def cmd_baseline(args) -> int:
    entries = datasets.read_dataset_manifest(args.dataset_manifest)
    selection = attnseg.HeadSelection.parse(args.head)
    detections = []
    for entry in entries:
        try:
            manifest, manifest_dir = _manifest_for(entry, Path(args.dataset_manifest))
            rel = manifest.feature_files.get("attention")
            if rel is None:
                raise FileNotFoundError(
                    f"image {entry.image_id!r}: manifest lists no attention file"
                )
            att = tensorio.read_attention_stack(manifest_dir / rel)
            box = attnseg.select_head_box(att, manifest, selection)
        except (FileNotFoundError, ValueError) as exc:
            if not args.skip_missing:
                raise
            _log(f"{entry.image_id}: skipped ({exc})")
            continue
        detections.append(datasets.Detection(entry.image_id, box, method="attnseg"))
    datasets.write_predictions(detections, args.out)
    _log(f"baseline: wrote {len(detections)} boxes to {args.out}")
    return 0


def cmd_cluster(args) -> int:
    preds = datasets.read_predictions(args.predictions)
    descriptors = tensorio.read_crop_descriptors(args.descriptors)
    by_id = {d.image_id: d for d in descriptors}
    missing = [p.image_id for p in preds if p.image_id not in by_id]
    if missing:
        raise ValueError(f"no crop descriptor for images: {missing[:5]}")
    ordered = [by_id[p.image_id] for p in sorted(preds, key=lambda p: p.image_id)]
    k = args.clusters
    if k is None:
        if not (args.gt_voc or args.gt_coco):
            raise ValueError("--clusters not given: pass it, or ground truth to infer "
                             "the class count (--gt-voc/--gt-coco)")
        k = len(_load_ground_truth(args).class_names())
        _log(f"cluster: K defaulting to the dataset's class count ({k})")
    model = cluster.kmeans(ordered, k, seed=args.seed)
    labeled = [
        datasets.Detection(
            p.image_id, p.box.with_label(model.assignments[p.image_id]),
            p.score, model.assignments[p.image_id],
        )
        for p in preds
    ]
    labeled.sort(key=lambda p: p.image_id)
    datasets.write_predictions(labeled, args.out_predictions)
    model.save(args.out_model)
    _log(
        f"cluster: K={model.k} inertia={model.inertia:.6g} "
        f"({len(model.inertia_history)} iterations)"
    )
    return 0


def _load_ground_truth(args) -> datasets.AnnotationSet:
    if args.gt_voc:
        xmls = sorted(Path(args.gt_voc).glob("*.xml"))
        if not xmls:
            raise FileNotFoundError(f"no .xml annotation files under {args.gt_voc}")
        gt = datasets.parse_voc(xmls)
    elif args.gt_coco:
        ids = None
        if args.coco_ids:
            ids = [
                line.strip()
                for line in Path(args.coco_ids).read_text(encoding="utf-8").splitlines()
                if line.strip()
            ]
        gt = datasets.parse_coco(args.gt_coco, image_ids=ids)
    else:
        raise ValueError("ground truth required: pass --gt-voc DIR or --gt-coco FILE")
    return datasets.apply_filter(gt, datasets.DatasetFilter(args.filter))


def _emit_report(report: evalmetrics.EvalReport, args) -> None:
    report.save(args.out)
    table = report.format_table()
    if args.table:
        Path(args.table).write_text(table + "\n", encoding="utf-8")
    _log(f"eval: report written to {args.out}")


def cmd_eval(args) -> int:
    if args.metric in ("corloc", "ap", "odap") and args.predictions is None:
        raise ValueError(f"eval {args.metric} needs --predictions")
    if args.metric == "corret" and args.descriptors is None:
        raise ValueError("eval corret needs --descriptors")
    gt = _load_ground_truth(args)
    if args.metric == "corloc":
        preds = datasets.read_predictions(args.predictions)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            report = evalmetrics.corloc_report(preds, gt)
        for w in caught:
            _log(str(w.message))
    elif args.metric == "ap":
        preds = datasets.read_predictions(args.predictions)
        labeled = [p for p in preds if p.label is not None]
        if labeled:
            class_map = cluster.match_clusters(labeled, gt, iou_threshold=args.iou)
            if args.out_map:
                class_map.save(args.out_map)
            per_class = {}
            for cluster_id, class_name in sorted(class_map.pairs.items()):
                scoped = [p for p in labeled if p.label == cluster_id]
                per_class[class_name] = evalmetrics.average_precision(
                    scoped, gt, class_name, args.iou
                )
            covered = sorted(gt.class_names() - set(per_class))
            for class_name in covered:
                per_class[class_name] = 0.0
            mean_ap = sum(per_class.values()) / len(per_class)
            report = evalmetrics.EvalReport(
                metrics={"mean_ap": mean_ap},
                per_class=per_class,
                counts={"classes": len(per_class), "predictions": len(labeled)},
            )
        else:
            value = evalmetrics.average_precision(preds, gt, None, args.iou)
            report = evalmetrics.EvalReport(
                metrics={"ap": value}, counts={"predictions": len(preds)}
            )
    elif args.metric == "odap":
        preds = datasets.read_predictions(args.predictions)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            report = evalmetrics.od_ap(preds, gt, list(evalmetrics.ODAP_RANGE_THRESHOLDS))
            report.metrics["odAP[50-95]"] = report.metrics.pop("odAP_mean")
        for w in caught:
            _log(str(w.message))
    elif args.metric == "corret":
        descriptors = tensorio.read_crop_descriptors(args.descriptors)
        neighbors = cluster.retrieve_neighbors(descriptors, tau=args.tau)
        gt_classes = {i: gt.classes_of(i) for i in gt.images()}
        value = evalmetrics.corret(neighbors, gt_classes, tau=args.tau)
        report = evalmetrics.EvalReport(
            metrics={"corret": value},
            counts={"images": len(neighbors), "tau": args.tau},
        )
    else:  # pragma: no cover - argparse restricts choices
        raise ValueError(f"unknown metric {args.metric!r}")
    _emit_report(report, args)
    return 0


def cmd_render(args) -> int:
    entries = datasets.read_dataset_manifest(args.dataset_manifest)
    if args.image_id:
        entries = [e for e in entries if e.image_id in set(args.image_id)]
    mode = SimilarityMode(args.mode)
    written = 0
    for entry in entries:
        manifest, manifest_dir = _manifest_for(entry, Path(args.dataset_manifest))
        features = _load_feature_inputs(manifest, manifest_dir, mode)
        image_path = render.find_image_file(args.images_root, entry.image_id)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            result = localize_details(
                features, manifest, k=args.k, mode=mode, with_seed_only_box=True
            )
        for w in caught:
            _log(f"{entry.image_id}: {w.message}")
        paths = render.render_image(image_path, result, manifest, args.out_dir)
        written += len(paths)
    _log(f"render: wrote {written} files to {args.out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seedloc",
        description="Unsupervised object localization from exported transformer patch features.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    detect = sub.add_parser("detect", help="one box per image via low-degree seed expansion")
    detect.add_argument("--dataset-manifest", required=True, type=Path)
    detect.add_argument("--mode", default="key", choices=["key", "query", "value", "sym-qk"])
    detect.add_argument("--k", type=int, default=DEFAULT_K, help="seed expansion budget")
    detect.add_argument("--out", required=True, type=Path)
    detect.add_argument("--jobs", type=int, default=1)
    detect.add_argument("--skip-missing", action="store_true",
                        help="skip images with missing/broken inputs instead of aborting")
    detect.add_argument("--verbose", action="store_true", help="degree statistics to stderr")
    detect.set_defaults(func=cmd_detect)

    baseline = sub.add_parser("baseline", help="one box per image from CLS attention maps")
    baseline.add_argument("--dataset-manifest", required=True, type=Path)
    baseline.add_argument("--head", default=str(attnseg.DEFAULT_FIXED_HEAD),
                          help="head index, 'bcc' or 'haiou'")
    baseline.add_argument("--out", required=True, type=Path)
    baseline.add_argument("--skip-missing", action="store_true")
    baseline.set_defaults(func=cmd_baseline)

    clus = sub.add_parser("cluster", help="pseudo-label predictions by K-means on crop descriptors")
    clus.add_argument("--predictions", required=True, type=Path)
    clus.add_argument("--descriptors", required=True, type=Path)
    clus.add_argument("--clusters", type=int,
                      help="cluster count; defaults to the class count of the given ground truth")
    clus.add_argument("--seed", type=int, default=0)
    clus.add_argument("--gt-voc", type=Path, help="VOC XML directory (to infer --clusters)")
    clus.add_argument("--gt-coco", type=Path, help="COCO JSON (to infer --clusters)")
    clus.add_argument("--coco-ids", type=Path)
    clus.add_argument("--filter", default="all", choices=["all", "noh"])
    clus.add_argument("--out-predictions", required=True, type=Path)
    clus.add_argument("--out-model", required=True, type=Path)
    clus.set_defaults(func=cmd_cluster)

    ev = sub.add_parser("eval", help="evaluation metrics against VOC/COCO ground truth")
    ev.add_argument("metric", choices=["corloc", "ap", "odap", "corret"])
    ev.add_argument("--predictions", type=Path)
    ev.add_argument("--descriptors", type=Path, help="crop descriptors (corret)")
    ev.add_argument("--gt-voc", type=Path, help="directory of VOC annotation XMLs")
    ev.add_argument("--gt-coco", type=Path, help="COCO annotation JSON")
    ev.add_argument("--coco-ids", type=Path, help="file of image ids restricting --gt-coco")
    ev.add_argument("--filter", default="all", choices=["all", "noh"])
    ev.add_argument("--iou", type=float, default=0.5)
    ev.add_argument("--tau", type=int, default=10)
    ev.add_argument("--out", required=True, type=Path)
    ev.add_argument("--table", type=Path, help="also write an aligned plain-text table")
    ev.add_argument("--out-map", type=Path, help="write the cluster-to-class map (ap)")
    ev.set_defaults(func=cmd_eval)

    rend = sub.add_parser("render", help="overlay and inverse-degree heatmap per image")
    rend.add_argument("--dataset-manifest", required=True, type=Path)
    rend.add_argument("--images-root", required=True, type=Path)
    rend.add_argument("--out-dir", required=True, type=Path)
    rend.add_argument("--mode", default="key", choices=["key", "query", "value", "sym-qk"])
    rend.add_argument("--k", type=int, default=DEFAULT_K)
    rend.add_argument("--image-id", action="append", help="restrict to specific image ids")
    rend.set_defaults(func=cmd_render)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, IndexError) as exc:
        _log(f"error: {exc}")
        return 1


def entrypoint() -> None:  # console_scripts target
    sys.exit(main())
