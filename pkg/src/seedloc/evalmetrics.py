"""Object-discovery measurement stack: IoU, CorLoc, average precision, the
per-image-capped AP family (odAP), and neighbor-retrieval accuracy (CorRet).

CorLoc is class-agnostic: an image counts as correct when its single predicted
box reaches IoU >= 0.5 with any ground-truth box. AP uses all-point
interpolation (area under the precision envelope over recall). odAP caps each
image's predictions at its top-n scored boxes, averages the class-agnostic AP
over n = 1 .. max ground-truth count, and optionally over IoU thresholds.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .boxes import PixelBox
from .datasets import AnnotationSet, Detection


@dataclass
class EvalReport:
    metrics: dict[str, float] = field(default_factory=dict)
    per_class: dict[str, float] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {"metrics": self.metrics, "per_class": self.per_class, "counts": self.counts},
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        doc = json.loads(text)
        return cls(
            metrics={str(k): float(v) for k, v in doc.get("metrics", {}).items()},
            per_class={str(k): float(v) for k, v in doc.get("per_class", {}).items()},
            counts={str(k): int(v) for k, v in doc.get("counts", {}).items()},
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    def format_table(self) -> str:
        """Aligned plain-text rendering; percentages print as given, fractions as percent."""
        rows: list[tuple[str, str]] = []
        for name, value in sorted(self.metrics.items()):
            shown = value * 100.0 if _is_fraction_metric(name) else value
            rows.append((name, f"{shown:.2f}"))
        for name, value in sorted(self.per_class.items()):
            rows.append((f"AP[{name}]", f"{value * 100.0:.2f}"))
        for name, value in sorted(self.counts.items()):
            rows.append((name, str(value)))
        width = max((len(n) for n, _ in rows), default=0)
        return "\n".join(f"{n.ljust(width)}  {v}" for n, v in rows)


def _is_fraction_metric(name: str) -> bool:
    return name.startswith(("ap", "odAP", "mean_ap"))


def iou(a: PixelBox, b: PixelBox) -> float:
    """Intersection over union of two half-open pixel boxes, in [0, 1]."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union


def _corloc_counts(preds: list[Detection], gt: AnnotationSet) -> tuple[int, int, int]:
    seen: set[str] = set()
    hits = evaluated = skipped = 0
    for p in preds:
        if p.image_id in seen:
            raise ValueError(f"multiple predictions for image {p.image_id!r}")
        seen.add(p.image_id)
        objects = gt.objects_of(p.image_id) if p.image_id in gt.images() else []
        if not objects:
            warnings.warn(f"image {p.image_id!r} has no ground truth; excluded from CorLoc")
            skipped += 1
            continue
        evaluated += 1
        if any(iou(p.box, obj.box) >= 0.5 for obj in objects):
            hits += 1
    if evaluated == 0:
        raise ValueError("no evaluable images (no predictions with ground truth)")
    return hits, evaluated, skipped


def corloc(preds: list[Detection], gt: AnnotationSet) -> float:
    """Percentage of images whose single box hits any ground-truth box at IoU >= 0.5.

    Images without ground truth are excluded with a warning. Raises ValueError
    when an image carries more than one prediction.
    """
    hits, evaluated, _ = _corloc_counts(preds, gt)
    return 100.0 * hits / evaluated


def corloc_report(preds: list[Detection], gt: AnnotationSet) -> EvalReport:
    hits, evaluated, skipped = _corloc_counts(preds, gt)
    return EvalReport(
        metrics={"corloc": 100.0 * hits / evaluated},
        counts={"images_evaluated": evaluated, "images_skipped": skipped, "hits": hits},
    )


def _rank_predictions(preds: list[Detection]) -> list[Detection]:
    per_image_index: dict[str, int] = {}
    keyed = []
    for p in preds:
        idx = per_image_index.get(p.image_id, 0)
        per_image_index[p.image_id] = idx + 1
        keyed.append(((-p.score, p.image_id, idx), p))
    keyed.sort(key=lambda t: t[0])
    return [p for _, p in keyed]


def _envelope_ap(recalls: np.ndarray, precisions: np.ndarray) -> float:
    """Area under the precision envelope over recall (all-point interpolation)."""
    mrec = np.concatenate(([0.0], recalls, [recalls[-1] if recalls.size else 0.0]))
    mpre = np.concatenate(([0.0], precisions, [0.0]))
    for i in range(mpre.size - 1, 0, -1):
        mpre[i - 1] = max(mpre[i - 1], mpre[i])
    ap = 0.0
    for i in range(1, mrec.size):
        ap += (mrec[i] - mrec[i - 1]) * mpre[i]
    return float(ap)


def average_precision(
    preds: list[Detection],
    gt: AnnotationSet,
    class_name: str | None = None,
    iou_thr: float = 0.5,
) -> float:
    """All-point-interpolated AP at one IoU threshold.

    Predictions are ranked by descending score (ties by image id, then input
    order within the image) and matched greedily to the not-yet-matched
    ground-truth box with the highest IoU >= threshold. class_name=None scores
    class-agnostically over all ground truth.
    """
    if any(not np.isfinite(p.score) for p in preds):
        raise ValueError("non-finite prediction score")

    gt_boxes: dict[str, list[PixelBox]] = {}
    total_gt = 0
    for image_id in gt.images():
        boxes = [
            obj.box
            for obj in gt.objects_of(image_id)
            if class_name is None or obj.class_name == class_name
        ]
        if boxes:
            gt_boxes[image_id] = boxes
            total_gt += len(boxes)
    if total_gt == 0:
        return 0.0

    ranked = _rank_predictions(preds)
    matched: dict[str, list[bool]] = {k: [False] * len(v) for k, v in gt_boxes.items()}
    tp = []
    for p in ranked:
        boxes = gt_boxes.get(p.image_id, [])
        best_j, best_iou = -1, 0.0
        for j, box in enumerate(boxes):
            if matched[p.image_id][j]:
                continue
            value = iou(p.box, box)
            if value >= iou_thr and value > best_iou:
                best_j, best_iou = j, value
        if best_j >= 0:
            matched[p.image_id][best_j] = True
            tp.append(1.0)
        else:
            tp.append(0.0)
    if not tp:
        return 0.0

    tp_arr = np.asarray(tp)
    cum_tp = np.cumsum(tp_arr)
    ranks = np.arange(1, tp_arr.size + 1)
    return _envelope_ap(cum_tp / total_gt, cum_tp / ranks)


def od_ap(
    preds: list[Detection],
    gt: AnnotationSet,
    thresholds: list[float] = (0.5,),
) -> EvalReport:
    """Class-agnostic AP averaged over per-image prediction caps n = 1 .. max GT count.

    For each n, every image keeps only its n highest-scored predictions (input
    order breaks score ties). The per-threshold metric is the mean AP over n;
    with several thresholds the report also carries their average.
    """
    gt_images = {i for i in gt.images() if gt.objects_of(i)}
    usable = [p for p in preds if p.image_id in gt_images]
    dropped = len(preds) - len(usable)
    if dropped:
        warnings.warn(f"{dropped} predictions on images without ground truth ignored")
    max_gt = max((len(gt.objects_of(i)) for i in gt_images), default=0)
    if max_gt == 0:
        raise ValueError("no ground-truth boxes to evaluate against")

    by_image: dict[str, list[Detection]] = {}
    for p in usable:
        by_image.setdefault(p.image_id, []).append(p)
    for image_id, plist in by_image.items():
        plist.sort(key=lambda p: -p.score)  # stable: input order on score ties

    report = EvalReport(
        counts={
            "images": len(gt_images),
            "predictions": len(usable),
            "max_gt_per_image": max_gt,
        }
    )
    per_threshold = []
    for thr in thresholds:
        ap_per_n = []
        for n in range(1, max_gt + 1):
            capped = [p for plist in by_image.values() for p in plist[:n]]
            ap_per_n.append(average_precision(capped, gt, None, thr))
        value = float(np.mean(ap_per_n)) if ap_per_n else 0.0
        per_threshold.append(value)
        report.metrics[f"odAP{round(thr * 100):02d}"] = value
    if len(per_threshold) > 1:
        report.metrics["odAP_mean"] = float(np.mean(per_threshold))
    return report


ODAP_RANGE_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))


def corret(
    neighbors: dict[str, list[str]],
    gt_classes: dict[str, set[str]],
    tau: int,
) -> float:
    """Mean percentage of retrieved neighbors sharing at least one class with the query."""
    if not neighbors:
        raise ValueError("no neighbor lists given")
    fractions = []
    for image_id, retrieved in neighbors.items():
        if len(retrieved) != tau:
            raise ValueError(
                f"image {image_id!r} has {len(retrieved)} neighbors, expected tau={tau}"
            )
        if image_id not in gt_classes:
            raise ValueError(f"missing class info for image {image_id!r}")
        own = gt_classes[image_id]
        good = 0
        for other in retrieved:
            if other not in gt_classes:
                raise ValueError(f"missing class info for neighbor {other!r}")
            if own & gt_classes[other]:
                good += 1
        fractions.append(good / tau)
    return 100.0 * float(np.mean(fractions))
