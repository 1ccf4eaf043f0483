"""Ground-truth ingestion (VOC XML, COCO JSON), the hard/truncated filter,
prediction persistence (JSON Lines) and the dataset manifest.

Coordinate conventions: everything in-memory is 0-based half-open pixels.
VOC's 1-based inclusive boxes become (xmin-1, ymin-1, xmax, ymax); COCO's
[x, y, w, h] become (x, y, x+w, y+h).
"""

from __future__ import annotations

import json
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

from .boxes import PixelBox


@dataclass(frozen=True)
class GtObject:
    class_name: str
    box: PixelBox
    difficult: bool = False
    truncated: bool = False


@dataclass(eq=False)
class AnnotationSet:
    """Ground-truth boxes with class names per image, plus recorded image sizes."""

    sizes: dict[str, tuple[int, int]] = field(default_factory=dict)  # id -> (w, h)
    annotations: dict[str, list[GtObject]] = field(default_factory=dict)

    def __post_init__(self):
        for image_id, objects in self.annotations.items():
            if image_id not in self.sizes:
                raise ValueError(f"annotations for {image_id!r} but no recorded size")
            w, h = self.sizes[image_id]
            for obj in objects:
                if obj.box.x_max > w or obj.box.y_max > h:
                    raise ValueError(
                        f"{image_id!r}: box {obj.box.corners()} exceeds image size {w}x{h}"
                    )

    def images(self) -> list[str]:
        return sorted(self.sizes)

    def objects_of(self, image_id: str) -> list[GtObject]:
        return self.annotations.get(image_id, [])

    def class_names(self) -> set[str]:
        return {o.class_name for objs in self.annotations.values() for o in objs}

    def classes_of(self, image_id: str) -> set[str]:
        return {o.class_name for o in self.objects_of(image_id)}

    def to_json(self) -> str:
        doc = {
            image_id: {
                "size": list(self.sizes[image_id]),
                "objects": [
                    {
                        "class": o.class_name,
                        "box": list(o.box.corners()),
                        "difficult": o.difficult,
                        "truncated": o.truncated,
                    }
                    for o in self.objects_of(image_id)
                ],
            }
            for image_id in self.images()
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "AnnotationSet":
        doc = json.loads(text)
        sizes = {}
        annotations = {}
        for image_id, entry in doc.items():
            sizes[image_id] = tuple(entry["size"])
            annotations[image_id] = [
                GtObject(
                    class_name=o["class"],
                    box=PixelBox(*o["box"]),
                    difficult=bool(o["difficult"]),
                    truncated=bool(o["truncated"]),
                )
                for o in entry["objects"]
            ]
        return cls(sizes, annotations)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "AnnotationSet":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


FILTER_MODES = ("all", "noh")


@dataclass(frozen=True)
class DatasetFilter:
    """all keeps everything; noh drops hard/truncated boxes and images left empty by that."""

    mode: str = "all"

    def __post_init__(self):
        if self.mode not in FILTER_MODES:
            raise ValueError(f"unknown filter mode {self.mode!r}, expected one of {FILTER_MODES}")


def apply_filter(annotations: AnnotationSet, f: DatasetFilter) -> AnnotationSet:
    if f.mode == "all":
        return annotations
    sizes = {}
    kept = {}
    for image_id in annotations.images():
        objects = [
            o for o in annotations.objects_of(image_id) if not (o.difficult or o.truncated)
        ]
        if objects:
            sizes[image_id] = annotations.sizes[image_id]
            kept[image_id] = objects
    return AnnotationSet(sizes, kept)


def _req_int(element: ET.Element, tag: str, path) -> int:
    node = element.find(tag)
    if node is None or node.text is None:
        raise ValueError(f"{path}: missing <{tag}>")
    return int(float(node.text))


def parse_voc(xml_paths) -> AnnotationSet:
    """Parse VOC annotation documents; the image id is the XML file stem."""
    sizes: dict[str, tuple[int, int]] = {}
    annotations: dict[str, list[GtObject]] = {}
    for path in sorted(Path(p) for p in xml_paths):
        try:
            root = ET.parse(path).getroot()
        except ET.ParseError as exc:
            raise ValueError(f"{path}: malformed xml: {exc}") from exc
        size = root.find("size")
        if size is None:
            raise ValueError(f"{path}: missing <size>")
        width = _req_int(size, "width", path)
        height = _req_int(size, "height", path)
        image_id = path.stem
        objects = []
        for obj in root.findall("object"):
            name_node = obj.find("name")
            if name_node is None or not name_node.text:
                raise ValueError(f"{path}: object without <name>")
            bndbox = obj.find("bndbox")
            if bndbox is None:
                raise ValueError(f"{path}: object without <bndbox>")
            xmin = _req_int(bndbox, "xmin", path)
            ymin = _req_int(bndbox, "ymin", path)
            xmax = _req_int(bndbox, "xmax", path)
            ymax = _req_int(bndbox, "ymax", path)
            if xmax <= xmin - 1 or ymax <= ymin - 1:
                raise ValueError(
                    f"{path}: inverted box ({xmin}, {ymin}, {xmax}, {ymax})"
                )
            difficult = obj.findtext("difficult", "0").strip() not in ("", "0")
            truncated = obj.findtext("truncated", "0").strip() not in ("", "0")
            try:
                box = PixelBox(xmin - 1, ymin - 1, xmax, ymax)
            except ValueError as exc:
                raise ValueError(f"{path}: {exc}") from exc
            objects.append(GtObject(name_node.text.strip(), box, difficult, truncated))
        sizes[image_id] = (width, height)
        annotations[image_id] = objects
    return AnnotationSet(sizes, annotations)


def parse_coco(json_path, image_ids=None) -> AnnotationSet:
    """Parse a COCO-schema annotation file; the image id is the file_name stem.

    image_ids optionally restricts the set (useful for published subset lists);
    entries match either the file_name stem or the numeric id as a string.
    """
    try:
        doc = json.loads(Path(json_path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{json_path}: malformed json: {exc}") from exc
    for section in ("images", "annotations", "categories"):
        if section not in doc or not isinstance(doc[section], list):
            raise ValueError(f"{json_path}: schema violation, missing list {section!r}")

    categories = {}
    for cat in doc["categories"]:
        categories[cat["id"]] = str(cat["name"])

    wanted = set(image_ids) if image_ids is not None else None
    id_to_key: dict[int, str] = {}
    sizes: dict[str, tuple[int, int]] = {}
    annotations: dict[str, list[GtObject]] = {}
    for img in doc["images"]:
        try:
            numeric = int(img["id"])
            stem = Path(str(img.get("file_name", numeric))).stem
            width = int(img["width"])
            height = int(img["height"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{json_path}: schema violation in images entry: {exc}") from exc
        if wanted is not None and stem not in wanted and str(numeric) not in wanted:
            continue
        id_to_key[numeric] = stem
        sizes[stem] = (width, height)
        annotations[stem] = []

    for ann in doc["annotations"]:
        try:
            image_numeric = int(ann["image_id"])
            bbox = ann["bbox"]
            category = ann["category_id"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{json_path}: schema violation in annotation: {exc}") from exc
        if image_numeric not in id_to_key:
            if wanted is not None:
                continue
            raise ValueError(f"{json_path}: annotation for unknown image id {image_numeric}")
        if category not in categories:
            raise ValueError(f"{json_path}: unknown category id {category}")
        x, y, w, h = (float(v) for v in bbox)
        if w <= 0 or h <= 0:
            raise ValueError(f"{json_path}: degenerate bbox {bbox}")
        crowd = bool(ann.get("iscrowd", 0))
        key = id_to_key[image_numeric]
        annotations[key].append(
            GtObject(categories[category], PixelBox(x, y, x + w, y + h), difficult=crowd)
        )
    return AnnotationSet(sizes, annotations)


@dataclass(frozen=True)
class Detection:
    """One predicted box with provenance; only the wire fields reach the JSONL file."""

    image_id: str
    box: PixelBox
    score: float = 1.0
    label: int | None = None
    seed: int | None = None
    method: str | None = None


def write_predictions(detections: list[Detection], path) -> None:
    """Append-free full write of the JSON Lines prediction file (stable bytes)."""
    lines = []
    for det in detections:
        row = {
            "image_id": det.image_id,
            "x_min": det.box.x_min,
            "y_min": det.box.y_min,
            "x_max": det.box.x_max,
            "y_max": det.box.y_max,
            "score": det.score,
        }
        if det.label is not None:
            row["label"] = det.label
        lines.append(json.dumps(row, sort_keys=True))
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_predictions(path) -> list[Detection]:
    detections = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            box = PixelBox(row["x_min"], row["y_min"], row["x_max"], row["y_max"],
                           score=row.get("score", 1.0), label=row.get("label"))
            detections.append(
                Detection(str(row["image_id"]), box, box.score, row.get("label"))
            )
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise ValueError(f"{path}:{lineno}: bad prediction line: {exc}") from exc
    return detections


@dataclass(frozen=True)
class DatasetEntry:
    """One image of a dataset manifest: id, size, split and per-image manifest path."""

    image_id: str
    manifest: str
    image_w: int
    image_h: int
    split: str | None = None


def write_dataset_manifest(entries: list[DatasetEntry], path) -> None:
    doc = {
        "images": [
            {
                "image_id": e.image_id,
                "manifest": e.manifest,
                "image_w": e.image_w,
                "image_h": e.image_h,
                **({"split": e.split} if e.split is not None else {}),
            }
            for e in sorted(entries, key=lambda e: e.image_id)
        ]
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_dataset_manifest(path) -> list[DatasetEntry]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: malformed dataset manifest: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("images"), list):
        raise ValueError(f"{path}: dataset manifest must carry an images list")
    entries = []
    for item in doc["images"]:
        try:
            entries.append(
                DatasetEntry(
                    image_id=str(item["image_id"]),
                    manifest=str(item["manifest"]),
                    image_w=int(item["image_w"]),
                    image_h=int(item["image_h"]),
                    split=item.get("split"),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}: bad dataset manifest entry: {exc}") from exc
    return sorted(entries, key=lambda e: e.image_id)
