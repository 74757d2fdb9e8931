"""File formats: datasets, predictions, pools, configs, and reports.

Datasets use a minimal COCO-style subset so real annotation files can be
adapted without committing to full COCO semantics. All loaders validate type
invariants and point at the offending record; unknown fields warn instead of
failing so documents can grow fields without breaking old readers.
"""

from __future__ import annotations

import json
import os
import warnings
from pathlib import Path

from filelock import FileLock

from .geometry import hflip_box
from .model import (
    BoundingBox,
    Category,
    ClassDistribution,
    Dataset,
    Detection,
    ExperimentConfig,
    GroundTruthObject,
    ImageRecord,
    PoolState,
    ValidationError,
)

POOL_SCHEMA_VERSION = 1
REPORTS_SCHEMA_VERSION = 1

_DATASET_KEYS = {"images", "annotations", "categories"}
_IMAGE_KEYS = {"id", "width", "height", "file_name"}
_ANNOTATION_KEYS = {"id", "image_id", "bbox", "category_id"}
_CATEGORY_KEYS = {"id", "name"}
_PREDICTIONS_KEYS = {"branch", "frame", "detections"}
_DETECTION_KEYS = {"id", "image_id", "bbox", "probs"}

_CONFIG_KEYS = {
    "tau_conf",
    "iou_pos",
    "iou_bg",
    "delta_pos",
    "delta_bg",
    "enlarge_factor",
    "conf_trust",
    "loc_budget_fraction",
    "cycle_budgets_ms",
    "dataset_profile",
    "custom_costs",
    "seed",
}
# Run-level keys consumed by the CLI layer, not by ExperimentConfig itself.
_RUN_KEYS = {"dataset", "provider", "scenario", "noise"}


def _read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from None


def _warn_unknown(doc: dict, known: set, where: str) -> None:
    extra = set(doc) - known
    if extra:
        warnings.warn(f"{where}: ignoring unknown fields {sorted(extra)}", stacklevel=3)


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise ValidationError(f"{where}: missing required field {key!r}")
    return doc[key]


def dump_json(doc: dict) -> str:
    """Canonical JSON encoding: stable key order, no locale surprises."""
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


# --------------------------------------------------------------------------
# Dataset


def load_dataset(path) -> Dataset:
    doc = _read_json(path)
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: dataset document must be a JSON object")
    _warn_unknown(doc, _DATASET_KEYS, str(path))

    raw_categories = _require(doc, "categories", str(path))
    categories = []
    for i, cat in enumerate(raw_categories):
        where = f"{path}: categories[{i}]"
        _warn_unknown(cat, _CATEGORY_KEYS, where)
        categories.append(
            Category(id=int(_require(cat, "id", where)), name=str(_require(cat, "name", where)))
        )
    categories.sort(key=lambda c: c.id)
    if len({c.id for c in categories}) != len(categories):
        raise ValidationError(f"{path}: duplicate category ids")
    class_index = {c.id: k for k, c in enumerate(categories)}

    images: dict[str, ImageRecord] = {}
    for i, img in enumerate(_require(doc, "images", str(path))):
        where = f"{path}: images[{i}]"
        _warn_unknown(img, _IMAGE_KEYS, where)
        rec = ImageRecord(
            id=str(_require(img, "id", where)),
            width=float(_require(img, "width", where)),
            height=float(_require(img, "height", where)),
            raster_path=str(img["file_name"]) if img.get("file_name") else None,
        )
        if rec.id in images:
            raise ValidationError(f"{where}: duplicate image id {rec.id!r}")
        images[rec.id] = rec

    for i, ann in enumerate(_require(doc, "annotations", str(path))):
        where = f"{path}: annotations[{i}]"
        _warn_unknown(ann, _ANNOTATION_KEYS, where)
        image_id = str(_require(ann, "image_id", where))
        if image_id not in images:
            raise ValidationError(f"{where}: unknown image_id {image_id!r}")
        category_id = int(_require(ann, "category_id", where))
        if category_id not in class_index:
            raise ValidationError(f"{where}: unknown category_id {category_id}")
        try:
            box = BoundingBox.from_list(_require(ann, "bbox", where))
        except ValidationError as exc:
            raise ValidationError(f"{where}: {exc}") from None
        images[image_id].gt_objects.append(
            GroundTruthObject(
                id=str(_require(ann, "id", where)),
                box=box,
                class_id=class_index[category_id],
            )
        )

    dataset = Dataset(images=list(images.values()), categories=categories)
    dataset.validate()
    return dataset


def save_dataset(dataset: Dataset, path) -> None:
    doc = {
        "images": [
            {
                "id": img.id,
                "width": img.width,
                "height": img.height,
                **({"file_name": img.raster_path} if img.raster_path else {}),
            }
            for img in dataset.images
        ],
        "annotations": [
            {
                "id": obj.id,
                "image_id": img.id,
                "bbox": obj.box.to_list(),
                "category_id": dataset.categories[obj.class_id].id,
            }
            for img in dataset.images
            for obj in img.gt_objects
        ],
        "categories": [{"id": c.id, "name": c.name} for c in dataset.categories],
    }
    Path(path).write_text(dump_json(doc), encoding="utf-8")


# --------------------------------------------------------------------------
# Predictions


def load_predictions(path, branch: int, dataset: Dataset) -> list[Detection]:
    """Load one branch's detections, mapped into the primary frame.

    Branch-2 files carry boxes in the flipped frame and are unflipped here,
    so every downstream consumer sees a single coordinate system.
    """
    doc = _read_json(path)
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: predictions document must be a JSON object")
    _warn_unknown(doc, _PREDICTIONS_KEYS, str(path))
    file_branch = int(_require(doc, "branch", str(path)))
    if file_branch != branch:
        raise ValidationError(f"{path}: expected branch {branch}, file says {file_branch}")
    frame = str(_require(doc, "frame", str(path)))
    expected_frame = "flipped" if branch == 2 else "original"
    if frame != expected_frame:
        raise ValidationError(
            f"{path}: branch {branch} must declare frame {expected_frame!r}, got {frame!r}"
        )

    detections = []
    seen: set[str] = set()
    for i, det in enumerate(_require(doc, "detections", str(path))):
        where = f"{path}: detections[{i}]"
        _warn_unknown(det, _DETECTION_KEYS, where)
        det_id = str(_require(det, "id", where))
        if det_id in seen:
            raise ValidationError(f"{where}: duplicate detection id {det_id!r}")
        seen.add(det_id)
        image_id = str(_require(det, "image_id", where))
        if not dataset.has_image(image_id):
            raise ValidationError(f"{where}: unknown image_id {image_id!r}")
        try:
            box = BoundingBox.from_list(_require(det, "bbox", where))
            probs = ClassDistribution(tuple(float(p) for p in _require(det, "probs", where)))
        except ValidationError as exc:
            raise ValidationError(f"{where}: {exc}") from None
        if len(probs) != dataset.num_classes:
            raise ValidationError(
                f"{where}: {len(probs)} probabilities for {dataset.num_classes} classes"
            )
        image = dataset.image(image_id)
        if frame == "flipped":
            box = hflip_box(box, image.width)
        if not box.fits_in(image.width, image.height):
            raise ValidationError(f"{where}: box {box.as_tuple()} exceeds image bounds")
        detections.append(Detection(id=det_id, image_id=image_id, box=box, class_dist=probs))
    return detections


def save_predictions(detections: list[Detection], path, branch: int) -> None:
    """Write one branch's detections as produced (branch 2: flipped frame)."""
    doc = {
        "branch": branch,
        "frame": "flipped" if branch == 2 else "original",
        "detections": [
            {
                "id": det.id,
                "image_id": det.image_id,
                "bbox": det.box.to_list(),
                "probs": list(det.class_dist.probs),
            }
            for det in detections
        ],
    }
    Path(path).write_text(dump_json(doc), encoding="utf-8")


# --------------------------------------------------------------------------
# Pool


def save_pool(pool: PoolState, path) -> None:
    doc = {"version": POOL_SCHEMA_VERSION, **pool.to_dict()}
    Path(path).write_text(dump_json(doc), encoding="utf-8")


def load_pool(path) -> PoolState:
    doc = _read_json(path)
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: pool document must be a JSON object")
    version = doc.get("version")
    if version != POOL_SCHEMA_VERSION:
        raise ValidationError(f"{path}: unsupported pool version {version!r}")
    _warn_unknown(doc, {"version", "entries"}, str(path))
    try:
        return PoolState.from_dict(doc)
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"{path}: malformed pool entry ({exc})") from None


# --------------------------------------------------------------------------
# Config


def load_config(path, env: dict | None = None) -> tuple[ExperimentConfig, dict]:
    """Read an experiment config plus run-level sections.

    Returns (config, run_spec) where run_spec holds the dataset/provider
    sections the orchestration layer interprets. DELR_SEED in the environment
    overrides the file's seed.
    """
    doc = _read_json(path)
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    _warn_unknown(doc, _CONFIG_KEYS | _RUN_KEYS, str(path))

    fields = {k: doc[k] for k in _CONFIG_KEYS if k in doc}
    if "cycle_budgets_ms" in fields:
        fields["cycle_budgets_ms"] = [int(b) for b in fields["cycle_budgets_ms"]]
    if "seed" in fields:
        fields["seed"] = int(fields["seed"])

    env = os.environ if env is None else env
    if "DELR_SEED" in env:
        try:
            fields["seed"] = int(env["DELR_SEED"])
        except ValueError:
            raise ValidationError(f"DELR_SEED must be an integer, got {env['DELR_SEED']!r}")

    try:
        cfg = ExperimentConfig(**fields)
    except TypeError as exc:
        raise ValidationError(f"{path}: bad config field ({exc})") from None
    run_spec = {k: doc[k] for k in _RUN_KEYS if k in doc}
    return cfg, run_spec


# --------------------------------------------------------------------------
# Reports


def write_reports(reports, out_dir, cfg: ExperimentConfig | None = None) -> Path:
    """Write the report series and per-cycle pool snapshots into a directory.

    Output bytes are a pure function of the inputs (stable key order, no
    timestamps), so identical runs produce identical files. Writers take an
    exclusive lock so concurrent runs cannot interleave in one directory.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with FileLock(str(out / ".lock")):
        doc = {
            "version": REPORTS_SCHEMA_VERSION,
            "config": cfg.to_dict() if cfg is not None else None,
            "cycles": [r.to_dict() for r in reports],
        }
        (out / "reports.json").write_text(dump_json(doc), encoding="utf-8")
        for report in reports:
            snap = {"version": POOL_SCHEMA_VERSION, **report.pool_snapshot}
            (out / report.pool_snapshot_ref).write_text(dump_json(snap), encoding="utf-8")
    return out / "reports.json"


def load_reports(in_dir) -> dict:
    return _read_json(Path(in_dir) / "reports.json")


def reports_to_csv(doc: dict) -> str:
    """Flatten a report series to one CSV row per cycle."""
    import csv
    import io

    columns = [
        "cycle_index",
        "bucket_low",
        "bucket_mid",
        "bucket_high",
        "cls_acc_given_correct_loc",
        "box_tasks",
        "box_keeps",
        "box_drops",
        "box_corrections",
        "class_tasks",
        "class_keeps",
        "class_corrections",
        "trusted",
        "spent_loc_ms",
        "spent_cls_ms",
        "remaining_ms",
        "cumulative_spent_ms",
    ]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for cycle in doc.get("cycles", []):
        metrics = cycle.get("metrics", {})
        buckets = metrics.get("iou_buckets") or [None, None, None]
        box = cycle.get("box_pass", {})
        cls = cycle.get("class_pass", {})
        budget = metrics.get("budget", {})
        writer.writerow(
            [
                cycle.get("cycle_index"),
                buckets[0],
                buckets[1],
                buckets[2],
                metrics.get("cls_acc_given_correct_loc"),
                box.get("tasks_issued"),
                box.get("keeps"),
                box.get("drops"),
                box.get("corrections"),
                cls.get("tasks_issued"),
                cls.get("keeps"),
                cls.get("corrections"),
                cls.get("trusted"),
                budget.get("spent_loc_ms"),
                budget.get("spent_cls_ms"),
                budget.get("remaining_ms"),
                (cycle.get("cumulative_spent_loc_ms") or 0)
                + (cycle.get("cumulative_spent_cls_ms") or 0),
            ]
        )
    return buf.getvalue()
