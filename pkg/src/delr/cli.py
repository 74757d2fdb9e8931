"""Command-line surface.

Exit codes: 0 on success, 2 for validation problems (bad files, bad flags,
bad config), 3 when a request is structurally impossible (budget or packing
infeasibility).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .model import BudgetError, Dataset, ExperimentConfig, InfeasibleError, ValidationError
from .scheduler import FileIngestProvider, MockDetectorProvider, run_baseline, run_experiment
from .storage import (
    dump_json,
    load_config,
    load_dataset,
    load_predictions,
    load_reports,
    reports_to_csv,
    save_dataset,
    save_predictions,
    write_reports,
)
from .synth import NoiseParams, generate_scenario, mock_detect
from .uncertainty import score_annotations

_SCENARIO_DEFAULTS = {
    "num_images": 120,
    "num_classes": 8,
    "objects_per_image_range": (1, 4),
    "box_size_range": (24.0, 96.0),
    "image_size": (640.0, 480.0),
}


def _noise_from(spec: dict) -> NoiseParams:
    known = {"jitter_frac", "class_confusion", "miss_rate", "spurious_rate"}
    unknown = set(spec) - known
    if unknown:
        raise ValidationError(f"unknown noise fields: {sorted(unknown)}")
    return NoiseParams(**{k: float(v) for k, v in spec.items()})


def _scenario_from(spec: dict, seed: int) -> Dataset:
    params = dict(_SCENARIO_DEFAULTS)
    known = set(params)
    unknown = set(spec) - known
    if unknown:
        raise ValidationError(f"unknown scenario fields: {sorted(unknown)}")
    params.update(spec)
    return generate_scenario(
        num_images=int(params["num_images"]),
        num_classes=int(params["num_classes"]),
        objects_per_image_range=tuple(params["objects_per_image_range"]),
        box_size_range=tuple(params["box_size_range"]),
        image_size=tuple(params["image_size"]),
        seed=seed,
    )


def build_runtime(cfg: ExperimentConfig, run_spec: dict):
    """Resolve the dataset and prediction provider a config asks for."""
    if "dataset" in run_spec:
        dataset = load_dataset(run_spec["dataset"])
    else:
        dataset = _scenario_from(run_spec.get("scenario", {}), cfg.seed)

    provider_spec = run_spec.get("provider", {"mode": "mock"})
    mode = provider_spec.get("mode", "mock")
    if mode == "mock":
        noise = _noise_from(run_spec.get("noise", {}))
        provider = MockDetectorProvider(dataset, noise, cfg.seed)
    elif mode == "file":
        cycles = provider_spec.get("cycles")
        if not cycles:
            raise ValidationError("file provider needs 'cycles': [[branch1, branch2], ...]")
        paths = [(str(p1), str(p2)) for p1, p2 in cycles]
        if len(paths) < len(cfg.cycle_budgets_ms):
            raise InfeasibleError(
                f"{len(paths)} prediction file pairs for "
                f"{len(cfg.cycle_budgets_ms)} configured cycles"
            )
        provider = FileIngestProvider(dataset, paths)
    else:
        raise ValidationError(f"unknown provider mode {mode!r}")
    return dataset, provider


def _cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = generate_scenario(
        num_images=args.images,
        num_classes=args.classes,
        objects_per_image_range=(args.objects[0], args.objects[1]),
        box_size_range=(args.box_size[0], args.box_size[1]),
        image_size=(args.image_size[0], args.image_size[1]),
        seed=args.seed,
    )
    noise = NoiseParams(
        jitter_frac=args.jitter,
        class_confusion=args.confusion,
        miss_rate=args.miss,
        spurious_rate=args.spurious,
    )
    branch1, branch2 = mock_detect(dataset, noise, args.seed)
    save_dataset(dataset, out / "dataset.json")
    save_predictions(branch1, out / "pred_branch1.json", branch=1)
    save_predictions(branch2, out / "pred_branch2.json", branch=2)
    print(f"wrote {out / 'dataset.json'} ({len(dataset.images)} images, "
          f"{dataset.total_gt_objects()} objects, {len(branch1)}+{len(branch2)} detections)")
    return 0


def _cmd_score(args) -> int:
    dataset = load_dataset(args.dataset)
    branch1 = load_predictions(args.pred1, branch=1, dataset=dataset)
    branch2 = load_predictions(args.pred2, branch=2, dataset=dataset)
    annotations = score_annotations(dataset, branch1, branch2)
    doc = {"annotations": [a.to_dict() for a in annotations]}
    Path(args.out).write_text(dump_json(doc), encoding="utf-8")
    print(f"scored {len(annotations)} annotations -> {args.out}")
    return 0


def _cmd_loop(args) -> int:
    cfg, run_spec = load_config(args.config)
    dataset, provider = build_runtime(cfg, run_spec)
    reports, _pool = run_experiment(cfg, dataset, provider)
    path = write_reports(reports, args.out, cfg)
    print(f"{len(reports)} cycle(s) -> {path}")
    return 0


def _cmd_baseline(args) -> int:
    cfg, run_spec = load_config(args.config)
    dataset, _provider = build_runtime(cfg, run_spec)
    reports, _pool = run_baseline(cfg, dataset)
    path = write_reports(reports, args.out, cfg)
    report = reports[0].box_pass
    print(f"{report.tasks_issued} image(s) fully annotated -> {path}")
    return 0


def _cmd_report(args) -> int:
    doc = load_reports(args.in_dir)
    Path(args.csv).write_text(reports_to_csv(doc), encoding="utf-8")
    print(f"{len(doc.get('cycles', []))} row(s) -> {args.csv}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import VerificationService, bootstrap_pool, create_app

    cfg, run_spec = load_config(args.config)
    dataset, provider = build_runtime(cfg, run_spec)
    pool = bootstrap_pool(dataset, provider, cfg)
    service = VerificationService(dataset, pool, cfg)
    app = create_app(service, images_dir=args.images_dir)
    print(f"serving {len(pool)} pooled annotations on port {args.port}")
    uvicorn.run(app, host="127.0.0.1", port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="delr",
        description="Budgeted decoupled verification of detection pseudo annotations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scenario plus mock predictions")
    p.add_argument("--images", type=int, required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--objects", type=int, nargs=2, default=(1, 4), metavar=("LO", "HI"))
    p.add_argument("--box-size", type=float, nargs=2, default=(24.0, 96.0), metavar=("MIN", "MAX"))
    p.add_argument(
        "--image-size", type=float, nargs=2, default=(640.0, 480.0), metavar=("W", "H")
    )
    p.add_argument("--jitter", type=float, default=NoiseParams().jitter_frac)
    p.add_argument("--confusion", type=float, default=NoiseParams().class_confusion)
    p.add_argument("--miss", type=float, default=NoiseParams().miss_rate)
    p.add_argument("--spurious", type=float, default=NoiseParams().spurious_rate)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("score", help="pair two prediction branches and dump scores")
    p.add_argument("--dataset", required=True)
    p.add_argument("--pred1", required=True)
    p.add_argument("--pred2", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("loop", help="run the full multi-cycle experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_loop)

    p = sub.add_parser("baseline", help="full-image annotation under the same budget")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("report", help="flatten a report series to CSV")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--csv", required=True)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("serve", help="expose the verification queue over HTTP")
    p.add_argument("--config", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--images-dir", default=None)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InfeasibleError, BudgetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
