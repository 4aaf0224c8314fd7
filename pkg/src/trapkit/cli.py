"""Command-line pipeline driver.

Subcommands wire the library end to end:

* ``fetch``    download an annotated media package into a data directory
* ``prepare``  filter rare classes, write the filtered manifest and stats
* ``split``    build stratified k-fold training layouts
* ``evaluate`` score pooled per-fold predictions against a manifest
* ``report``   render training curves and a markdown summary

Exit codes: 0 success, 2 invalid input or configuration, 3 filesystem
failures, 4 remote API failures.

Every option resolves with the precedence: command-line flag, then JSON
config file (``--config``), then built-in default. The API token is the
exception and never travels as a flag: it is read from ``--token-file``,
the config keys ``token_file`` or ``token``, or ``$TRAPKIT_TOKEN``, in
that order.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

from . import dataset, diagnostics, evaluator, splitter, trapper
from .errors import InputError, RemoteError

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_IO = 3
EXIT_REMOTE = 4

TOKEN_ENV_VAR = "TRAPKIT_TOKEN"
PREPARED_MANIFEST_NAME = "prepared_manifest.json"

DEFAULT_K = 5
DEFAULT_SEED = 0


@dataclass(frozen=True)
class PipelineConfig:
    """Resolved settings for one command invocation."""

    endpoint: Optional[str] = None
    token: Optional[str] = None
    project: Optional[str] = None
    data_dir: Optional[Path] = None
    out_dir: Optional[Path] = None
    min_count: int = dataset.DEFAULT_MIN_IMAGE_COUNT
    other_names: tuple[str, ...] = ()
    k: int = DEFAULT_K
    seed: int = DEFAULT_SEED
    iou: float = evaluator.DEFAULT_IOU_THRESHOLD
    conf: float = evaluator.DEFAULT_CONF_THRESHOLD

    def validate(self) -> None:
        if self.k < 2:
            raise InputError(f"k must be at least 2, got {self.k}")
        if self.min_count < 1:
            raise InputError(f"min-count must be at least 1, got {self.min_count}")
        for name in ("iou", "conf"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InputError(f"{name} threshold must be in [0, 1], got {value}")
        if self.data_dir is not None and self.out_dir is not None:
            if self.data_dir.resolve() == self.out_dir.resolve():
                raise InputError(
                    "output directory must be distinct from the data directory"
                )


def _load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: config is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise InputError(f"{path}: config must be a JSON object")
    return obj


def _pick(flag_value, config: dict, key: str, default=None):
    if flag_value is not None:
        return flag_value
    if config.get(key) is not None:
        return config[key]
    return default


def _resolve_token(token_file: Optional[str], config: dict) -> Optional[str]:
    if token_file is None and config.get("token_file"):
        token_file = str(config["token_file"])
    if token_file is not None:
        return Path(token_file).read_text(encoding="utf-8").strip()
    if config.get("token"):
        return str(config["token"])
    env = os.environ.get(TOKEN_ENV_VAR, "").strip()
    return env or None


def _split_names(values: Optional[Sequence[str]]) -> Optional[tuple[str, ...]]:
    """Flatten repeated, comma-separated name flags; None when not given."""
    if values is None:
        return None
    names = []
    for value in values:
        names.extend(n.strip() for n in value.split(",") if n.strip())
    return tuple(names)


def _config_names(config: dict) -> tuple[str, ...]:
    raw = config.get("other")
    if raw is None:
        return ()
    if isinstance(raw, str):
        return tuple(n.strip() for n in raw.split(",") if n.strip())
    if isinstance(raw, list):
        return tuple(str(n) for n in raw)
    raise InputError("config key 'other' must be a string or a list of names")


def _require_out(args, config: dict) -> Path:
    out = _pick(args.out, config, "out")
    if out is None:
        raise InputError("an output directory is required (--out or config key 'out')")
    return Path(out)


def cmd_fetch(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    endpoint = _pick(args.endpoint, config, "endpoint")
    if not endpoint:
        raise InputError("an API endpoint is required (--endpoint or config key 'endpoint')")
    token = _resolve_token(args.token_file, config)
    if not token:
        raise InputError(
            "an API token is required (--token-file, config key 'token', "
            f"or ${TOKEN_ENV_VAR})"
        )
    out = _require_out(args, config)
    cfg = PipelineConfig(
        endpoint=str(endpoint),
        token=token,
        project=_pick(args.project, config, "project"),
        data_dir=out,
    )
    cfg.validate()

    manifest, summary = trapper.fetch_package(
        cfg.endpoint, cfg.token, out, project=cfg.project
    )
    print(summary.describe())
    print(
        f"manifest: {out / trapper.MANIFEST_NAME} "
        f"({len(manifest.records)} images, {len(manifest.classes)} classes)"
    )
    if not summary.ok:
        print("fetch finished with per-item failures; manifest covers the rest", file=sys.stderr)
        return EXIT_REMOTE
    return EXIT_OK


def cmd_prepare(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    manifest_path = Path(args.manifest)
    out = _require_out(args, config)
    other = _split_names(args.other)
    cfg = PipelineConfig(
        data_dir=manifest_path.parent,
        out_dir=out,
        min_count=int(_pick(args.min_count, config, "min_count", dataset.DEFAULT_MIN_IMAGE_COUNT)),
        other_names=other if other is not None else _config_names(config),
    )
    cfg.validate()

    manifest = dataset.load_manifest(manifest_path)
    catalog, kept = dataset.build_catalog(
        manifest.records, min_count=cfg.min_count, other_names=cfg.other_names
    )
    if not kept:
        raise InputError(
            f"no class reaches {cfg.min_count} images; nothing left after filtering"
        )
    stats = dataset.dataset_stats(kept, catalog)

    out.mkdir(parents=True, exist_ok=True)
    # Image paths are manifest-relative, and this manifest lives in a new
    # directory, so every path is re-anchored to it.
    rebased = [
        replace(rec, path=Path(os.path.relpath(cfg.data_dir / rec.path, out)).as_posix())
        for rec in kept
    ]
    dataset.save_manifest(
        out / PREPARED_MANIFEST_NAME,
        dataset.Manifest(classes=list(catalog.names), records=rebased),
    )

    image_counts = {name: 0 for name in catalog.names}
    for rec in kept:
        for species in rec.species_present():
            image_counts[species] += 1
    class_lines = ["class,images,annotations"]
    for name in catalog.names:
        class_lines.append(f"{name},{image_counts[name]},{stats.class_counts[name]}")
    (out / "classes.csv").write_text("\n".join(class_lines) + "\n", encoding="utf-8")

    histogram_lines = ["megapixels,images"]
    for bucket, count in stats.size_histogram.items():
        histogram_lines.append(f"{bucket},{count}")
    (out / "size_histogram.csv").write_text("\n".join(histogram_lines) + "\n", encoding="utf-8")

    print(
        f"kept {len(catalog)} classes, {stats.total_images} images, "
        f"{stats.total_annotations} annotations (min {cfg.min_count} images per class)"
    )
    return EXIT_OK


def cmd_split(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    manifest_path = Path(args.manifest)
    out = _require_out(args, config)
    cfg = PipelineConfig(
        data_dir=manifest_path.parent,
        out_dir=out,
        k=int(_pick(args.k, config, "k", DEFAULT_K)),
        seed=int(_pick(args.seed, config, "seed", DEFAULT_SEED)),
    )
    cfg.validate()

    manifest = dataset.load_manifest(manifest_path)
    catalog = dataset.catalog_from_manifest(manifest)
    plan = splitter.stratified_kfold(manifest.records, catalog, cfg.k, cfg.seed)
    for fold in range(cfg.k):
        splitter.export_split(
            plan,
            fold,
            manifest.records,
            catalog,
            out / f"fold_{fold}",
            media_root=manifest_path.parent,
        )

    report = splitter.verify_stratification(plan, manifest.records, catalog)
    lines = ["class,global," + ",".join(f"fold_{f}" for f in range(cfg.k))]
    for name in catalog.names:
        cells = [name, f"{report.global_proportions[name]:.6f}"]
        cells += [f"{report.proportions[f][name]:.6f}" for f in range(cfg.k)]
        lines.append(",".join(cells))
    out.mkdir(parents=True, exist_ok=True)
    (out / "stratification.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    sizes = plan.fold_sizes()
    print(f"split {len(plan.assignment)} images into {cfg.k} folds (sizes {sizes})")
    print(f"max class-proportion deviation from global: {report.max_deviation:.6f}")
    if report.flagged:
        print(f"classes off balance by more than one image: {', '.join(report.flagged)}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    manifest_path = Path(args.manifest)
    out = _require_out(args, config)
    cfg = PipelineConfig(
        data_dir=manifest_path.parent,
        out_dir=out,
        iou=float(_pick(args.iou, config, "iou", evaluator.DEFAULT_IOU_THRESHOLD)),
        conf=float(_pick(args.conf, config, "conf", evaluator.DEFAULT_CONF_THRESHOLD)),
    )
    cfg.validate()

    pred_files = []
    for value in args.preds:
        pred_files.extend(p.strip() for p in value.split(",") if p.strip())
    if not pred_files:
        raise InputError("at least one predictions file is required (--preds)")

    manifest = dataset.load_manifest(manifest_path)
    catalog = dataset.catalog_from_manifest(manifest)
    gts = evaluator.ground_truths_from_records(manifest.records, catalog)

    folds = [(evaluator.read_predictions_jsonl(path), {}) for path in pred_files]
    dets, _ = evaluator.pool_cv(folds)

    known = set(gts)
    unknown = sorted({d.image_id for d in dets} - known)
    if unknown:
        raise InputError(f"predictions reference unknown image ids: {unknown[:5]}")
    for det in dets:
        if det.class_index >= len(catalog):
            raise InputError(
                f"prediction class {det.class_index} out of range for "
                f"{len(catalog)} classes (image {det.image_id!r})"
            )

    if not dets:
        print("warning: no detections in any predictions file; metrics are all zero",
              file=sys.stderr)

    result = evaluator.evaluate_detections(dets, gts, catalog.names, iou_threshold=cfg.iou)
    matrix = evaluator.confusion_matrix(
        dets, gts, len(catalog), conf_threshold=cfg.conf, iou_threshold=cfg.iou
    )

    out.mkdir(parents=True, exist_ok=True)
    evaluator.write_metrics_csv(result, out / "metrics.csv")
    evaluator.write_confusion_csv(matrix, catalog.names, out / "confusion.csv")
    evaluator.write_confusion_csv(
        matrix, catalog.names, out / "confusion_normalized.csv", normalized=True
    )

    agg = result.aggregate
    print(
        f"pooled {len(dets)} detections over {len(manifest.records)} images; "
        f"operating threshold {result.operating_threshold:.3f}"
    )
    print(
        f"all: targets={agg.targets} f1={agg.f1:.4f} p={agg.precision:.4f} "
        f"r={agg.recall:.4f} map50={agg.ap50:.4f} map50_95={agg.ap50_95:.4f}"
    )
    return EXIT_OK


def _markdown_table(csv_text: str) -> str:
    rows = [line.split(",") for line in csv_text.strip().splitlines()]
    if len(rows) < 2:
        raise InputError("metrics file has no data rows")
    width = len(rows[0])
    if any(len(row) != width for row in rows):
        raise InputError("metrics file rows have inconsistent field counts")
    out = ["| " + " | ".join(rows[0]) + " |", "|" + " --- |" * width]
    for row in rows[1:]:
        out.append("| " + " | ".join(row) + " |")
    return "\n".join(out)


def cmd_report(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    out = _require_out(args, config)
    window = int(_pick(args.window, config, "window", diagnostics.DEFAULT_PLATEAU_WINDOW))
    epsilon = float(_pick(args.epsilon, config, "epsilon", diagnostics.DEFAULT_PLATEAU_EPSILON))

    logs = diagnostics.parse_training_log(args.epoch_log)
    if not logs:
        raise InputError(f"{args.epoch_log}: no epochs in training log")
    metrics_text = Path(args.metrics).read_text(encoding="utf-8")
    table = _markdown_table(metrics_text)

    out.mkdir(parents=True, exist_ok=True)
    loss_lines = ["epoch,box_loss,cls_loss,obj_loss"]
    for log in logs:
        loss_lines.append(
            f"{log.epoch},{log.box_loss:.6f},{log.cls_loss:.6f},{log.obj_loss:.6f}"
        )
    (out / "losses.csv").write_text("\n".join(loss_lines) + "\n", encoding="utf-8")

    with_map = all(log.map50 is not None for log in logs)
    with_map95 = all(log.map50_95 is not None for log in logs)
    header = "epoch,precision,recall,f1"
    header += ",map50" if with_map else ""
    header += ",map50_95" if with_map95 else ""
    curve_lines = [header]
    for log in logs:
        cells = [str(log.epoch), f"{log.precision:.6f}", f"{log.recall:.6f}", f"{log.f1:.6f}"]
        if with_map:
            cells.append(f"{log.map50:.6f}")
        if with_map95:
            cells.append(f"{log.map50_95:.6f}")
        curve_lines.append(",".join(cells))
    (out / "metrics_curve.csv").write_text("\n".join(curve_lines) + "\n", encoding="utf-8")

    def plateau_line(label: str, series: list[float]) -> str:
        index = diagnostics.detect_plateau(series, window=window, epsilon=epsilon)
        if index is None:
            return f"- {label}: no plateau detected (window {window}, epsilon {epsilon})"
        return (
            f"- {label}: plateau at epoch {logs[index].epoch} "
            f"(window {window}, epsilon {epsilon})"
        )

    summary = [
        "# Training report",
        "",
        f"Epochs: {len(logs)} ({logs[0].epoch}..{logs[-1].epoch})",
        "",
        "## Plateau detection",
        "",
        plateau_line("objectness loss", [log.obj_loss for log in logs]),
        plateau_line("F1", [log.f1 for log in logs]),
        "",
        "## Metrics",
        "",
        table,
        "",
    ]
    (out / "summary.md").write_text("\n".join(summary), encoding="utf-8")
    print(f"report written to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trapkit",
        description="Camera-trap detection pipeline: ingest, split, evaluate, report.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (flags take precedence)")
    common.add_argument("--out", help="output directory")

    p = sub.add_parser("fetch", parents=[common], help="download an annotated media package")
    p.add_argument("--endpoint", help="API base URL")
    p.add_argument("--project", help="optional remote project filter")
    p.add_argument("--token-file", help="file holding the API token")
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("prepare", parents=[common], help="filter classes and write stats")
    p.add_argument("--manifest", required=True, help="manifest JSON to read")
    p.add_argument("--min-count", type=int, dest="min_count",
                   help="minimum distinct images per class (default 40)")
    p.add_argument("--other", action="append",
                   help="comma-separated species to merge into the aggregate class")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("split", parents=[common], help="build stratified k-fold layouts")
    p.add_argument("--manifest", required=True, help="prepared manifest JSON")
    p.add_argument("--k", type=int, help="number of folds (default 5)")
    p.add_argument("--seed", type=int, help="shuffle seed (default 0)")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("evaluate", parents=[common], help="score pooled fold predictions")
    p.add_argument("--manifest", required=True, help="prepared manifest JSON")
    p.add_argument("--preds", action="append", required=True,
                   help="predictions JSONL, comma-separated or repeated per fold")
    p.add_argument("--iou", type=float, help="matching IoU threshold (default 0.5)")
    p.add_argument("--conf", type=float,
                   help="confusion-matrix confidence threshold (default 0.25)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", parents=[common], help="training curves and summary")
    p.add_argument("--epoch-log", required=True, dest="epoch_log", help="epoch-log CSV")
    p.add_argument("--metrics", required=True, help="metrics CSV from evaluate")
    p.add_argument("--window", type=int, help="plateau window in epochs (default 9)")
    p.add_argument("--epsilon", type=float, help="plateau relative-change bound (default 0.01)")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except RemoteError as exc:
        print(f"remote error: {exc}", file=sys.stderr)
        return EXIT_REMOTE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
