"""Command-line interface.

Subcommands: summarize, split, train, evaluate, predict, report,
make-fixture. Manifest CSV paths are taken as given; image paths inside a
manifest resolve against --data-root. Exit codes: 0 success, 1 training
failure, 2 usage, config, or data errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .config import RunConfig, load_config, with_overrides
from .errors import PipelineError, TrainingError
from .fixtures import make_synthetic_fixture
from .labels import LABEL_NAMES, PolicyConfig
from .manifest import parse_manifest, split_train_val, summarize_labels, write_manifest
from .models import ARCH_IDS, DISPLAY_NAMES, build_model, count_parameters
from .reporting import (
    plot_confusion_grid,
    plot_distribution,
    plot_training_curves,
    read_epoch_logs,
    write_comparison_csv,
    write_distribution_csv,
    write_distribution_json,
    write_metrics_json,
    write_parameter_csv,
    write_parameter_summary_csv,
    write_per_label_csv,
)
from .training import (
    evaluate_model,
    load_checkpoint,
    model_from_checkpoint,
    predict,
    save_checkpoint,
    train,
)


def _policy_from_payload(payload: dict | None) -> PolicyConfig:
    if not payload:
        return PolicyConfig()
    return PolicyConfig(
        u_one_labels=frozenset(payload["u_one_labels"]),
        blank_as=payload["blank_as"],
        mask_blanks=payload["mask_blanks"],
    )


def _load_run_config(args: argparse.Namespace) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    return with_overrides(
        config,
        arch=getattr(args, "arch", None),
        seed=getattr(args, "seed", None),
        data_root=getattr(args, "data_root", None),
        out_dir=getattr(args, "out", None),
        threshold=getattr(args, "threshold", None),
        offline=True if getattr(args, "offline", False) else None,
        pretrained=True if getattr(args, "pretrained", False) else None,
        train_csv=getattr(args, "train_csv", None),
        val_csv=getattr(args, "val_csv", None),
        val_fraction=getattr(args, "val_fraction", None),
        max_epochs=getattr(args, "max_epochs", None),
        batch_size=getattr(args, "batch_size", None),
    )


def _cmd_summarize(args: argparse.Namespace) -> int:
    manifest = parse_manifest(args.manifest)
    dist = summarize_labels(manifest)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["Label", "minusOneVal", "oneVal", "zeroVal", "nanVal"])
    for row in dist.rows:
        writer.writerow([row.label, row.minus_one, row.one, row.zero, row.blank])
    if args.out:
        out = Path(args.out)
        write_distribution_csv(dist, out / "distribution.csv")
        write_distribution_json(dist, out / "distribution.json")
        plot_distribution(dist, out / "distribution.png")
        print(f"wrote distribution tables to {out}", file=sys.stderr)
    return 0


def _cmd_split(args: argparse.Namespace) -> int:
    manifest = parse_manifest(args.manifest)
    train_m, val_m = split_train_val(manifest, args.val_fraction, args.seed)
    out = Path(args.out)
    write_manifest(train_m, out / "train.csv")
    write_manifest(val_m, out / "val.csv")
    print(
        f"train: {len(train_m)} records / {len(train_m.patient_ids())} patients; "
        f"val: {len(val_m)} records / {len(val_m.patient_ids())} patients"
    )
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    config = _load_run_config(args)
    if config.train_csv is None:
        raise PipelineError(
            "no training manifest; pass --train-csv or set train_csv in the config"
        )
    full = parse_manifest(config.train_csv)
    if config.val_csv is not None:
        train_m, val_m = full, parse_manifest(config.val_csv)
    else:
        train_m, val_m = split_train_val(
            full, config.val_fraction, config.train.seed
        )

    model = build_model(
        config.arch,
        config.pretrained,
        weights_dir=config.weights_dir,
        offline=config.offline,
        seed=config.train.seed,
    )
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def _progress(entry) -> None:
        auc = "NaN" if entry.val_auroc is None else f"{entry.val_auroc:.6f}"
        print(
            f"epoch {entry.epoch:3d}  train_loss {entry.train_loss:.6f}  "
            f"val_loss {entry.val_loss:.6f}  val_auroc {auc}  "
            f"lr {entry.learning_rate:g}" + ("  *" if entry.improved else "")
        )

    result = train(
        model,
        train_m,
        val_m,
        config.train,
        policy=config.policy,
        augmentation=config.augmentation,
        data_root=config.data_root,
        log_path=out / "epoch_log.jsonl",
        progress=_progress,
    )
    save_checkpoint(
        out / "checkpoint.pt",
        model,
        threshold=config.train.threshold,
        best_epoch=result.best_epoch,
        train_config=config.train,
        policy=config.policy,
    )
    plot_training_curves(result.epoch_logs, out / "curves.png")
    summary = {
        "arch": config.arch,
        "model_name": DISPLAY_NAMES[config.arch],
        "epochs_run": result.epochs_run,
        "best_epoch": result.best_epoch,
        "best_val_auroc": result.best_val_auroc,
        "stop_reason": result.stop_reason,
        "train_records": len(train_m),
        "val_records": len(val_m),
    }
    (out / "train_summary.json").write_text(
        json.dumps(summary, indent=2) + "\n", encoding="utf-8"
    )
    print(
        f"best epoch {result.best_epoch} (val macro AUROC "
        f"{result.best_val_auroc:.6f}); checkpoint: {out / 'checkpoint.pt'}"
    )
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    model = model_from_checkpoint(ckpt)
    manifest = parse_manifest(args.manifest)
    threshold = args.threshold if args.threshold is not None else ckpt.threshold
    report, _ = evaluate_model(
        model,
        manifest,
        policy=_policy_from_payload(ckpt.policy),
        threshold=threshold,
        data_root=args.data_root or ".",
    )
    o = report.overall
    auc = "NaN" if o.auroc is None else f"{o.auroc:.6f}"
    print(
        f"{model.spec.display_name}: macro AUROC {auc}, accuracy {o.accuracy:.6f} "
        f"(threshold {threshold})"
    )
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        payload = {
            "model_name": model.spec.display_name,
            "arch": model.spec.arch_id,
            "threshold": threshold,
        }
        payload.update(report.to_json_dict())
        (out / "metrics.json").write_text(
            json.dumps(payload, indent=2) + "\n", encoding="utf-8"
        )
        write_per_label_csv(report, out / "per_label.csv")
        plot_confusion_grid(report, out / "confusion.png")
        print(f"wrote metrics to {out}", file=sys.stderr)
    return 0


def _cmd_predict(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    model = model_from_checkpoint(ckpt)
    manifest = parse_manifest(args.manifest)
    threshold = args.threshold if args.threshold is not None else ckpt.threshold
    result = predict(
        model,
        manifest,
        policy=_policy_from_payload(ckpt.policy),
        threshold=threshold,
        data_root=args.data_root or ".",
    )
    header = (
        ["Path"]
        + [f"{name} Prob" for name in LABEL_NAMES]
        + [f"{name} Pred" for name in LABEL_NAMES]
    )
    rows = []
    for i, record in enumerate(manifest):
        rows.append(
            [record.image_path]
            + [repr(float(v)) for v in result.probabilities[i]]
            + [int(v) for v in result.predictions[i]]
        )
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        print(f"wrote {len(rows)} predictions to {out}")
    else:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    did_something = False
    if args.params:
        out = Path(args.out or ".")
        model = build_model("customnet")
        write_parameter_csv(count_parameters(model), out / "parameters_customnet.csv")
        entries = []
        for arch in ARCH_IDS:
            counts = count_parameters(build_model(arch))
            entries.append((DISPLAY_NAMES[arch], counts.total, counts.trainable))
        write_parameter_summary_csv(entries, out / "parameter_summary.csv")
        print(f"wrote parameter tables to {out}")
        did_something = True
    if args.compare:
        rows = []
        for path in args.compare:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
            rows.append(
                (
                    payload.get("model_name", Path(path).stem),
                    payload["overall"]["auroc"],
                    payload["overall"]["accuracy"],
                )
            )
        out = Path(args.out or ".") / "comparison.csv"
        write_comparison_csv(rows, out)
        print(f"wrote comparison of {len(rows)} models to {out}")
        did_something = True
    if args.curves:
        logs = read_epoch_logs(args.curves)
        out = Path(args.out or ".") / "curves.png"
        plot_training_curves(logs, out)
        print(f"wrote training curves to {out}")
        did_something = True
    if not did_something:
        raise PipelineError(
            "nothing to report; pass --params, --compare, or --curves"
        )
    return 0


def _cmd_make_fixture(args: argparse.Namespace) -> int:
    manifest = make_synthetic_fixture(
        args.records,
        args.patients,
        args.seed,
        args.out,
        image_hw=(args.image_size, args.image_size),
    )
    print(
        f"wrote {len(manifest)} records for {len(manifest.patient_ids())} "
        f"patients under {args.out}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cxrclassify",
        description="Multi-label chest X-ray classification pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("summarize", help="count raw label states in a manifest")
    p.add_argument("manifest", help="manifest CSV path")
    p.add_argument("--out", help="directory for distribution CSV/JSON/PNG")
    p.set_defaults(func=_cmd_summarize)

    p = sub.add_parser("split", help="patient-disjoint train/val split")
    p.add_argument("manifest", help="manifest CSV path")
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="directory for train.csv and val.csv")
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", help="YAML run config")
    p.add_argument("--train-csv", help="training manifest CSV")
    p.add_argument("--val-csv", help="validation manifest CSV (else split off)")
    p.add_argument("--val-fraction", type=float)
    p.add_argument("--arch", choices=list(ARCH_IDS))
    p.add_argument("--pretrained", action="store_true", default=None)
    p.add_argument("--offline", action="store_true", default=None,
                   help="use only cached pretrained weights; never download")
    p.add_argument("--seed", type=int)
    p.add_argument("--data-root", help="root that image paths resolve against")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threshold", type=float)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a manifest")
    p.add_argument("manifest", help="manifest CSV path")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data-root")
    p.add_argument("--threshold", type=float)
    p.add_argument("--out", help="directory for metrics.json / per_label.csv / confusion.png")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("predict", help="write per-record probabilities and decisions")
    p.add_argument("manifest", help="manifest CSV path")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data-root")
    p.add_argument("--threshold", type=float)
    p.add_argument("--out", help="predictions CSV path (default: stdout)")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("report", help="parameter tables, comparisons, curves")
    p.add_argument("--params", action="store_true",
                   help="write per-tensor and per-model parameter tables")
    p.add_argument("--compare", nargs="+", metavar="METRICS_JSON",
                   help="merge evaluate outputs into a comparison table")
    p.add_argument("--curves", metavar="EPOCH_LOG",
                   help="plot training curves from an epoch log")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("make-fixture", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="fixture directory")
    p.add_argument("--records", type=int, default=200)
    p.add_argument("--patients", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--image-size", type=int, default=64)
    p.set_defaults(func=_cmd_make_fixture)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TrainingError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return 1
    except (PipelineError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
