"""Command-line pipeline: stats, weights, synth, train, eval, report.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric divergence.
Every output file carries a run block (tool version, resolved config, input
digests) sufficient to reproduce it bit-identically.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__, fileio
from .classes import ClassTable
from .data import (
    BDD_TARGET_CLASSES,
    compute_stats,
    load_dataset,
    load_stats,
    parse_labels,
    save_dataset,
    save_stats,
)
from .errors import DivergenceError, ImbdetError
from .evaluation import (
    EvalConfig,
    detections_from_probabilities,
    evaluate,
    load_detections,
    load_report,
    render_reports,
    save_detections,
    save_report,
)
from .losses import LossConfig
from .mining import MiningConfig
from .synth import SynthConfig, build_dataset
from .training import TrainConfig, init_model, load_model, predict, save_model, train
from .weights import SchemeConfig, compute_weights, load_weights, save_weights

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _parse_kv_floats(text: str) -> dict[str, float]:
    out = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        name, _, value = part.partition("=")
        if not _ or not name:
            raise _UsageError(f"expected name=value, got {part!r}")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise _UsageError(f"invalid number in {part!r}") from None
    return out


def _parse_float_list(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise _UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _parse_name_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _jsonable(value):
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    return value


def _run_metadata(args, command: str, inputs: dict[str, Path]) -> dict:
    config = {k: _jsonable(v) for k, v in sorted(vars(args).items()) if k != "func"}
    return {
        "tool": "imbdet",
        "tool_version": __version__,
        "command": command,
        "config": config,
        "inputs": {
            name: {"path": str(path), "digest": fileio.sha256_file(path)}
            for name, path in inputs.items()
        },
    }


def _load_split(dataset_dir: str, split: str):
    dataset = load_dataset(dataset_dir)
    if split not in dataset.splits:
        raise ImbdetError(
            f"dataset has no split {split!r}; available: {sorted(dataset.splits)}"
        )
    return dataset, dataset.splits[split]


def cmd_stats(args) -> int:
    if args.labels is None and args.dataset is None:
        raise _UsageError("either --labels or --dataset is required")
    if args.labels is not None:
        classes = (
            ClassTable.with_background(tuple(_parse_name_list(args.classes)))
            if args.classes
            else ClassTable.with_background(BDD_TARGET_CLASSES)
        )
        result = parse_labels(args.labels, format=args.format, classes=classes)
        scenes, skipped = result.scenes, result.skipped
        inputs = {"labels": Path(args.labels)}
    else:
        dataset, split = _load_split(args.dataset, args.split)
        classes, scenes, skipped = dataset.classes, split.scenes, {}
        inputs = {"dataset_manifest": Path(args.dataset) / "manifest.json"}
    stats = compute_stats(scenes, classes)
    save_stats(stats, args.out, skipped=skipped, run_metadata=_run_metadata(args, "stats", inputs))
    return EXIT_OK


def cmd_weights(args) -> int:
    stats = None
    classes = None
    inputs = {}
    if args.stats is not None:
        stats = load_stats(args.stats)
        inputs["stats"] = Path(args.stats)
    if args.classes:
        classes = ClassTable.with_background(tuple(_parse_name_list(args.classes)))
    if stats is None and classes is None:
        raise _UsageError("either --stats or --classes is required")
    cfg = SchemeConfig(
        scheme=args.scheme,
        k=args.k,
        q=args.q,
        beta=args.beta,
        manual_weights=_parse_kv_floats(args.manual) if args.manual else None,
        normalize_reference=args.normalize_reference,
        majority_floor=tuple(_parse_name_list(args.majority_floor)) if args.majority_floor else (),
        count_mode=args.count_mode,
        log_base=args.log_base,
    )
    wv = compute_weights(cfg, stats=stats, classes=classes)
    save_weights(wv, args.out, run_metadata=_run_metadata(args, "weights", inputs))
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.rates:
        rates = _parse_float_list(args.rates)
    else:
        rates = [args.rate_base * args.rate_ratio**-j for j in range(args.num_classes)]
    cfg = SynthConfig(
        num_classes=args.num_classes,
        class_rates=tuple(rates),
        feature_dim=args.feature_dim,
        class_separation=args.class_separation,
        feature_noise=args.feature_noise,
        bg_per_fg=args.bg_per_fg,
        positive_iou_range=(args.iou_lo, args.iou_hi),
        seed=args.seed,
        class_names=tuple(_parse_name_list(args.class_names)) if args.class_names else None,
    )
    split_sizes = {
        name: int(value)
        for name, value in _parse_kv_floats(args.splits).items()
    }
    dataset = build_dataset(cfg, split_sizes)
    save_dataset(dataset, args.out, run_metadata=_run_metadata(args, "synth", {}))
    return EXIT_OK


def cmd_train(args) -> int:
    dataset, split = _load_split(args.dataset, args.split)
    inputs = {"dataset_manifest": Path(args.dataset) / "manifest.json"}
    weights = None
    if args.weights is not None:
        weights = load_weights(args.weights)
        if weights.classes.names != dataset.classes.names:
            raise ImbdetError(
                "weight file classes do not match the dataset class table: "
                f"{weights.classes.names} vs {dataset.classes.names}"
            )
        inputs["weights"] = Path(args.weights)
    cfg = TrainConfig(
        learning_rate=args.lr,
        momentum=args.momentum,
        batch_size=args.batch_size,
        epochs=args.epochs,
        seed=args.seed,
        loss=LossConfig(
            static_weights=weights,
            focal_alpha=args.focal_alpha,
            prob_floor=args.prob_floor,
        ),
        mining=MiningConfig(bg_per_fg=args.bg_per_fg, selection=args.mining),
    )
    model = init_model(
        args.arch,
        split.proposals.feature_dim,
        dataset.classes,
        seed=args.seed,
        hidden_dim=args.hidden_dim,
    )
    model, log = train(model, split.proposals, cfg)
    save_model(
        model,
        args.out,
        train_config=cfg,
        log=log,
        run_metadata=_run_metadata(args, "train", inputs),
    )
    log_path = args.log_out or f"{args.out}.log.json"
    fileio.write_json_atomic(log_path, {"kind": "train_log", **log.as_dict()})
    return EXIT_OK


def cmd_eval(args) -> int:
    dataset, split = _load_split(args.dataset, args.split)
    inputs = {"dataset_manifest": Path(args.dataset) / "manifest.json"}
    if (args.model is None) == (args.detections is None):
        raise _UsageError("exactly one of --model or --detections is required")
    if args.model is not None:
        model = load_model(args.model)
        if model.classes.names != dataset.classes.names:
            raise ImbdetError("model classes do not match the dataset class table")
        probs = predict(model, split.proposals.features)
        detections = detections_from_probabilities(probs, split.proposals)
        inputs["model"] = Path(args.model)
    else:
        detections = load_detections(args.detections)
        inputs["detections"] = Path(args.detections)
    if args.detections_out:
        save_detections(detections, args.detections_out)
    cfg = EvalConfig(iou_threshold=args.iou, target_fppi=args.fppi)
    report = evaluate(detections, split.scenes, dataset.classes, cfg)
    save_report(report, args.out, run_metadata=_run_metadata(args, "eval", inputs))
    return EXIT_OK


def cmd_report(args) -> int:
    reports = [load_report(path) for path in args.reports]
    labels = (
        _parse_name_list(args.labels) if args.labels else [Path(p).stem for p in args.reports]
    )
    if len(labels) != len(reports):
        raise _UsageError("number of labels must match number of reports")
    text = render_reports(reports, labels, fmt=args.format)
    if args.out:
        fileio.write_text_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="imbdet", description=__doc__)
    parser.add_argument("--version", action="version", version=f"imbdet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="per-class instance counts and frequencies")
    p.add_argument("--labels", help="annotation file to parse")
    p.add_argument("--format", choices=("bdd100k", "simple_jsonl"), default="bdd100k")
    p.add_argument("--dataset", help="dataset directory (alternative to --labels)")
    p.add_argument("--split", default="train", help="dataset split for --dataset")
    p.add_argument("--classes", help="comma-separated foreground class names")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("weights", help="derive per-class loss weights from stats")
    p.add_argument("--stats", help="stats file produced by the stats command")
    p.add_argument("--classes", help="foreground class names (uniform/balanced only)")
    p.add_argument(
        "--scheme",
        required=True,
        choices=("uniform", "balanced", "inverse_linear", "inverse_log", "effective_number"),
    )
    p.add_argument("--k", type=float, help="linear scale (inverse_linear)")
    p.add_argument("--q", type=float, help="log numerator (inverse_log)")
    p.add_argument("--beta", type=float, help="effective-number decay in [0, 1)")
    p.add_argument("--manual", help="balanced weights as name=value,name=value")
    p.add_argument("--normalize-reference", help="class pinned to weight 1 (effective_number)")
    p.add_argument("--majority-floor", help="classes clamped to weight 1 (inverse schemes)")
    p.add_argument("--count-mode", choices=("raw", "per_image"), default="raw")
    p.add_argument("--log-base", type=float, help="logarithm base (default: natural)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("synth", help="generate a seeded synthetic dataset directory")
    p.add_argument("--out", required=True)
    p.add_argument("--num-classes", type=int, default=7)
    p.add_argument("--rates", help="comma-separated mean objects per image, one per class")
    p.add_argument("--rate-base", type=float, default=3.0, help="geometric rates: base")
    p.add_argument("--rate-ratio", type=float, default=3.0, help="geometric rates: decay ratio")
    p.add_argument("--feature-dim", type=int, default=16)
    p.add_argument("--class-separation", type=float, default=4.2)
    p.add_argument("--feature-noise", type=float, default=1.0)
    p.add_argument("--bg-per-fg", type=float, default=3.0)
    p.add_argument("--iou-lo", type=float, default=0.6)
    p.add_argument("--iou-hi", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--class-names", help="comma-separated foreground names")
    p.add_argument("--splits", default="train=1000,eval=200", help="name=count,...")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the proposal classifier")
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="train")
    p.add_argument("--weights", help="weight file; omitted means uniform")
    p.add_argument("--arch", choices=("linear", "mlp"), default="linear")
    p.add_argument("--hidden-dim", type=int, help="hidden width for --arch mlp")
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--focal-alpha", type=float, default=0.0)
    p.add_argument("--prob-floor", type=float, default=1e-12)
    p.add_argument("--mining", choices=("hardest", "random"), default="hardest")
    p.add_argument("--bg-per-fg", type=float, default=3.0)
    p.add_argument("--out", required=True)
    p.add_argument("--log-out", help="training log path (default: <out>.log.json)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="FPPI-calibrated recall report")
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="eval")
    p.add_argument("--model", help="model file; proposals are classified to detections")
    p.add_argument("--detections", help="detections file (alternative to --model)")
    p.add_argument("--detections-out", help="also write the detections used")
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--fppi", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="render one or more eval reports as a table")
    p.add_argument("reports", nargs="+")
    p.add_argument("--format", choices=("text", "markdown", "csv"), default="text")
    p.add_argument("--labels", help="comma-separated column labels")
    p.add_argument("--out", help="write the table here instead of stdout")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_DATA
    except (ImbdetError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
