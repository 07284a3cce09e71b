"""Command-line front end: ``viewpose <command> [flags]``.

Exit status: 0 success, 1 validation failure (failed checks, malformed data,
divergence), 2 usage error (bad flags or config).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .checks import run_all
from .configio import config_to_text, load_config
from .data import Dataset, DatasetFormatError, generate_samples, load_dataset, save_dataset, save_detections, save_ground_truth
from .harness import (
    ConfigError,
    ExperimentConfig,
    Model,
    Representation,
    TrainingData,
    evaluate,
    make_training_data,
    proposals_to_detections,
    sweep,
    sweep_axes,
    test_scenario,
    train,
)
from .losses import Norm
from .metrics import METRIC_COLUMNS, read_metrics_csv, write_metrics_csv, write_pr_svgs
from .nnet import CheckpointError, DivergedError, load_checkpoint, save_checkpoint

MANIFEST = "manifest.txt"
REPORT_HEADER = ("run", "class", *METRIC_COLUMNS)


class UsageError(Exception):
    pass


class ValidationFailure(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir: Path, command: str, argv: Sequence[str], config: ExperimentConfig | None, artifacts, inputs=()) -> Path:
    """Resolved config plus hashes; non-config lines are comments so the file loads as a config."""
    lines = [f"# viewpose {__version__} manifest", f"# command: {command}", "# argv: " + " ".join(argv)]
    if config is not None:
        lines.append(f"# seed: {config.seed}")
        lines.append(config_to_text(config).rstrip("\n"))
    for p in inputs:
        lines.append(f"# input {p} sha256={sha256(p)}")
    for p in sorted(artifacts, key=str):
        lines.append(f"# artifact {Path(p).relative_to(out_dir)} sha256={sha256(p)}")
    path = out_dir / MANIFEST
    path.write_text("\n".join(lines) + "\n")
    return path


def _overrides(args) -> tuple[dict[str, str], list[str]]:
    """Dotted-key overrides from flags, plus the flags that produced them."""
    out: dict[str, str] = {}
    used: list[str] = []

    def put(flag, value, *keys):
        for key in keys:
            out[key] = str(value)
        used.append(f"{flag} {value}")

    if getattr(args, "representation", None):
        put("--representation", args.representation, "experiment.representation")
    if getattr(args, "seed", None) is not None:
        put("--seed", args.seed, "experiment.seed", "world.seed")
    if getattr(args, "views", None) is not None:
        put("--views", args.views, "experiment.P")
    for flag, attr, key in (("--lambda", "lam", "hyper.lam"), ("--k", "k", "hyper.K"), ("--delta", "delta", "hyper.delta"), ("--norm", "norm", "hyper.norm")):
        if getattr(args, attr, None) is not None:
            put(flag, getattr(args, attr), key)
    for item in getattr(args, "set", None) or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        out[key.strip()] = value.strip()
        used.append(f"--set {item}")
    return out, used


def resolve(args, fallback_config: Path | None = None) -> ExperimentConfig:
    """Config file (or ``fallback_config``) with flag overrides applied."""
    path = args.config if args.config is not None else fallback_config
    if path is not None and not Path(path).exists():
        raise UsageError(f"--config: file not found: {path}")
    try:
        load_config(path)
    except ConfigError as exc:
        raise UsageError(f"--config {path}: {exc}") from None
    flags, used = _overrides(args)
    try:
        return load_config(path, flags)
    except ConfigError as exc:
        raise UsageError(f"{', '.join(used)}: {exc}") from None


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _training_data(args, config: ExperimentConfig) -> TrainingData:
    if getattr(args, "data", None):
        return make_training_data(config, load_dataset(args.data).train)
    return make_training_data(config)


def _dataset_inputs(args) -> list[Path]:
    if not getattr(args, "data", None):
        return []
    return [p for p in (Path(args.data) / f for f in Dataset.FILES.values()) if p.exists()]


# ---------------------------------------------------------------------------
# commands


def cmd_gen_data(args, argv) -> int:
    config = resolve(args)
    out = _out_dir(args)
    train_pool = generate_samples(config.world, config.train_draws, config.train_positive_fraction, seed=config.seed, flip=config.flip)
    paths = save_dataset(out, Dataset(train_pool, test_scenario(config)))
    (out / "config.txt").write_text(config_to_text(config))
    write_manifest(out, "gen-data", argv, config, [*paths.values(), out / "config.txt"])
    print(f"wrote {len(train_pool)} training samples and {len(paths) - 1} test files to {out}")
    return 0


def cmd_train(args, argv) -> int:
    config = resolve(args)
    out = _out_dir(args)
    model, trace = train(config, _training_data(args, config))
    artifacts = [out / "network.ckpt", out / "trace.csv", out / "config.txt"]
    save_checkpoint(model.net, artifacts[0])
    if model.classifier is not None:
        save_checkpoint(model.classifier, out / "classifier.ckpt")
        artifacts.append(out / "classifier.ckpt")
    trace.write_csv(artifacts[1])
    artifacts[2].write_text(config_to_text(config))
    write_manifest(out, "train", argv, config, artifacts, _dataset_inputs(args))
    last = trace.records[-1] if trace.records else None
    summary = f"val_loss={last.val_loss:.6g} lr={last.lr:.3g}" if last else "no evaluations"
    print(f"trained {config.representation.value} for {last.iteration if last else 0} iterations ({trace.stop_reason}); {summary}")
    return 0


def load_model(model_dir: Path, config: ExperimentConfig) -> Model:
    net = load_checkpoint(model_dir / "network.ckpt")
    classifier = load_checkpoint(model_dir / "classifier.ckpt") if config.uses_fixed_classifier else None
    return Model(config, net, classifier)


def cmd_eval(args, argv) -> int:
    model_dir = Path(args.model)
    if not (model_dir / "network.ckpt").exists():
        raise UsageError(f"--model: no network.ckpt in {model_dir}")
    fallback = model_dir / "config.txt"
    config = resolve(args, fallback if fallback.exists() else None)
    model = load_model(model_dir, config)
    proposals = load_dataset(args.data).proposals if args.data else test_scenario(config)
    if proposals is None:
        raise UsageError(f"--data: {args.data} holds no test proposals")
    out = _out_dir(args)
    results = evaluate(model, config, proposals)
    metrics = out / "metrics.csv"
    write_metrics_csv(metrics, results)
    save_detections(out / "detections.txt", proposals_to_detections(proposals, model.predict(proposals.features)))
    save_ground_truth(out / "ground_truth.txt", proposals.ground_truth)
    svgs = write_pr_svgs(out, results, title_prefix=f"{config.representation.value} ")
    inputs = [p for p in (model_dir / "network.ckpt", model_dir / "classifier.ckpt") if p.exists()] + _dataset_inputs(args)
    write_manifest(out, "eval", argv, config, [metrics, out / "detections.txt", out / "ground_truth.txt", *svgs], inputs)
    print(metrics.read_text(), end="")
    return 0


def cmd_sweep(args, argv) -> int:
    config = resolve(args)
    if args.axis not in sweep_axes():
        raise UsageError(f"--axis: unknown sweep axis {args.axis!r}; valid axes: {', '.join(sweep_axes())}")
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--values: expected comma-separated numbers, got {args.values!r}") from None
    if not values:
        raise UsageError("--values: need at least one value")
    out = _out_dir(args)
    try:
        report = sweep(args.axis, values, config, _training_data(args, config))
    except ConfigError as exc:
        raise UsageError(f"--values: {exc}") from None
    report.write_csv(out / "sweep.csv")
    report.write_svg(out / "sweep.svg")
    write_manifest(out, "sweep", argv, config, [out / "sweep.csv", out / "sweep.svg"], _dataset_inputs(args))
    print((out / "sweep.csv").read_text(), end="")
    return 0


def report_rows(inputs: Sequence[Path], names: Sequence[str] | None = None) -> list[list[str]]:
    """Merge eval CSVs into ``run,class,AP,AVP@4,...`` rows, in input order."""
    rows = [list(REPORT_HEADER)]
    for k, path in enumerate(inputs):
        csv_path = path / "metrics.csv" if path.is_dir() else path
        if not csv_path.exists():
            raise UsageError(f"report input not found: {csv_path}")
        name = names[k] if names else (path.name if path.is_dir() else path.stem)
        table = read_metrics_csv(csv_path)
        for cls, metrics in table.items():
            missing = [c for c in METRIC_COLUMNS if c not in metrics]
            if missing:
                raise ValidationFailure(f"{csv_path}: missing columns {', '.join(missing)}")
            rows.append([name, cls, *(format(metrics[c], ".6f") for c in METRIC_COLUMNS)])
    return rows


def cmd_report(args, argv) -> int:
    inputs = [Path(p) for p in args.inputs]
    names = args.names.split(",") if args.names else None
    if names and len(names) != len(inputs):
        raise UsageError(f"--names: got {len(names)} names for {len(inputs)} inputs")
    out = _out_dir(args)
    rows = report_rows(inputs, names)
    path = out / "report.csv"
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)
    csvs = [p / "metrics.csv" if p.is_dir() else p for p in inputs]
    write_manifest(out, "report", argv, None, [path], csvs)
    print(path.read_text(), end="")
    return 0


def cmd_selfcheck(args, argv) -> int:
    results = run_all(args.grad_instances, args.metric_instances, args.seed or 0)
    lines = [r.line() for r in results]
    print("\n".join(lines))
    if args.out:
        out = _out_dir(args)
        (out / "selfcheck.txt").write_text("\n".join(lines) + "\n")
        write_manifest(out, "selfcheck", argv, None, [out / "selfcheck.txt"])
    if not all(r.passed for r in results):
        raise ValidationFailure(f"{sum(not r.passed for r in results)} check(s) failed")
    return 0


# ---------------------------------------------------------------------------
# parser


def _experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat 'section.key = value' config file")
    p.add_argument("--seed", type=int, help="seed for data, initialization and batches")
    p.add_argument("--representation", choices=[r.value for r in Representation])
    p.add_argument("--views", type=int, help="number of orientation bins P of the discrete head")
    p.add_argument("--lambda", dest="lam", type=float, help="weight of the class term in joint heads")
    p.add_argument("--k", type=float, help="weight K of the negative term (continuous head)")
    p.add_argument("--delta", type=float, help="length scale of the negative term (continuous head)")
    p.add_argument("--norm", choices=[n.value for n in Norm], help="pose norm of joint heads")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key, e.g. experiment.max_iterations=500")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="viewpose", description="Joint detection and azimuth estimation experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a training pool and a held-out proposal scenario")
    _experiment_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one head; writes network.ckpt, trace.csv")
    _experiment_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--data", help="dataset directory from gen-data (default: generate from config)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score the held-out scenario; writes metrics.csv and PR curves")
    _experiment_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--model", required=True, help="directory written by train")
    p.add_argument("--data", help="dataset directory with test proposals (default: generate from config)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="train and evaluate once per value of one parameter")
    _experiment_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--axis", required=True, help=f"one of: {', '.join(sweep_axes())}")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--data", help="dataset directory from gen-data")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="merge eval metrics into one table")
    p.add_argument("inputs", nargs="+", help="eval output directories or metrics.csv files")
    p.add_argument("--names", help="comma-separated run names (default: directory names)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("selfcheck", help="gradient and metric-oracle checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--grad-instances", type=int, default=50)
    p.add_argument("--metric-instances", type=int, default=1000)
    p.set_defaults(func=cmd_selfcheck)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, argv)
    except UsageError as exc:
        print(f"viewpose {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"viewpose {args.command}: error: file not found: {exc.filename}", file=sys.stderr)
        return 2
    except (ValidationFailure, DatasetFormatError, CheckpointError, DivergedError) as exc:
        print(f"viewpose {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
