"""Command-line interface: ``limes generate | run | report``.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 data validation error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import experiment, metrics
from .config import ConfigError, load_config
from .stream import DataValidationError, generate_synthetic, load_dataset, manifest_path, save_dataset

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DATA = 4

log = logging.getLogger("limes")


class CLIError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _load_config(path):
    try:
        return load_config(path)
    except ConfigError as exc:
        raise CLIError(str(exc), EXIT_CONFIG) from None
    except OSError as exc:
        raise CLIError(f"cannot read config {path}: {exc.strerror or exc}", EXIT_IO) from None


def cmd_generate(args) -> None:
    gen_cfg, _ = _load_config(args.config)
    dataset = generate_synthetic(gen_cfg)
    out = Path(args.out)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        save_dataset(dataset, out)
    except OSError as exc:
        raise CLIError(f"cannot write {out}: {exc.strerror}", EXIT_IO) from None
    sizes = sorted({len(b) for b in dataset.batches})
    print(
        f"wrote {out} and {manifest_path(out)}: L={dataset.num_classes} d={dataset.feature_dim} "
        f"steps={len(dataset)} per-step n={sizes[0] if len(sizes) == 1 else sizes} "
        f"period={dataset.period} seed={gen_cfg.seed}"
    )


def cmd_run(args) -> None:
    _, exp_cfg = _load_config(args.config)
    overrides = {}
    if args.methods:
        overrides["methods"] = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        try:
            exp_cfg = dataclasses.replace(exp_cfg, **overrides)
        except ValueError as exc:
            raise CLIError(str(exc), EXIT_CONFIG) from None
    try:
        dataset = load_dataset(args.data)
    except OSError as exc:
        raise CLIError(f"cannot read {args.data}: {exc.strerror or exc}", EXIT_IO) from None
    except DataValidationError as exc:
        raise CLIError(str(exc), EXIT_DATA) from None

    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CLIError(f"cannot create {out}: {exc.strerror}", EXIT_IO) from None
    try:
        results = experiment.run_experiment(
            dataset, exp_cfg, out_dir=out, resume=args.resume, workers=args.workers
        )
    except experiment.ResumeError as exc:
        raise CLIError(str(exc), EXIT_DATA) from None
    except DataValidationError as exc:
        raise CLIError(str(exc), EXIT_DATA) from None
    methods = list(dict.fromkeys(s.method for s in results))
    print(
        f"ran {len(methods)} method(s) x {exp_cfg.realizations} realization(s), "
        f"{len(results[0])} evaluated steps each -> {out / 'timeseries.csv'}"
    )


def _read_run(run_dir: Path) -> tuple[list[metrics.AccuracySeries], dict]:
    series_path = run_dir / "timeseries.csv"
    try:
        meta = json.loads((run_dir / "run.json").read_text())
        series = metrics.read_series_csv(series_path)
    except OSError as exc:
        raise CLIError(f"cannot read run directory {run_dir}: {exc.strerror or exc}", EXIT_IO) from None
    except ValueError as exc:
        raise CLIError(str(exc), EXIT_DATA) from None
    have = {(s.method, s.realization): len(s) for s in series}
    missing = [
        f"{m}/r{r}"
        for m in meta["methods"]
        for r in range(meta["realizations"])
        if have.get((m, r)) != meta["steps"]
    ]
    if missing:
        raise CLIError("missing or partial series: " + ", ".join(missing), EXIT_DATA)
    return series, meta


def cmd_report(args) -> None:
    run_dir = Path(args.input)
    series, meta = _read_run(run_dir)
    report = metrics.summarize_realizations(series, meta["period"], pairing=args.pairing)
    try:
        metrics.write_summary_csv(report, run_dir / "summary.csv")
        metrics.write_tests_csv(report, run_dir / "pairwise_tests.csv")
        (run_dir / "table.txt").write_text(metrics.format_table(report) + "\n")
    except OSError as exc:
        raise CLIError(f"cannot write report: {exc.strerror}", EXIT_IO) from None
    print(metrics.format_table(report))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="limes", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic class-prior-shift stream")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="dataset CSV path; the manifest goes next to it")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("run", help="evaluate methods on a dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--methods", help="comma-separated list, overrides the config")
    p.add_argument("--seed", type=int)
    p.add_argument("--resume", action="store_true", help="continue from checkpoints in --out")
    p.add_argument("--workers", type=int, help="defaults to $STREAM_WORKERS or the CPU count")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="aggregate a run directory")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--pairing", choices=["per-realization", "per-day"], default="per-realization")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    return 0


if __name__ == "__main__":
    sys.exit(main())
