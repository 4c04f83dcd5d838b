"""Command-line entry point: ``nearswipt run | validate-config | curves``."""

from __future__ import annotations

import argparse
import csv
import logging
import platform
import sys
import time
from dataclasses import replace
from importlib import resources
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .config import dump_config, load_config, load_harvester
from .errors import ConfigurationError
from .experiments import EXPERIMENT_IDS, run_experiment
from .harvesting import EhModelParams, eh_curve
from .records import summarize, write_csv, write_summary_csv

log = logging.getLogger("nearswipt")


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nearswipt", description=__doc__)
    p.add_argument("--version", action="version", version=f"nearswipt {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte-Carlo campaign")
    run.add_argument("experiment_id", choices=EXPERIMENT_IDS)
    run.add_argument("--config", type=Path, help="YAML configuration file")
    run.add_argument("--trials", type=int, help="trials per sweep point")
    run.add_argument("--seed", type=int, help="master seed")
    run.add_argument("--workers", type=int, help="worker processes")
    run.add_argument("--out", type=Path, default=Path("results"), help="output directory")

    val = sub.add_parser("validate-config", help="check a configuration file and print it resolved")
    val.add_argument("config", type=Path)
    val.add_argument("--experiment", choices=EXPERIMENT_IDS,
                     help="experiment to resolve against if the file does not name one")

    cur = sub.add_parser("curves", help="dump model curves as CSV")
    cur.add_argument("--eh-model", action="store_true", required=True,
                     help="rectifier input/output curve")
    cur.add_argument("--config", type=Path, help="take rectifier parameters from this file")
    cur.add_argument("--max-input", type=float, help="largest RF input in W")
    cur.add_argument("--points", type=int, default=201)
    cur.add_argument("--out", type=Path, help="CSV path (default: stdout)")
    return p


def _meta_text(spec, elapsed: float, command: List[str]) -> str:
    lines = [
        f"nearswipt_version: {__version__}",
        f"numpy_version: {np.__version__}",
        f"python_version: {platform.python_version()}",
        f"experiment: {spec.experiment_id}",
        f"master_seed: {spec.seed}",
        f"trials: {spec.trials}",
        f"elapsed_s: {elapsed:.3f}",
        f"command: {' '.join(command)}",
        "resolved_config:",
    ]
    cfg = dump_config(spec)
    lines += ["  " + ln for ln in cfg.splitlines()]
    return "\n".join(lines) + "\n"


def _cmd_run(args, argv) -> int:
    spec = load_config(args.config, args.experiment_id)
    sysc = spec.system
    if args.trials is not None:
        sysc = replace(sysc, trials=args.trials)
    if args.seed is not None:
        sysc = replace(sysc, master_seed=args.seed)
    spec = replace(spec, system=sysc)
    if args.workers is not None:
        spec = replace(spec, workers=args.workers)
    if spec.trials < 1:
        raise ConfigurationError("trials must be at least 1")
    args.out.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    step = max(1, spec.trials // 10)

    def progress(done):
        if done % step == 0 or done == spec.trials:
            log.info("%s: %d/%d trials", spec.experiment_id, done, spec.trials)

    records = run_experiment(spec, progress=progress)
    elapsed = time.perf_counter() - t0

    write_csv(records, args.out / "records.csv")
    summary = summarize(records)
    write_summary_csv(summary, args.out / "summary.csv")
    (args.out / "meta.txt").write_text(_meta_text(spec, elapsed, ["nearswipt"] + argv))
    template = resources.files("nearswipt").joinpath("templates/plot_results.py.tmpl")
    (args.out / "plot_results.py").write_text(template.read_text())
    failed = sum(r.status.startswith("error") for r in records)
    print(f"{len(records)} records ({failed} failed) in {elapsed:.1f} s -> {args.out}")
    return 0


def _cmd_validate(args) -> int:
    spec = load_config(args.config, args.experiment)
    sys.stdout.write(dump_config(spec))
    return 0


def _cmd_curves(args) -> int:
    params = EhModelParams() if args.config is None else load_harvester(args.config)
    rf, dc = eh_curve(params, args.max_input, args.points)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rf_input_w", "dc_output_w"])
        for x, y in zip(rf, dc):
            w.writerow([repr(float(x)), repr(float(y))])
    finally:
        if args.out:
            fh.close()
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        if args.command == "run":
            return _cmd_run(args, argv)
        if args.command == "validate-config":
            return _cmd_validate(args)
        return _cmd_curves(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
