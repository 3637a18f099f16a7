"""Command-line entry point: ``cs-mbdct <subcommand> [options]``.

Subcommands run the pipeline up to a stage (``sense``, ``describe``,
``codebook``, ``encode``, ``classify``, ``run``), estimate energy-preserving
coefficient counts (``calibrate``), or render saved results (``report``).
Exit status is 0 on success, 2 for configuration or stage failures, with
the failing stage named in the message.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import descriptor, pipeline, sensing
from .config import ExperimentConfig, format_rate, parse_rates
from .errors import ConfigError, StageError
from .report import read_records, report_table

log = logging.getLogger("cs_mbdct")

STAGE_COMMANDS = {"sense": "sense", "describe": "describe", "codebook": "codebook",
                  "encode": "encode", "classify": "classify", "run": "classify"}


def build_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.from_dict()
    overrides = list(args.override or [])
    cfg = cfg.with_overrides(overrides)
    # dedicated flags win over --override; their paths are relative to the cwd
    extra = []
    if args.rates is not None:
        extra.append((["rates"], parse_rates(args.rates)))
    if args.seed is not None:
        extra.append((["seed"], args.seed))
    if args.out is not None:
        extra.append((["out"], str(Path(args.out).resolve())))
    if args.features is not None:
        extra.append((["features"], str(Path(args.features).resolve())))
    if args.matrix is not None:
        extra.append((["sensing", "matrix"], str(Path(args.matrix).resolve())))
    return cfg.with_overrides(extra)


def cmd_stage(args, cfg) -> int:
    until = STAGE_COMMANDS[args.command]
    results = pipeline.run_stages(cfg, until)
    if args.command == "run":
        print(report_table([r for res in results for r in res.reports]), end="")
        print(f"reports written to {cfg.out_dir}")
    elif until == "classify":
        for res in results:
            for rep in res.reports:
                print(pipeline.record_line(rep))
    else:
        manifest = {format_rate(res.rate): res.artifacts for res in results}
        print(json.dumps(manifest, indent=2, sort_keys=True))
    return 0


def cmd_calibrate(args, cfg) -> int:
    with pipeline.stage("config"):
        cfg.validate()
    exp = pipeline.Experiment(cfg)
    _, train, _ = exp.data()
    sizes = tuple(cfg.get("descriptor.block_sizes"))
    energies = [float(e) for e in args.energy.split(",")]
    out = {}
    with pipeline.stage("calibrate"):
        n = min(cfg.get("dictionary.sample_size"), len(train))
        for rate in cfg.rates:
            psi, _ = exp.matrix(rate)
            pick = np.sort(np.random.default_rng(cfg.get("seed")).choice(len(train), n, replace=False))
            proxies = sensing.proxies(train.images[pick], psi)
            out[format_rate(rate)] = {
                format_rate(e): list(descriptor.calibrate_counts(proxies, sizes, e, n,
                                                                 cfg.get("descriptor.stride"),
                                                                 cfg.get("seed")))
                for e in energies
            }
    text = json.dumps({"block_sizes": list(sizes), "counts": out}, indent=2, sort_keys=True) + "\n"
    pipeline.write_text(cfg.out_dir / "calibration.json", text)
    print(text, end="")
    return 0


def cmd_report(args, cfg) -> int:
    path = Path(args.input) if args.input else cfg.out_dir / "reports.jsonl"
    with pipeline.stage("report"):
        table = report_table(read_records(path))
        pipeline.write_text(path.with_name("report.txt"), table)
    print(table, end="")
    return 0


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--override", action="append", metavar="KEY=VALUE",
                        help="set a dotted config key; repeatable, value parsed as JSON")
    common.add_argument("--rates", help="comma-separated measurement rates, e.g. 0.25,0.1,0.05,0.01")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--features", help="external feature file (FEAT) to fuse with")
    common.add_argument("--matrix", help="measurement matrix file (PSIMAT) replacing random sensing")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="cs-mbdct", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "sense": "generate or load the measurement matrix per rate",
        "describe": "dense binary descriptors of train/test proxies",
        "codebook": "train the Hamming k-means dictionary",
        "encode": "bag-of-words features (and fusion inputs)",
        "classify": "cross-validate k, evaluate, write reports.jsonl",
        "run": "all stages, then print the results table",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text)
    cal = sub.add_parser("calibrate", parents=[common], help="energy-preserving coefficient counts")
    cal.add_argument("--energy", default="0.9,0.95", help="comma-separated energy fractions")
    rep = sub.add_parser("report", parents=[common], help="render a results table from reports.jsonl")
    rep.add_argument("--input", help="reports.jsonl (default: <out>/reports.jsonl)")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        with pipeline.stage("config"):
            cfg = build_config(args)
        if args.command == "calibrate":
            return cmd_calibrate(args, cfg)
        if args.command == "report":
            return cmd_report(args, cfg)
        return cmd_stage(args, cfg)
    except StageError as exc:
        print(f"cs-mbdct {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"cs-mbdct {args.command}: error: [config] {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
