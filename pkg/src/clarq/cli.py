"""Command-line front end: ``clarq <experiment> [--config PATH] [flags]``.

Exit status: 0 on success, 1 for configuration errors (nothing is written),
2 when every result row is infeasible.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import yaml

from . import __version__
from .config import EXPERIMENTS, ConfigError, ExperimentConfig, load_config
from .experiments import Result, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INFEASIBLE = 2


def _parse_set(items: list[str]) -> dict:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            out[key] = yaml.safe_load(value)
        except yaml.YAMLError:
            raise ConfigError(f"--set {key}: cannot parse value {value!r}") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clarq", description="Optimal CLARQ scheduling experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", metavar="PATH", help="YAML config file")
        p.add_argument("--seed", type=int, help="overrides `seed`")
        p.add_argument("--out", metavar="DIR", help="overrides `output_path`")
        p.add_argument("--workers", type=int, help="overrides `workers`")
        p.add_argument("--scenario", metavar="NAME", help="overrides `scenario` with a preset")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override any config key by dotted path, e.g. overrides.n_max=1200")
        p.add_argument("-q", "--quiet", action="store_true", help="do not print the summary")
    return parser


def _cell(v):
    return repr(v) if isinstance(v, float) else v


def write_outputs(cfg: ExperimentConfig, result: Result, argv: list[str]) -> Path:
    out_dir = Path(cfg.output_path)
    out_dir.mkdir(parents=True, exist_ok=True)
    main = out_dir / f"{cfg.experiment}.csv"
    with open(main, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(result.columns)
        for row in result.rows:
            w.writerow([_cell(row.get(c, "")) for c in result.columns])
    extras = []
    for name, writer in result.artifacts.items():
        path = Path(name) if Path(name).is_absolute() else out_dir / name
        writer(path)
        extras.append(str(path))
    meta = {
        "experiment": cfg.experiment,
        "version": __version__,
        "seed": cfg.seed,
        "config": cfg.echo(),
        "scenario": cfg.scenario.to_record(),
        "outputs": [str(main), *extras],
        "argv": argv,
    }
    main.with_suffix(".meta.json").write_text(json.dumps(meta, indent=2, default=list) + "\n")
    return main


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cli = _parse_set(args.set)
        for flag, key in (("seed", "seed"), ("out", "output_path"), ("workers", "workers"),
                          ("scenario", "scenario")):
            value = getattr(args, flag)
            if value is not None:
                cli[key] = value
        cfg = load_config(args.config, args.experiment, cli)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        result = run_experiment(cfg)
    except ValueError as exc:
        # parameter combinations only detectable while solving, e.g. oversized APC instances
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    main_csv = write_outputs(cfg, result, argv)
    if not args.quiet:
        for line in result.messages:
            print(line)
        print(f"wrote {main_csv}")
    if result.infeasible_only:
        print("all results infeasible", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
