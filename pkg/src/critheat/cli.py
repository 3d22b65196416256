"""Command-line entry point.

Each subcommand names an experiment kind; a config file supplies the rest
and flags override the common fields.  Outputs (CSVs, field files,
figures, manifest) land in the --out directory.

    critheat spectrum --out results/spectrum
    critheat classify --config examples/classify.yaml --out results/c1
    critheat shoot --config shoot.json --out results/threshold --seed 3
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .errors import CritHeatError
from .experiments import ExperimentConfig, run_config

_SUBCOMMANDS = {
    "spectrum": "spectrum",
    "evolve": "evolve",
    "shoot": "shoot",
    "minimal": "minimal",
    "classify": "classify",
    "selfsim": "selfsim-sweep",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="critheat",
        description="Numerical laboratory for near-soliton dynamics of the "
        "energy-critical semilinear heat flow (radial, d >= 7).",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, kind in _SUBCOMMANDS.items():
        p = sub.add_parser(name, help=f"run a {kind} experiment")
        p.add_argument("--config", type=Path, default=None, help="JSON/YAML config")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="RNG seed override")
        p.add_argument("--workers", type=int, default=None, help="worker pool size")
        p.add_argument(
            "--override-neighborhood",
            action="store_true",
            help="allow initial data outside the near-soliton neighbourhood",
        )
        p.add_argument("--d", type=int, default=None, help="space dimension override")
        p.set_defaults(kind=kind)
    return parser


def load_config(args) -> ExperimentConfig:
    if args.config is not None:
        cfg = ExperimentConfig.from_file(args.config)
        if cfg.kind != args.kind:
            cfg = dataclasses.replace(cfg, kind=args.kind)
    else:
        cfg = ExperimentConfig(kind=args.kind)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.d is not None:
        overrides["d"] = args.d
    if args.override_neighborhood:
        overrides["override_neighborhood"] = True
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        manifest = run_config(cfg, args.out)
    except CritHeatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    n = len(manifest["files"])
    print(f"wrote {n} artifacts to {args.out} (config {manifest['config_hash']})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
