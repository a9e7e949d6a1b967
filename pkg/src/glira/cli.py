"""Command line entry point: ``glira <subcommand> --config PATH --out DIR``.

Exit codes: 0 success, 2 configuration error, 3 training divergence,
4 missing artifact from an earlier stage.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import pipeline
from .config import MODES, load_config
from .errors import ConfigError, MissingArtifact, ShapeError, TrainingDiverged

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_MISSING = 0, 2, 3, 4


def _common(p):
    p.add_argument("--config", help="INI experiment config (defaults apply when omitted)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--mode", choices=MODES, help="override [shadows] training_mode")
    p.add_argument("--seed", type=int, help="override [experiment] seed")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="glira", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [("run-target", "train and persist the target model"),
                        ("run-shadows", "train and persist the shadow ensemble"),
                        ("attack", "score members/non-members and write metrics"),
                        ("report", "LiRA vs GLiRA comparison table")]:
        _common(sub.add_parser(name, help=help_))
    sp = sub.add_parser("sweep", help="rerun shadows+attack over a parameter grid")
    _common(sp)
    sp.add_argument("--parameter", required=True, choices=sorted(pipeline.SWEEP_PARAMETERS))
    sp.add_argument("--values", required=True,
                    help="comma separated; shadow_size accepts multiples of the target size like 0.5x")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, seed=args.seed, mode=args.mode)
        if args.command == "run-target":
            pipeline.run_target(cfg, args.out)
        elif args.command == "run-shadows":
            pipeline.run_shadows(cfg, args.out)
        elif args.command == "attack":
            _, report = pipeline.run_attack(cfg, args.out)
            print(json.dumps(report.to_dict(), indent=1))
        elif args.command == "sweep":
            values = [v.strip() for v in args.values.split(",") if v.strip()]
            rows = pipeline.sweep(cfg, args.out, args.parameter, values)
            for r in rows:
                print(r)
        elif args.command == "report":
            rows = pipeline.comparative_report(cfg, args.out)
            for r in rows:
                print(r)
    except (ConfigError, ShapeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except MissingArtifact as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
