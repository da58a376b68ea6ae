"""Command-line entry point: ``eonoise <stage|run> [options]``."""

import argparse
import json
import sys

from .config import DEFAULT_CONFIG, ExperimentConfig, load_config
from .errors import (
    DatasetError,
    DegenerateDesignError,
    DependencyError,
    EonoiseError,
    FitFailureError,
    HashMismatchError,
    InvalidInputError,
)
from .pipeline import STAGES, Pipeline

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_FIT = 2
EXIT_IO = 3


def _add_common(p):
    p.add_argument("--config", metavar="PATH", help="JSON or YAML configuration (defaults apply to missing keys)")
    p.add_argument("--out", metavar="DIR", default="eonoise-out", help="output directory (default: %(default)s)")
    p.add_argument("--seed", type=int, help="override the configuration seed")
    p.add_argument("--override-hash", action="store_true",
                   help="accept upstream artifacts written under a different configuration hash")


def build_parser():
    parser = argparse.ArgumentParser(prog="eonoise", description="Simulate and analyse pulsed light-induced "
                                     "microwave noise measurements.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    run = sub.add_parser("run", help="run several stages in dependency order")
    _add_common(run)
    run.add_argument("--stages", default=",".join(STAGES),
                     help="comma-separated stage list (default: all stages)")
    for stage in STAGES:
        _add_common(sub.add_parser(stage, help=f"run the {stage} stage"))
    sub.add_parser("default-config", help="print the default configuration as JSON")
    return parser


def _exit_code(exc):
    if isinstance(exc, (FitFailureError, DegenerateDesignError)):
        return EXIT_FIT
    if isinstance(exc, (DatasetError, OSError)):
        return EXIT_IO
    if isinstance(exc, (InvalidInputError, DependencyError, HashMismatchError, EonoiseError)):
        return EXIT_VALIDATION
    raise exc


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "default-config":
        print(json.dumps(DEFAULT_CONFIG, indent=2, sort_keys=True))
        return EXIT_OK
    try:
        config = load_config(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            config = config.with_seed(args.seed)
        if args.command == "run":
            stages = [s.strip() for s in args.stages.split(",") if s.strip()]
        else:
            stages = [args.command]
        Pipeline(config, args.out, override_hash=args.override_hash).run(stages)
    except (EonoiseError, OSError) as exc:
        code = _exit_code(exc)
        print(f"eonoise: error: {exc}", file=sys.stderr)
        return code
    print(f"eonoise: wrote {args.out}/summary.json (config hash {config.hash})")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
