"""Command-line entry point: ``biphase {simulate,extract,retrieve,compare,all}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import pipeline
from .field import DomainError
from .fileformats import FormatError

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3

COMMANDS = {
    "simulate": pipeline.cmd_simulate,
    "extract": pipeline.cmd_extract,
    "retrieve": pipeline.cmd_retrieve,
    "compare": pipeline.cmd_compare,
    "all": pipeline.cmd_all,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="biphase",
        description="Simulate and analyse bi-photon and classical defocus phase imaging.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="INI configuration file (defaults are used when omitted)")
    parser.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    parser.add_argument("--output", help="output directory")
    parser.add_argument("--mode", choices=pipeline.MODES)
    parser.add_argument("--planes", help='comma-separated plane positions in meters, e.g. "0,0.0425"')
    parser.add_argument("--workers", type=int, help="concurrent per-plane work items")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_config(args) -> pipeline.PipelineConfig:
    cfg = pipeline.load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.output is not None:
        cfg.output_dir = args.output
    if args.mode is not None:
        cfg.mode = args.mode
    if args.workers is not None:
        cfg.workers = args.workers
    if args.planes is not None:
        try:
            cfg.planes = pipeline.parse_floats(args.planes)
        except ValueError:
            raise pipeline.ConfigError(f"planes.z: cannot parse {args.planes!r}") from None
    return cfg.validate()


def _summary(result):
    if isinstance(result, dict):
        return {str(k): _summary(v) for k, v in result.items() if k not in ("tie", "gs") or isinstance(v, dict)}
    if isinstance(result, list):
        return [_summary(v) for v in result]
    if hasattr(result, "__fspath__"):
        return str(result)
    return result


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        result = COMMANDS[args.command](cfg)
    except pipeline.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (pipeline.DataError, FormatError, DomainError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    if args.command == "retrieve":
        result = {m: v["report"] for m, v in result.items()}
    print(json.dumps(_summary(result), indent=2, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
