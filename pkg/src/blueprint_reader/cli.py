"""Command-line entry point: ``blueprint-reader <subcommand>``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import BlueprintError, ConfigError
from .objects import load_template_library
from .pipeline import (EXIT_FAILURE, EXIT_OK, batch_exit_code, default_config_yaml,
                       list_inputs, load_config, run_batch)
from .synth import demo_spec_path, load_spec, random_plan_spec, write_fixture

log = logging.getLogger("blueprint_reader")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML config file (default: $BLUEPRINT_CONFIG)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--scale-override", type=float, help="mm per input pixel; skips ruler detection")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, help="parallel worker processes")
    p.add_argument("--metric", help="template match metric for every template")
    p.add_argument("--threshold", type=float, help="template match threshold for every template")
    p.add_argument("--save-intermediates", action="store_true", default=None,
                   help="also write per-stage images")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blueprint-reader",
                                     description="Interpret raster floor plans.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("interpret", help="interpret one or more blueprint images")
    p.add_argument("files", nargs="+")
    _common(p)

    p = sub.add_parser("batch", help="interpret every image in a directory")
    p.add_argument("directory")
    _common(p)

    p = sub.add_parser("synth", help="render a fixture spec to PNG plus ground truth")
    p.add_argument("spec", help="spec JSON, 'demo' for the six-room plan or 'random'")
    p.add_argument("--out", default=".")
    p.add_argument("--name", help="output file stem (default: spec file stem)")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("templates", help="template library tools")
    tsub = p.add_subparsers(dest="action", required=True)
    v = tsub.add_parser("validate", help="check a template directory and its manifest")
    v.add_argument("directory")

    sub.add_parser("config", help="print the default configuration as YAML")
    return parser


def _overrides(args) -> dict:
    return {"out": args.out, "scale_override": args.scale_override, "seed": args.seed,
            "jobs": args.jobs, "metric": args.metric, "threshold": args.threshold,
            "save_intermediates": args.save_intermediates}


def _run(args, paths) -> int:
    cfg = load_config(args.config).with_overrides(**_overrides(args))
    results = run_batch(cfg, paths)
    for path, code, report, error in results:
        if error:
            print(f"FAIL {path}: {error}", file=sys.stderr)
        else:
            status = "ok" if code == EXIT_OK else "degraded"
            print(f"{status} {path} -> {report}")
    return batch_exit_code(results)


def _synth(args) -> int:
    if args.spec == "demo":
        spec, name = load_spec(demo_spec_path()), args.name or "demo_six_rooms"
    elif args.spec == "random":
        spec, name = random_plan_spec(args.seed), args.name or f"random_{args.seed}"
    else:
        spec, name = load_spec(args.spec), args.name or Path(args.spec).stem
    png, truth = write_fixture(spec, args.out, name, seed=args.seed)
    print(f"{png}\n{truth}")
    return EXIT_OK


def _templates_validate(args) -> int:
    templates = load_template_library(args.directory)
    for t in templates:
        print(f"{t.id}\t{t.cls}\t{t.image.width}x{t.image.height}\t"
              f"rotations={list(t.rotations)}\t{t.metric.value}\t{t.threshold}")
    print(f"{len(templates)} template(s) OK")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "interpret":
            return _run(args, [Path(f) for f in args.files])
        if args.command == "batch":
            return _run(args, list_inputs(args.directory))
        if args.command == "synth":
            return _synth(args)
        if args.command == "templates":
            return _templates_validate(args)
        if args.command == "config":
            sys.stdout.write(default_config_yaml())
            return EXIT_OK
    except (ConfigError, BlueprintError, OSError, json.JSONDecodeError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
