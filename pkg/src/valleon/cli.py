"""Command-line entry point ``valleon``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import load_raw, validate
from .errors import ConfigError, ValleonError
from .pipeline import COMMANDS, REPRO, PipelineError, run_pipeline

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="valleon", description="Valley-dependent topological photonic circuit simulator")
    p.add_argument("command", choices=COMMANDS + REPRO)
    p.add_argument("input", nargs="?", help="hom.csv to fit (fit command only)")
    p.add_argument("--config", type=Path, help="JSON run configuration")
    p.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
    p.add_argument("--seed", type=int)
    p.add_argument("--format", help="comma-separated subset of csv,json,svg")
    g = p.add_argument_group("transport")
    g.add_argument("--geometry", choices=("straight", "z", "omega", "hsbs"))
    g.add_argument("--extent", type=int)
    g.add_argument("--carrier", type=float)
    g.add_argument("--gamma", type=float)
    g.add_argument("--steps", type=int)
    q = p.add_argument_group("quantum")
    q.add_argument("--pair", help="two detector modes, e.g. c,d")
    q.add_argument("--v0", type=float)
    q.add_argument("--sigma", type=float, help="spectral width (1/ps)")
    q.add_argument("--shape", choices=("dip", "peak"))
    return p


def _overrides(raw: dict, args) -> dict:
    def put(section, key, value):
        if value is not None:
            raw.setdefault(section, {})[key] = value

    if args.seed is not None:
        raw["seed"] = args.seed
    if args.format is not None:
        put("output", "formats", [f.strip() for f in args.format.split(",") if f.strip()])
    put("device", "geometry", args.geometry)
    put("device", "extent", args.extent)
    put("transport", "carrier", args.carrier)
    put("transport", "gamma", args.gamma)
    put("transport", "steps", args.steps)
    if args.pair is not None:
        put("quantum", "pair", [m.strip() for m in args.pair.split(",")])
    put("quantum", "v0", args.v0)
    put("quantum", "sigma", args.sigma)
    put("fit", "shape", args.shape)
    return raw


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = args.config.read_text() if args.config else "{}"
        cfg = validate(_overrides(load_raw(text), args))
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    try:
        manifest = run_pipeline(cfg, args.command, args.out, hom_csv=args.input)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION if isinstance(exc.cause, ValueError) else EXIT_NUMERICAL
    except ValleonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    out = Path(args.out or cfg.output["dir"])
    print(f"{args.command}: wrote {len(manifest['outputs'])} files + manifest.json to {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
