"""Command-line front end: run, plot, validate."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .experiments import (ConfigError, config_from_mapping, default_output_root,
                          load_config_file, run_experiment)
from .plots import emit_plots


def _apply_overrides(raw: dict, overrides: list[str]) -> dict:
    merged = dict(raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        merged[key.strip()] = value.strip()
    return merged


def _resolve_config(args) -> dict:
    raw = load_config_file(args.config) if args.config else {}
    raw = _apply_overrides(raw, args.overrides)
    if args.seed:
        raw["seeds"] = ",".join(str(s) for s in args.seed)
    return raw


def _cmd_run(args) -> int:
    config = config_from_mapping(_resolve_config(args))
    out_dir = args.out or config["out"] or \
        str(Path(default_output_root()) / "experiment")
    aggregate = run_experiment(config, out_dir, jobs=args.jobs)
    for name in sorted(aggregate["metrics"]):
        m = aggregate["metrics"][name]
        print(f"{name}: {m['mean']:.4f} +/- {m['std']:.4f}"
              f" (n={len(m['per_seed'])})")
    print(f"results written to {out_dir}")
    return 0


def _cmd_plot(args) -> int:
    out_dir = args.out or str(Path(args.bundle[0]) / "plots")
    written = emit_plots(args.bundle, out_dir)
    for path in written:
        print(path)
    return 0


def _cmd_validate(args) -> int:
    config = config_from_mapping(_resolve_config(args))
    print(json.dumps(config.flat(), indent=1, sort_keys=True))
    print("config ok")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oclas",
        description="Online continual-learning benchmark harness with"
                    " prior-adjusted softmax training.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p):
        p.add_argument("--config", help="flat key=value config file (or JSON)")
        p.add_argument("--seed", type=int, action="append", default=[],
                       help="run seed; repeat for multiple seeds"
                            " (overrides the config's seeds)")
        p.add_argument("overrides", nargs="*", metavar="KEY=VALUE",
                       help="dotted config overrides, e.g. trainer.tau=0.5")

    p_run = sub.add_parser("run", help="run a seeded experiment")
    add_config_args(p_run)
    p_run.add_argument("--jobs", type=int, default=1,
                       help="concurrent seed runs (default 1)")
    p_run.add_argument("--out", help="output directory"
                       " (default: config 'out' or $OCLAS_RESULTS_ROOT)")
    p_run.set_defaults(func=_cmd_run)

    p_plot = sub.add_parser("plot", help="render figures from result bundles")
    p_plot.add_argument("--bundle", action="append", required=True,
                        help="results directory; repeat to overlay bundles")
    p_plot.add_argument("--out", help="plot output directory"
                        " (default: <first bundle>/plots)")
    p_plot.set_defaults(func=_cmd_plot)

    p_val = sub.add_parser("validate", help="check a config without running")
    add_config_args(p_val)
    p_val.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
