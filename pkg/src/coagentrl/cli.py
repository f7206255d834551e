"""Command line: ``coagentrl train | compare | verify | list-experiments``.

Exit codes: 0 success, 1 verification failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import EXPERIMENTS, ConfigError, defaults_for, parse_config, parse_override, to_toml
from .experiments import SchemaError, compare, format_summary, run_experiment
from .oracles import run_checks

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG = 0, 1, 2


def _overrides(items) -> dict:
    return dict(parse_override(item) for item in items or ())


def cmd_train(args) -> int:
    overrides = _overrides(args.set)
    if args.config:
        text = Path(args.config).read_text(encoding="utf-8")
    elif args.experiment:
        text = f'experiment = "{args.experiment}"\n'
    else:
        raise ConfigError("train needs --config or --experiment")
    config = parse_config(text, overrides)
    paths = run_experiment(config, args.out, svg=args.svg)
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_compare(args) -> int:
    rows = compare(args.files, metric=args.metric, threshold=args.threshold)
    sys.stdout.write(format_summary(rows, args.metric, args.threshold))
    return EXIT_OK


def cmd_verify(args) -> int:
    results = run_checks(alpha=args.alpha)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if failed:
        print("failed: " + ", ".join(failed))
        return EXIT_VERIFY
    return EXIT_OK


def cmd_list(args) -> int:
    for name in EXPERIMENTS:
        if args.show:
            print(f"# {name}")
            print(to_toml(defaults_for(name)))
        else:
            print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coagentrl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run an experiment and write its learning curves")
    p.add_argument("--config", help="TOML config document")
    p.add_argument("--experiment", help="experiment id with default settings (instead of --config)")
    p.add_argument("--out", help="CSV path (overrides the config's output)")
    p.add_argument("--svg", action="store_true", help="also write an SVG chart next to each CSV")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("compare", help="summarise two or more curve files")
    p.add_argument("files", nargs="+")
    p.add_argument("--metric", choices=("return", "steps"), default="return")
    p.add_argument("--threshold", type=float, default=100.0, help="moving-average target for episodes-to-threshold")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("verify", help="run the gradient and estimator oracle suite")
    p.add_argument("--alpha", type=float, default=1.0, help="step size used by the update checks")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("list-experiments", help="list experiment ids")
    p.add_argument("--show", action="store_true", help="print each experiment's full default config")
    p.set_defaults(func=cmd_list)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SchemaError, ValueError, OSError) as exc:
        if args.command == "compare":
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        raise


if __name__ == "__main__":
    sys.exit(main())
