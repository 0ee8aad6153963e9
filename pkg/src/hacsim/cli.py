"""Command-line front end: ``hacsim --scenario <name> ...``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import ConfigError, NumericError
from .scenarios import SCENARIOS, ScenarioSpec, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hacsim", description="Run a hybrid angle control scenario.")
    ap.add_argument("--scenario", required=True, choices=SCENARIOS)
    ap.add_argument("--config", type=Path, help="TOML file overriding the baseline parameters")
    ap.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    ap.add_argument("--t-stop", type=float, help="simulated time (s)")
    ap.add_argument("--dt", type=float, help="integration step (s)")
    ap.add_argument("--plots", choices=("on", "off"), default="off")
    ap.add_argument("--ctrl-mode", choices=("discrete", "continuous"))
    ap.add_argument("--seed", type=int)
    ap.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                    help="override one configuration value (repeatable)")
    return ap


def main(argv: list[str] | None = None) -> int:
    from .config import parse_override

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    try:
        text = args.config.read_text() if args.config else ""
        overrides = dict(parse_override(item) for item in args.set)
        spec = ScenarioSpec(args.scenario, overrides=overrides, config_text=text, t_stop=args.t_stop,
                            h=args.dt, seed=args.seed, ctrl_mode=args.ctrl_mode, out_dir=args.out,
                            plots=args.plots == "on")
        report = run_scenario(spec)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(report.to_text().split("\n[files]")[0])
    print(f"report written to {report.files['report']}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
