"""demirage: correcting the plasmonic mirage in single-molecule localization.

Boundary-integral simulation of a dipole emitter near a metallic
nanoparticle, back-propagation imaging of its far field and localization with
and without correction by the particle's plasmonic modes.

Usage:
    demirage mirage --config configs/diamond.toml --out out/diamond
    demirage sweep-noise --config configs/diamond.toml --threads 4
    demirage init-config

Run 'demirage --help' for all subcommands.
"""

import argparse
import json
import os
import sys

# Add parent directory to path so imports work when run directly
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from core.config import generate_sample_config, load_config, merge_cli_args
from core.errors import ConfigError
from experiments.registry import build_registry
from ui.cli import print_error, run_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="demirage",
        description="demirage: plasmonic mirage simulation and corrected dipole localization",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    registry = build_registry()
    for entry in registry.list_experiments():
        p = sub.add_parser(entry["name"], help=entry["description"])
        p.add_argument("--config", default=None, help="Path to a TOML config file (default: built-in defaults)")
        p.add_argument("--out", default=None, help="Output directory (default: run.out, 'out')")
        p.add_argument("--seed", type=int, default=None, help="Base seed of noise realizations (default: 0)")
        p.add_argument("--threads", type=int, default=None, help="Worker threads for sweeps (default: 1)")
        p.add_argument("--cache-dir", default=None, help="Mode-image cache directory (default: disabled)")
        if entry["name"] in ("image", "localize"):
            p.add_argument("--data", default=None, help="Far-field CSV written by 'forward'")
        p.add_argument("--no-log", action="store_true", help="Do not write the JSONL run log")

    p = sub.add_parser("init-config", help="Write a sample config file and exit")
    p.add_argument("--path", default="demirage.toml", help="Target file (default: demirage.toml)")
    p.add_argument("--force", action="store_true", help="Overwrite an existing file")

    sub.add_parser("list", help="List experiments and exit")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "init-config":
        if os.path.exists(args.path) and not args.force:
            print_error(ConfigError(f"{args.path} exists (use --force to overwrite)"))
            return 2
        with open(args.path, "w", encoding="utf-8") as f:
            f.write(generate_sample_config())
        print(f"Created {args.path} with default settings.", file=sys.stderr)
        return 0

    registry = build_registry()
    if args.command == "list":
        print(json.dumps(registry.list_experiments(), indent=2))
        return 0

    args.experiment = args.command
    try:
        config = load_config(args.config)
        config = merge_cli_args(config, args)
    except ConfigError as e:
        print_error(e)
        return 2

    config_file = config.get("_config_file")
    if config_file:
        print(f"Config: {config_file}", file=sys.stderr)
    return run_experiment(registry, args.command, config, write_log=not args.no_log)


if __name__ == "__main__":
    sys.exit(main())
