"""Command-line entry points: run experiments, render reports, list scenarios.

``idlab run <config-or-scenario> [--out DIR] [--seeds s1,s2,...]`` executes a
config (a TOML path or the name of a shipped scenario) and exits 0 iff every
diagnostic verdict passed.  ``IDLAB_OUT`` sets the default output root.
"""

from __future__ import annotations

import argparse
import os
import sys
from importlib import resources

from .config import ConfigError
from .runner import render_report, run_experiment

__all__ = ["main", "list_scenarios", "scenario_path"]


def list_scenarios() -> list:
    """Names of the scenario configs shipped with the package."""
    pkg = resources.files("idlab") / "scenarios"
    return sorted(p.name[: -len(".toml")] for p in pkg.iterdir() if p.name.endswith(".toml"))


def scenario_path(name: str) -> str:
    """Filesystem path of a shipped scenario config."""
    path = resources.files("idlab") / "scenarios" / f"{name}.toml"
    if not path.is_file():
        raise FileNotFoundError(
            f"unknown scenario {name!r}; available: {', '.join(list_scenarios())}"
        )
    return str(path)


def _resolve_config(arg: str) -> str:
    if os.path.exists(arg):
        return arg
    if arg in list_scenarios():
        return scenario_path(arg)
    raise FileNotFoundError(f"no config file or shipped scenario named {arg!r}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="idlab", description="closed-loop identification laboratory"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config or shipped scenario")
    p_run.add_argument("config", help="path to a TOML config, or a shipped scenario name")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--seeds", default=None, help="comma-separated seed override")

    p_report = sub.add_parser("report", help="render a run manifest as a text report")
    p_report.add_argument("manifest", help="path to manifest.json")

    sub.add_parser("list-scenarios", help="list shipped scenario names")

    args = parser.parse_args(argv)

    if args.command == "list-scenarios":
        for name in list_scenarios():
            print(name)
        return 0

    if args.command == "report":
        try:
            sys.stdout.write(render_report(args.manifest))
        except FileNotFoundError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        return 0

    # run
    try:
        config_path = _resolve_config(args.config)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    seeds = None
    if args.seeds:
        try:
            seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
        except ValueError:
            print(f"error: --seeds must be comma-separated integers, got {args.seeds!r}",
                  file=sys.stderr)
            return 2
    try:
        manifest = run_experiment(config_path, out_dir=args.out, seeds=seeds)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    for v in manifest.verdicts:
        status = "PASS" if v.passed else "FAIL"
        print(f"[{status}] {v.name}: {v.detail}")
    print(f"manifest: {os.path.join(manifest.out_dir, 'manifest.json')}")
    return 0 if manifest.all_passed else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
