"""Command-line runner: ``latentlab run <experiment> --config <path> --out <dir>`` and ``latentlab list``."""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback

from . import __version__
from .experiments import REGISTRY, ConfigError, resolve_config, write_outputs
from .experiments.base import run_id

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _default_threads():
    try:
        return max(1, int(os.environ.get("LATENTLAB_THREADS", "1")))
    except ValueError:
        return 1


def list_experiments(stream=None):
    stream = stream or sys.stdout
    for name in sorted(REGISTRY):
        print(f"{name}\t{REGISTRY[name].description}", file=stream)
    return EXIT_OK


def _diagnostic(kind, message, **extra):
    return {"error": kind, "message": message, **extra}


def run(experiment_name, config_path, out_dir, threads=None, stderr=None):
    """Run one experiment; returns the process exit code."""
    stderr = stderr or sys.stderr
    threads = threads or _default_threads()
    if experiment_name not in REGISTRY:
        print(f"unknown experiment {experiment_name!r}; valid names: {', '.join(sorted(REGISTRY))}", file=stderr)
        return EXIT_CONFIG
    try:
        with open(config_path) as fh:
            user_config = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read config {config_path}: {exc}", file=stderr)
        return EXIT_CONFIG
    try:
        config = resolve_config(experiment_name, user_config)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=stderr)
        return EXIT_CONFIG
    try:
        result = REGISTRY[experiment_name].run(config, threads=threads)
    except Exception as exc:  # noqa: BLE001 - every failure becomes a diagnostic
        diag = _diagnostic(type(exc).__name__, str(exc), experiment=experiment_name,
                           run_id=run_id(config), traceback=traceback.format_exc())
        text = json.dumps(diag, indent=2, sort_keys=True)
        print(text, file=stderr)
        path = os.path.join(out_dir, experiment_name, run_id(config))
        os.makedirs(path, exist_ok=True)
        with open(os.path.join(path, "error.json"), "w") as fh:
            fh.write(text + "\n")
        return EXIT_RUNTIME
    path = write_outputs(out_dir, experiment_name, config, result, __version__)
    print(path)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="latentlab")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a named experiment")
    p_run.add_argument("experiment")
    p_run.add_argument("--config", required=True, help="JSON config; unspecified fields take bundled defaults")
    p_run.add_argument("--out", required=True, help="output root directory")
    p_run.add_argument("--threads", type=int, default=None, help="worker threads (default $LATENTLAB_THREADS or 1)")
    sub.add_parser("list", help="list experiments")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "list":
        return list_experiments()
    if args.threads is not None and args.threads < 1:
        print("--threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    return run(args.experiment, args.config, args.out, threads=args.threads)


if __name__ == "__main__":
    sys.exit(main())
