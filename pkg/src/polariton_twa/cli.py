"""Command line entry point.

    polariton-twa run --config cfg.yaml [--out DIR] [--seed N] [--format csv|json]
    polariton-twa validate --config cfg.yaml

Exit codes: 0 success, 2 invalid configuration or parameters, 3 numerical
failure. Errors go to stderr as a single JSON object.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import validate_config
from .errors import ConfigError, NoEquilibrium, NonFinite

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def _error(kind: str, message: str, code: int, errors=None) -> int:
    payload = {"error": kind, "message": message, "exit_code": code}
    if errors:
        payload["errors"] = errors
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="polariton-twa",
                                 description="Truncated-Wigner simulation of entangled-pumped condensates")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario and write its output files")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
    run.add_argument("--seed", type=_u64, help="RNG seed (overrides integrator.seed)")
    run.add_argument("--format", choices=("csv", "json"), help="table format (overrides output.format)")
    val = sub.add_parser("validate", help="check a config and print it with defaults filled in")
    val.add_argument("--config", required=True, type=Path)
    return ap


def _load(path: Path, overrides: dict):
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", errors=[{"path": "<file>", "msg": str(exc)}])
    return validate_config(text, overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {}
    if args.command == "run":
        if args.out is not None:
            overrides["output.dir"] = str(args.out)
        if args.seed is not None:
            overrides["integrator.seed"] = args.seed
        if args.format is not None:
            overrides["output.format"] = args.format
    try:
        cfg = _load(args.config, overrides)
    except ConfigError as exc:
        return _error("ConfigError", str(exc), EXIT_VALIDATION, exc.errors)

    if args.command == "validate":
        print(json.dumps(cfg.resolved(), sort_keys=True, indent=2))
        return EXIT_OK

    from .scenarios import run_scenario

    try:
        run = run_scenario(cfg)
    except NoEquilibrium as exc:
        return _error("NoEquilibrium", str(exc), EXIT_VALIDATION)
    except (NonFinite, FloatingPointError) as exc:
        return _error("NonFinite", str(exc), EXIT_NUMERICAL)
    print(json.dumps({"status": "ok", "manifest_sha256": run.sha,
                      "files": [str(p) for p in run.files]}, indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
