"""``mfg-lab`` command line: run, validate and list scenario configs."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import traceback
from importlib import resources
from pathlib import Path

from .config import ConfigError, validate_config
from .errors import MfgLabError, NonConvergence
from .runner import OUT_DIR_ENV, run_scenario

EXIT_OK, EXIT_CHECKS_FAILED, EXIT_INTERNAL = 0, 1, 5


def _bundled():
    return resources.files("mfglab") / "scenarios"


def list_examples() -> list[tuple[str, str, str]]:
    """Sorted ``(file name, kind, description)`` for every bundled config."""
    out = []
    for entry in sorted(_bundled().iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".json"):
            cfg = validate_config(entry.read_text(encoding="utf-8"))
            out.append((entry.name, cfg.kind, cfg.description))
    return out


def read_config(path: str) -> tuple[str, str]:
    """Text and scenario id of ``path``; bare names fall back to the bundled corpus."""
    p = Path(path)
    if not p.exists():
        entry = _bundled() / p.name
        if entry.is_file():
            return entry.read_text(encoding="utf-8"), Path(p.name).stem
        raise FileNotFoundError(path)
    return p.read_text(encoding="utf-8"), p.stem


def error_record(exc: BaseException) -> tuple[int, dict]:
    code = getattr(exc, "exit_code", EXIT_INTERNAL) if isinstance(exc, MfgLabError) else EXIT_INTERNAL
    rec = {"error": type(exc).__name__, "exit_code": code, "message": str(exc)}
    if isinstance(exc, ConfigError):
        rec["violations"] = [{"path": p, "message": m} for p, m in exc.violations]
        if exc.line is not None:
            rec["line"], rec["column"] = exc.line, exc.column
    if isinstance(exc, NonConvergence):
        rec["residual_history"] = [float(r) for r in exc.history]
    return code, rec


def _fail(exc: BaseException) -> int:
    code, rec = error_record(exc)
    if code == EXIT_INTERNAL:
        rec["traceback"] = traceback.format_exc()
    print(json.dumps(rec, indent=2, sort_keys=True), file=sys.stderr)
    return code


def _load(path: str):
    try:
        text, name = read_config(path)
    except (OSError, UnicodeDecodeError) as e:
        raise ConfigError([("<file>", f"cannot read {path}: {e}")]) from e
    return validate_config(text), name


def cmd_run(args) -> int:
    cfg, name = _load(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError([("seed", "must be a nonnegative integer")])
        cfg = dataclasses.replace(cfg, seed=args.seed)
    report = run_scenario(cfg, args.out, name, args.workers)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK if report.passed else EXIT_CHECKS_FAILED


def cmd_validate(args) -> int:
    cfg, name = _load(args.config)
    print(json.dumps({"valid": True, "scenario": name, "kind": cfg.kind}, sort_keys=True))
    return EXIT_OK


def cmd_examples(args) -> int:
    for name, kind, desc in list_examples():
        print(f"{name}\t{kind}\t{desc}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mfg-lab", description="Mean-field game and FBSDE scenario runner.")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario config")
    run.add_argument("--config", required=True, help="JSON file, or the name of a bundled example")
    run.add_argument("--out", default=None, help=f"output directory (default: config out_dir, then ${OUT_DIR_ENV}/<id>)")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--workers", type=int, default=1, help="threads for independent replicates")
    run.set_defaults(func=cmd_run)
    val = sub.add_parser("validate", help="check a config and list every violation")
    val.add_argument("--config", required=True)
    val.set_defaults(func=cmd_validate)
    ex = sub.add_parser("examples", help="list bundled scenario configs")
    ex.set_defaults(func=cmd_examples)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MfgLabError as e:
        return _fail(e)
    except Exception as e:  # noqa: BLE001 - surfaced as an internal error record
        return _fail(e)


if __name__ == "__main__":
    sys.exit(main())
