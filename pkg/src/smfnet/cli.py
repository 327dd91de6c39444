"""Command-line front end.

Commands::

    smfnet run --config CONFIG.json --out OUTDIR
    smfnet verify OUTDIR/steps.jsonl
    smfnet compare OUTDIR/steps.jsonl [--metric diameter|gnorm] [--frameworks f1,f2] [--out FILE]
    smfnet schema [--out FILE]

Exit codes: 0 on success, 1 when a property fails or a run aborts, 2 on
usage or configuration errors. Data goes to files; stdout carries short
status lines. ``SMFNET_LOG`` (error, warn, info, debug) sets the
diagnostic level on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
from importlib import metadata
from pathlib import Path

from .config import ConfigError, config_hash, resolve, schema
from .simulator import LogFormatError, SimulationError, compare, read_jsonl, run, verify, write_logs

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="smfnet", description="Distributed set-membership filtering simulator.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run a configuration and write logs")
    r.add_argument("--config", required=True, help="JSON configuration file")
    r.add_argument("--out", required=True, help="output directory")
    v = sub.add_parser("verify", help="check the properties of a run log")
    v.add_argument("log", help="steps.jsonl written by run")
    c = sub.add_parser("compare", help="export one metric column per framework")
    c.add_argument("log", help="steps.jsonl written by run")
    c.add_argument("--metric", choices=["diameter", "gnorm"], default="diameter")
    c.add_argument("--frameworks", help="comma-separated subset, default all in the log")
    c.add_argument("--out", help="output CSV (default: compare_<metric>.csv next to the log)")
    s = sub.add_parser("schema", help="write the configuration JSON schema")
    s.add_argument("--out", help="output file (default: stdout)")
    return p


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("artifact", "numpy", "scipy", "numba", "jsonschema"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def _cmd_run(args) -> int:
    cfg_path = Path(args.config)
    if not cfg_path.is_file():
        print(f"config file not found: {cfg_path}", file=sys.stderr)
        return EXIT_USAGE
    try:
        raw = json.loads(cfg_path.read_text())
    except json.JSONDecodeError as exc:
        print(f"malformed config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = resolve(raw)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"config": cfg, "config_sha256": config_hash(cfg), "seed": cfg["seed"], "versions": _versions()}
    status = EXIT_OK
    try:
        records = run(cfg).records
    except SimulationError as exc:
        records = exc.records
        manifest["error"] = str(exc)
        print(f"run aborted: {exc}", file=sys.stderr)
        status = EXIT_FAIL
    write_logs(records, out / "steps.csv", out / "steps.jsonl")
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(records)} records to {out}")
    return status


def _load_log(path):
    p = Path(path)
    if not p.is_file():
        print(f"log file not found: {p}", file=sys.stderr)
        return None
    try:
        return read_jsonl(p)
    except LogFormatError as exc:
        print(f"bad log format: {exc}", file=sys.stderr)
        return None


def _cmd_verify(args) -> int:
    records = _load_log(args.log)
    if records is None:
        return EXIT_USAGE
    report = verify(records)
    print(report.text() if report.results else "no records: empty report")
    return EXIT_OK if report.passed else EXIT_FAIL


def _cmd_compare(args) -> int:
    records = _load_log(args.log)
    if records is None:
        return EXIT_USAGE
    fws = None if not args.frameworks else [f.strip() for f in args.frameworks.split(",") if f.strip()]
    text = compare(records, args.metric, fws)
    out = Path(args.out) if args.out else Path(args.log).with_name(f"compare_{args.metric}.csv")
    out.write_text(text)
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_schema(args) -> int:
    text = json.dumps(schema(), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv=None) -> int:
    level = os.environ.get("SMFNET_LOG", "warn").lower()
    logging.basicConfig(level=_LEVELS.get(level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    handler = {"run": _cmd_run, "verify": _cmd_verify, "compare": _cmd_compare, "schema": _cmd_schema}
    return handler[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
