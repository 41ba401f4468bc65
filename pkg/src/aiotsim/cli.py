"""Command-line entry point: ``aiotsim run | validate | summarize``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .errors import ConfigError
from .scenario import check_references, load_scenario, read_af_commands
from .sim import run

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 1, 2
DEFAULT_OUT = "out"


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aiotsim", description="Ambient IoT discrete-event simulator")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario and write metrics.json (and optionally a trace)")
    r.add_argument("--scenario", required=True, type=Path)
    r.add_argument("--seed", type=int, help="override the scenario seed")
    r.add_argument("--out", type=Path, default=Path(os.environ.get("AIOTSIM_OUT", DEFAULT_OUT)),
                   help="output directory (default: $AIOTSIM_OUT or ./out)")
    r.add_argument("--trace", action="store_true", help="also write trace.jsonl")
    r.add_argument("--af-commands", type=Path, help="line-delimited JSON AF requests queued after the scenario tasks")

    v = sub.add_parser("validate", help="check a scenario without running it")
    v.add_argument("--scenario", required=True, type=Path)

    s = sub.add_parser("summarize", help="print a per-task table from metrics.json")
    s.add_argument("--metrics", required=True, type=Path)
    return p


def _err(msg: str) -> None:
    print(f"aiotsim: {msg}", file=sys.stderr)


def _load(args):
    cfg = load_scenario(args.scenario)
    extra = []
    if getattr(args, "af_commands", None) is not None:
        extra = read_af_commands(args.af_commands)
        reader_ids = {r.reader_id for r in cfg.readers}
        device_ids = {d.id for d in cfg.devices}
        for i, req in enumerate(extra):
            # unknown AFs are left for the NEF to reject at run time
            check_references(req, cfg.afs, reader_ids, device_ids, f"af-commands[{i}]", check_af=False)
    return cfg, extra


def cmd_run(args) -> int:
    cfg, extra = _load(args)
    if args.seed is not None and not 0 <= args.seed < 1 << 64:
        raise ConfigError("--seed must be an unsigned 64-bit integer")
    args.out.mkdir(parents=True, exist_ok=True)
    trace_path = args.out / "trace.jsonl"
    if args.trace:
        with open(trace_path, "w", encoding="utf-8", newline="\n") as fh:
            result = run(cfg, args.seed, fh, extra)
    else:
        result = run(cfg, args.seed, None, extra)
    (args.out / "metrics.json").write_text(result.metrics_json(), encoding="utf-8")
    for t in result.metrics["tasks"]:
        line = f"task {t['task_id']}: {t['status']} reported {t['devices_reported']}/{t['devices_matched']}"
        if t["failure"]:
            line += f" ({t['failure']})"
        print(line)
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = load_scenario(args.scenario)
    print(f"OK: {len(cfg.devices)} devices, {len(cfg.readers)} readers, {len(cfg.tasks)} tasks, "
          f"{cfg.arch_option.value}")
    return EXIT_OK


def cmd_summarize(args) -> int:
    try:
        doc = json.loads(args.metrics.read_text(encoding="utf-8"))
        tasks = doc["tasks"]
        rows = [
            (str(t["task_id"]), f"{t['devices_reported']}/{t['devices_matched']}", str(t["frames"]),
             str(t["collisions"]), str(t["security_rejects"]))
            for t in tasks
        ]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"{args.metrics}: malformed metrics ({exc})") from None
    header = ("task", "reported/matched", "frames", "collisions", "security rejects")
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(header)]
    for row in (header, *rows):
        print("  ".join(cell.rjust(w) for cell, w in zip(row, widths)))
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handler = {"run": cmd_run, "validate": cmd_validate, "summarize": cmd_summarize}[args.command]
    try:
        return handler(args)
    except FileNotFoundError as exc:
        _err(f"{exc.filename}: no such file")
        return EXIT_CONFIG
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except OSError as exc:
        _err(f"{exc.filename or ''}: {exc.strerror or exc}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
