"""Command-line entry point: ``fedsim init|validate|run|compare``.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from .config import SCENARIOS, ExperimentConfig, dump_config, load_config
from .engine import run_experiment
from .errors import ConfigError, ExistsError, FedSimError, MismatchedRuns, NonContiguousClass, ParseError, SchemaError
from .gate import account_costs

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("fedsim")


def _setup_logging() -> None:
    level = os.environ.get("FEDSIM_LOG", "error").strip().lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _emit_error(kind: str, exc: Exception, problems=None) -> None:
    payload = {"error": kind, "message": str(exc)}
    if problems:
        payload["fields"] = [{"field": p, "message": m} for p, m in problems]
    print(json.dumps(payload), file=sys.stderr)


def cmd_init(path, force: bool = False) -> int:
    p = Path(path)
    if p.exists() and not force:
        raise ExistsError(f"{p} already exists; pass --force to overwrite")
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(dump_config(ExperimentConfig()), encoding="utf-8")
    print(f"wrote default config to {p}")
    return EXIT_OK


def cmd_validate(path) -> int:
    cfg = load_config(path)
    print(f"{path}: valid ({cfg.population.num_clients} clients, {cfg.population.num_classes} classes, "
          f"{cfg.groups} groups, {cfg.rounds} rounds)")
    return EXIT_OK


def apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.rounds is not None:
        changes["rounds"] = args.rounds
    if args.gate is not None:
        changes["gate"] = dataclasses.replace(cfg.gate, enabled=args.gate == "on")
    if args.out is not None:
        changes["output_dir"] = args.out
    if args.scenario is not None:
        changes["scenario"] = args.scenario
    for key, val in changes.items():
        shown = val.enabled if key == "gate" else val
        print(f"override: {key} = {shown!r}", file=sys.stderr)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        raise ConfigError([("seed", "must fit in an unsigned 64-bit integer")])
    if args.rounds is not None and args.rounds < 0:
        raise ConfigError([("rounds", "must be >= 0")])
    return dataclasses.replace(cfg, **changes)


def cmd_run(args) -> int:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    cfg = apply_overrides(cfg, args)

    def progress(m):
        print(
            f"round {m.round:>4}  acc={m.global_accuracy:.4f}  loss={m.global_loss:.4f}  "
            f"part={m.participants} skip_pre={m.skipped_pre} skip_post={m.skipped_post} "
            f"drop={m.dropped_msgs} up={m.bytes_up} down={m.bytes_down} compute={m.compute_units}",
            flush=True,
        )

    report = run_experiment(cfg, progress=progress)
    print(
        f"final accuracy={report['final']['accuracy']:.4f} mcc={report['final']['mcc']:.4f}; "
        f"wrote {Path(cfg.output_dir) / 'metrics.csv'} and {Path(cfg.output_dir) / 'report.json'}"
    )
    return EXIT_OK


def _read_report(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError([(str(path), f"not a report file: {exc}")]) from exc


def cmd_compare(baseline_path, gated_path, out=None) -> int:
    s = account_costs(_read_report(baseline_path), _read_report(gated_path))
    print(f"communication savings: {s.comm_savings_pct:.2f}%  ({s.baseline_bytes} -> {s.gated_bytes} bytes)")
    print(f"compute savings:       {s.compute_savings_pct:.2f}%  ({s.baseline_compute} -> {s.gated_compute} units)")
    print(f"accuracy delta:        {s.accuracy_delta:+.4f}  (baseline - gated)")
    out_dir = Path(out) if out else Path(gated_path).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "savings.json").write_text(json.dumps(s.to_json(), indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fedsim", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="write a default experiment config")
    p.add_argument("path", nargs="?", help="config file to create")
    p.add_argument("--config", dest="config", help="config file to create (alternative to PATH)")
    p.add_argument("--force", action="store_true", help="overwrite an existing file")

    p = sub.add_parser("validate", help="check a config file")
    p.add_argument("path", nargs="?")
    p.add_argument("--config", dest="config")

    p = sub.add_parser("run", help="run an experiment")
    p.add_argument("--config", help="experiment config (defaults if omitted)")
    p.add_argument("--seed", type=int)
    p.add_argument("--rounds", type=int)
    p.add_argument("--gate", choices=("on", "off"))
    p.add_argument("--out", help="output directory")
    p.add_argument("--scenario", choices=SCENARIOS)

    p = sub.add_parser("compare", help="savings of a gated run against its baseline")
    p.add_argument("baseline", help="baseline report.json")
    p.add_argument("gated", help="gated report.json")
    p.add_argument("--out", help="directory for savings.json (default: next to the gated report)")
    return ap


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.command == "init":
            path = args.path or args.config
            if not path:
                raise ConfigError([("path", "init needs a target path")])
            return cmd_init(path, args.force)
        if args.command == "validate":
            path = args.path or args.config
            if not path:
                raise ConfigError([("path", "validate needs a config path")])
            return cmd_validate(path)
        if args.command == "run":
            return cmd_run(args)
        return cmd_compare(args.baseline, args.gated, args.out)
    except ConfigError as exc:
        _emit_error("ConfigError", exc, exc.problems)
        return EXIT_CONFIG
    except (ParseError, SchemaError, NonContiguousClass) as exc:
        _emit_error(type(exc).__name__, exc, [("event_feed", str(exc))])
        return EXIT_CONFIG
    except (ExistsError, MismatchedRuns, FedSimError, OSError) as exc:
        _emit_error(type(exc).__name__, exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
