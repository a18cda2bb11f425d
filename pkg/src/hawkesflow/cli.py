"""``hawkesflow`` command line: fit, simulate, recovery, stats."""
from __future__ import annotations

import argparse
import hashlib
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import harness
from .config import RunConfig, load_config
from .errors import (CapExceeded, ConfigError, HawkesFlowError, InsufficientEvents,
                     NonStationaryModel)
from .ingestion import (aggressive_records, descriptive_stats, discover_inputs, load_sessions,
                        split_sessions, write_session_csv)
from .kernels import KernelForm

log = logging.getLogger("hawkesflow")

EXIT_OK = 0
EXIT_PARTIAL = 1  # some fits failed; the rest were written
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NO_DATA = 4
EXIT_MODEL = 5  # refused or runaway simulation


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML or JSON run configuration")
    common.add_argument("--seed", type=int, help="root seed (overrides the config)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("--kernel", choices=("diff", "sum"), help="kernel form (overrides the config)")
    common.add_argument("--out", type=Path, help="output directory (overrides the config)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="hawkesflow",
                                     description="Bivariate marked Hawkes models of aggressive order flow.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("fit", parents=[common], help="fit every (day, session, side) and write diagnostics")
    p.add_argument("inputs", nargs="*", type=Path, help="CSV files or directories (override the config)")
    sub.add_parser("simulate", parents=[common], help="write simulated sessions as CSV")
    sub.add_parser("recovery", parents=[common], help="simulate-then-fit recovery report")
    p = sub.add_parser("stats", parents=[common], help="descriptive statistics of input files")
    p.add_argument("inputs", nargs="*", type=Path)
    return parser


def _resolve(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.kernel:
        cfg = replace(cfg, kernel=KernelForm.parse(args.kernel))
    if getattr(args, "inputs", None):
        cfg = replace(cfg, inputs=tuple(args.inputs), simulation=None)
    if args.out is not None:
        cfg = replace(cfg, out=args.out)
    if cfg.out is None:
        cfg = replace(cfg, out=Path("hawkesflow-out"))
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    return cfg


def _manifest(cfg: RunConfig, command: str, extra: dict) -> None:
    harness.write_json(cfg.out / "manifest.json", "manifest",
                       {"command": command, "config": cfg.to_dict(), **extra})


def _digests(paths) -> list:
    return [{"file": p.name, "sha256": hashlib.sha256(p.read_bytes()).hexdigest()} for p in paths]


def _load_inputs(cfg: RunConfig):
    paths = discover_inputs(cfg.inputs)
    if not paths:
        raise InsufficientEvents("no input CSV files found")
    sessions = load_sessions(paths, cfg.sessions)
    if not sessions:
        raise InsufficientEvents("input files hold no aggressive orders inside any session")
    return paths, sessions


def cmd_fit(cfg: RunConfig, jobs: int = 1) -> int:
    extra = {}
    if cfg.inputs:
        paths, sessions = _load_inputs(cfg)
        extra["inputs"] = _digests(paths)
    elif cfg.simulation is not None:
        sessions = harness.simulate_campaign(cfg.simulation, cfg.sessions, cfg.simulation.days,
                                             cfg.seed, cfg.allow_nonstationary)
    else:
        raise ConfigError("fit needs input paths or a simulation spec")
    outcomes = harness.fit_sessions(sessions, cfg, jobs)
    summary = harness.write_fit_artifacts(outcomes, cfg, cfg.out)
    _manifest(cfg, "fit", {**summary, **extra})
    for f in summary["failures"]:
        log.error("%s: %s", f["session"], f["error"])
    log.info("%d fits written to %s", summary["n_fits"], cfg.out)
    return EXIT_PARTIAL if summary["failures"] else EXIT_OK


def cmd_simulate(cfg: RunConfig, jobs: int = 1) -> int:
    if cfg.simulation is None:
        raise ConfigError("simulate needs a simulation spec")
    sessions = harness.simulate_campaign(cfg.simulation, cfg.sessions, cfg.simulation.days,
                                         cfg.seed, cfg.allow_nonstationary)
    files = []
    for (date, name), sess in sorted(sessions.items()):
        path = cfg.out / "data" / f"{date}_{name}.csv"
        write_session_csv(path, date, sess.window, sess.events)
        files.append(path.name)
    _manifest(cfg, "simulate", {"files": files})
    log.info("%d session files written to %s", len(files), cfg.out / "data")
    return EXIT_OK


def cmd_recovery(cfg: RunConfig, jobs: int = 1) -> int:
    if cfg.simulation is None:
        raise ConfigError("recovery needs a simulation spec")
    trials, summary = harness.run_recovery(cfg, jobs)
    harness.write_csv(cfg.out / "recovery_params.csv",
                      ["trial_seed", "parameter", "truth", "estimate", "relative_error"],
                      harness.recovery_rows(trials))
    harness.write_json(cfg.out / "recovery.json", "recovery", summary)
    _manifest(cfg, "recovery", {"files": ["recovery.json", "recovery_params.csv"]})
    log.info("recovery: min per-parameter rate %.2f, KS pass rate under truth %.2f",
             summary["min_per_parameter_within_rate"], summary["ks_pass_rate_truth"])
    return EXIT_OK


def cmd_stats(cfg: RunConfig, jobs: int = 1) -> int:
    paths = discover_inputs(cfg.inputs)
    if not paths:
        raise InsufficientEvents("no input CSV files found")
    records = aggressive_records(paths)
    sessions = split_sessions(records, cfg.sessions)
    if not sessions:
        raise InsufficientEvents("input files hold no aggressive orders inside any session")
    stats = descriptive_stats(sessions, records)
    harness.write_json(cfg.out / "stats.json", "stats", stats.to_dict())
    harness.write_csv(cfg.out / "per_minute.csv", ["session", "minute", "buys", "sells"],
                      stats.per_minute)
    _manifest(cfg, "stats", {"files": ["stats.json", "per_minute.csv"], "inputs": _digests(paths)})
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "recovery": cmd_recovery, "stats": cmd_stats}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = _resolve(args)
        return COMMANDS[args.command](cfg, args.jobs)
    except ConfigError as exc:
        log.error("config: %s", exc)
        return EXIT_CONFIG
    except InsufficientEvents as exc:
        log.error("insufficient data: %s", exc)
        return EXIT_NO_DATA
    except (NonStationaryModel, CapExceeded) as exc:
        log.error("%s", exc)
        return EXIT_MODEL
    except (OSError, HawkesFlowError) as exc:
        log.error("%s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
