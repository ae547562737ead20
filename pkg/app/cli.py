# =============================
# app/cli.py
# =============================
"""
Command-line entry points: gen-data, run, sweep, report, plot and gui.

Exit codes: 0 on success, 2 for usage and configuration errors, 1 for any
other simulation failure.
"""

import argparse
import logging
import os
import sys
from dataclasses import replace
from typing import List, Optional

from app.domain.config_model import CONDITION_PRESETS, RunConfig
from app.domain.core_affect import Emotion
from app.domain.errors import ConfigError, SimulationError
from app.domain.mhng import Scenario

logger = logging.getLogger("app.cli")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration (defaults built in)")
    common.add_argument("--seed", type=int, help="override the run seed")
    common.add_argument("--out", help="output folder")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    p = argparse.ArgumentParser(prog="emotion-cocon", description="Inter-agent emotion co-construction simulator")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-data", parents=[common], help="write the synthetic dataset as CSV")

    run = sub.add_parser("run", parents=[common], help="run a single experiment")
    run.add_argument("--scenario", choices=[s.value for s in Scenario])
    run.add_argument("--condition", choices=list(CONDITION_PRESETS))
    run.add_argument("--rounds", type=int)

    sweep = sub.add_parser("sweep", parents=[common], help="conditions x scenarios x seeds, then summarize")
    sweep.add_argument("--seeds", type=int, nargs="+", help="seeds to run (default from config)")
    sweep.add_argument("--conditions", nargs="+", choices=list(CONDITION_PRESETS))
    sweep.add_argument("--scenarios", nargs="+", choices=[s.value for s in Scenario])
    sweep.add_argument("--workers", type=int)

    report = sub.add_parser("report", parents=[common], help="aggregate existing run directories")
    report.add_argument("root", help="folder holding run directories")

    plot = sub.add_parser("plot", parents=[common], help="SVG plots from a checkpoint or of affect trajectories")
    src = plot.add_mutually_exclusive_group(required=True)
    src.add_argument("--checkpoint", help="checkpoint.json of a run")
    src.add_argument("--affect", help="target emotion (name or 0-7) of the trajectory plot")
    plot.add_argument("--agent", choices=["a", "b"], default="b", help="profile used by --affect")

    sub.add_parser("gui", parents=[common], help="desktop run monitor")
    return p


def configure_logging(verbose: bool):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        datefmt="%H:%M:%S",
    )


def load_config(args) -> RunConfig:
    cfg = RunConfig.from_toml(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out:
        cfg = replace(cfg, out_dir=args.out)
    return cfg


def _cmd_gen_data(cfg: RunConfig, args) -> int:
    from app.services.experiment import generate_data

    dataset = generate_data(cfg, args.out or "data")
    print(f"{len(dataset)} data points per agent written to {args.out or 'data'}")
    return EXIT_OK


def _cmd_run(cfg: RunConfig, args) -> int:
    from app.services.experiment import run_experiment

    if args.condition:
        cfg = cfg.with_condition(args.condition)
    if args.scenario:
        cfg = replace(cfg, scenario=args.scenario)
    if args.rounds is not None:
        cfg = replace(cfg, rounds=args.rounds)
    result = run_experiment(cfg.check(), cfg.out_dir)
    f = result.final
    print(f"round {f.round}: ARI a={f.ari_a:.3f} b={f.ari_b:.3f} kappa={f.kappa:.3f} topsim={f.topsim:.3f}")
    return EXIT_OK


def _cmd_sweep(cfg: RunConfig, args) -> int:
    from app.services.sweep import run_sweep

    overrides = {k: getattr(args, k) for k in ("seeds", "conditions", "scenarios", "workers") if getattr(args, k)}
    cfg = replace(cfg, **overrides).check()
    summary = run_sweep(cfg, cfg.out_dir)
    print(summary.table.drop(columns=["seeds"]).to_string(index=False))
    return EXIT_OK


def _cmd_report(cfg: RunConfig, args) -> int:
    from app.services.sweep import find_run_dirs, report

    summary = report(find_run_dirs(args.root), args.out or args.root)
    print(summary.table.drop(columns=["seeds"]).to_string(index=False))
    return EXIT_OK


def _cmd_plot(cfg: RunConfig, args) -> int:
    from app.services.experiment import plot_affect, plot_checkpoint

    if args.checkpoint:
        for path in plot_checkpoint(args.checkpoint, args.out):
            print(path)
        return EXIT_OK
    try:
        target = Emotion.parse(args.affect)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    out = args.out or "."
    print(plot_affect(cfg.check(), target, os.path.join(out, f"affect_{target.name.lower()}_{args.agent}.svg"), args.agent))
    return EXIT_OK


def _cmd_gui(cfg: RunConfig, args) -> int:
    from PyQt5.QtWidgets import QApplication

    from app.ui.main_window import MainWindow

    app = QApplication(sys.argv[:1])
    app.setApplicationName("Emotion Co-construction Simulator")
    app.setOrganizationName("emotion-cocon")
    win = MainWindow()
    if args.config or args.seed is not None or args.out:
        win._apply_config(cfg)
    win.show()
    return app.exec_()


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "report": _cmd_report,
    "plot": _cmd_plot,
    "gui": _cmd_gui,
}


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    configure_logging(args.verbose)
    try:
        cfg = load_config(args)
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (SimulationError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE
