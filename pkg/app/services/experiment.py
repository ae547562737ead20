# =============================
# services/experiment.py
# =============================
"""
This module runs one experiment end to end: dataset, agent initialization,
the co-construction loop, per-round evaluation and every output file of a
run directory.
"""

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
import pandas as pd

from app.domain.config_model import RunConfig
from app.domain.core_affect import Emotion, export_trajectories_csv, generate_interoception
from app.domain.metrics import MetricsReport, evaluate, pca_project
from app.domain.mhng import GameState, Scenario, new_game, run_round
from app.domain.stimuli import (
    AGENT_NAMES,
    StimulusDataset,
    build_dataset,
    export_dataset,
    load_dataset,
    standardize,
    stimulus_labels,
)
from app.infrastructure.checkpoint import load_checkpoint, save_checkpoint
from app.infrastructure.plots import save_affect_svg, save_heatmap_svg, save_pca_svg

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ("seed", "condition", "scenario", "round", "ari_a", "ari_b", "kappa", "dbs_a", "dbs_b", "topsim")
REQUIRED_ARTIFACTS = ("config.json", "metrics.csv", "checkpoint.json", "events.jsonl")
CSV_FLOAT_FORMAT = "%.17g"


@dataclass
class ExperimentResult:
    out_dir: str
    config: RunConfig
    reports: List[MetricsReport] = field(default_factory=list)
    state: Optional[GameState] = None
    completed: bool = True

    @property
    def final(self) -> MetricsReport:
        return self.reports[-1]


def make_dataset(cfg: RunConfig) -> StimulusDataset:
    """Synthetic dataset, or ingested features when `feature_dir` is set."""
    specs = cfg.modality_specs()
    profiles = cfg.profiles()
    common = dict(steps=cfg.ou_steps, dt=cfg.ou_dt, clip=cfg.ou_clip, initial_profile=cfg.initial_profile())
    if cfg.feature_dir:
        dataset = load_dataset(cfg.feature_dir, specs, profiles, seed=cfg.seed, **common)
    else:
        labels = stimulus_labels(cfg.stimuli_per_emotion)
        dataset = build_dataset(labels, specs, profiles, seed=cfg.seed, separation=cfg.separation, **common)
    return standardize(dataset) if cfg.standardize else dataset


def init_game(cfg: RunConfig, dataset: StimulusDataset, on_event: Optional[Callable[[dict], None]] = None) -> GameState:
    return new_game(
        dataset.features(0),
        dataset.features(1),
        cfg.K,
        cfg.hyper(),
        cfg.seed,
        hidden_dim=cfg.hidden_dim,
        init_scale=cfg.init_scale,
        settings=cfg.learning(),
        on_event=on_event,
    )


def metrics_frame(cfg: RunConfig, reports: List[MetricsReport]) -> pd.DataFrame:
    rows = [{"seed": cfg.seed, "condition": cfg.condition, "scenario": cfg.scenario, **r.row()} for r in reports]
    return pd.DataFrame(rows, columns=list(METRIC_COLUMNS))


def write_metrics_csv(path: str, cfg: RunConfig, reports: List[MetricsReport]) -> str:
    metrics_frame(cfg, reports).to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    return path


def write_plots(out_dir: str, state: GameState, report: MetricsReport, labels) -> List[str]:
    """Both recall heatmaps and the PCA scatter of both agents' latents."""
    written = []
    for name, heatmap in (("a", report.recall_a), ("b", report.recall_b)):
        written.append(save_heatmap_svg(
            os.path.join(out_dir, f"heatmap_{name}.svg"), heatmap, f"agent {name}, round {report.round}"
        ))
    projections = {a.name: pca_project(a.latents) for a in (state.agent_a, state.agent_b)}
    written.append(save_pca_svg(os.path.join(out_dir, "pca.svg"), projections, labels, f"round {report.round}"))
    return written


def run_experiment(
    cfg: RunConfig,
    out_dir: Optional[str] = None,
    progress: Optional[Callable[[int, int], None]] = None,
    on_report: Optional[Callable[[MetricsReport, GameState], None]] = None,
    should_stop: Optional[Callable[[], bool]] = None,
) -> ExperimentResult:
    """
    Runs `cfg.rounds` rounds of `cfg.scenario` and writes the run directory.

    Args:
        cfg: Validated run configuration.
        out_dir: Output folder (defaults to cfg.out_dir).
        progress: Called with (round, total) after every round.
        on_report: Called with each round's metrics and the live state.
        should_stop: Polled before every round; stopping early still writes
            every artifact for the rounds completed.

    Returns:
        ExperimentResult: Per-round reports (round 0 is the initial state).
    """
    cfg.check()
    out_dir = out_dir or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as f:
        f.write(cfg.to_json())

    scenario = Scenario(cfg.scenario)
    dataset = make_dataset(cfg)
    labels = dataset.labels
    logger.info(
        "Run seed=%d condition=%s scenario=%s: D=%d, modalities a=%s b=%s",
        cfg.seed, cfg.condition, scenario.value, len(dataset),
        [m.value for m in dataset.modalities(0)], [m.value for m in dataset.modalities(1)],
    )

    result = ExperimentResult(out_dir=out_dir, config=cfg)
    with open(os.path.join(out_dir, "events.jsonl"), "w", encoding="utf-8") as events:

        def on_event(event: dict):
            event = {"seed": cfg.seed, "condition": cfg.condition, "scenario": scenario.value, **event}
            events.write(json.dumps(event, sort_keys=True) + "\n")

        state = init_game(cfg, dataset, on_event)
        result.state = state
        settings = cfg.learning()

        def record(report: MetricsReport):
            result.reports.append(report)
            if on_report is not None:
                on_report(report, state)

        record(evaluate(state, labels, 0))
        for t in range(1, cfg.rounds + 1):
            if should_stop is not None and should_stop():
                result.completed = False
                logger.info("Stopped after %d of %d rounds", t - 1, cfg.rounds)
                break
            run_round(state, scenario, settings)
            report = evaluate(state, labels)
            record(report)
            logger.info(
                "round %d/%d: ARI a=%.3f b=%.3f kappa=%.3f", t, cfg.rounds, report.ari_a, report.ari_b, report.kappa
            )
            if progress is not None:
                progress(t, cfg.rounds)

    write_metrics_csv(os.path.join(out_dir, "metrics.csv"), cfg, result.reports)
    save_checkpoint(os.path.join(out_dir, "checkpoint.json"), state, cfg, labels)
    write_plots(out_dir, state, result.final, labels)
    return result


def generate_data(cfg: RunConfig, out_dir: str) -> StimulusDataset:
    """Writes the (unstandardized) dataset and its trajectories to `out_dir`."""
    cfg.check()
    dataset = build_dataset(
        stimulus_labels(cfg.stimuli_per_emotion),
        cfg.modality_specs(),
        cfg.profiles(),
        seed=cfg.seed,
        separation=cfg.separation,
        steps=cfg.ou_steps,
        dt=cfg.ou_dt,
        clip=cfg.ou_clip,
        initial_profile=cfg.initial_profile(),
    )
    export_dataset(dataset, out_dir)
    if dataset.trajectories is not None:
        for agent, name in enumerate(AGENT_NAMES):
            trajs = dataset.trajectories[agent]
            if trajs:
                export_trajectories_csv(os.path.join(out_dir, f"{name}_trajectories.csv"), trajs, dataset.source_ids)
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as f:
        f.write(cfg.to_json())
    logger.info("Generated %d data points per agent in %s", len(dataset), out_dir)
    return dataset


def plot_checkpoint(checkpoint_path: str, out_dir: Optional[str] = None) -> List[str]:
    """Re-renders heatmaps and the PCA scatter from a saved checkpoint."""
    ckpt = load_checkpoint(checkpoint_path)
    out_dir = out_dir or os.path.dirname(os.path.abspath(checkpoint_path))
    a, b = ckpt.agents["a"], ckpt.agents["b"]
    state = GameState(a, b, np.random.default_rng(0), np.random.default_rng(0), np.random.default_rng(0), round=ckpt.round)
    return write_plots(out_dir, state, evaluate(state, ckpt.labels), ckpt.labels)


def plot_affect(cfg: RunConfig, emotion, out_path: str, agent: str = "b") -> str:
    """Seven replica trajectories toward `emotion` under one agent's profile."""
    target = Emotion.parse(emotion)
    profile = cfg.profiles()[AGENT_NAMES.index(agent)]
    trajs = generate_interoception(
        [target], profile, cfg.ou_steps, cfg.ou_dt, np.random.default_rng(cfg.seed), cfg.ou_clip, cfg.initial_profile()
    )
    return save_affect_svg(out_path, trajs, profile, target)
