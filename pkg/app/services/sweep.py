# =============================
# services/sweep.py
# =============================
"""
Condition x scenario x seed sweeps on a process pool, and the mean +- std
aggregation of finished run directories into one summary table.
"""

import glob
import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from multiprocessing import Pool
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from app.domain.config_model import RunConfig
from app.domain.errors import MissingArtifactError
from app.domain.metrics import RecallHeatmap, recall_heatmap
from app.infrastructure.checkpoint import load_checkpoint
from app.infrastructure.plots import save_heatmap_svg
from app.services.experiment import METRIC_COLUMNS, REQUIRED_ARTIFACTS, run_experiment

logger = logging.getLogger(__name__)

METRICS = ("ari_a", "ari_b", "kappa", "dbs_a", "dbs_b", "topsim")
LOWER_IS_BETTER = {"dbs_a", "dbs_b"}
GROUP_KEYS = ["condition", "scenario"]


@dataclass
class SweepSummary:
    """
    One row per (condition, scenario): n, seeds, and <metric>_mean /
    <metric>_std for every metric. `ranks` holds "best"/"second" flags per
    condition and metric across scenarios.
    """

    table: pd.DataFrame
    ranks: Dict[tuple, Dict[str, str]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        groups = []
        for _, row in self.table.iterrows():
            key = (row["condition"], row["scenario"])
            entry = {
                "condition": row["condition"],
                "scenario": row["scenario"],
                "n": int(row["n"]),
                "single_run": bool(row["n"] == 1),
                "seeds": [int(s) for s in row["seeds"]],
            }
            for m in METRICS:
                entry[m] = {
                    "mean": _json_float(row[f"{m}_mean"]),
                    "std": _json_float(row[f"{m}_std"]),
                    "rank": self.ranks.get(key, {}).get(m),
                }
            groups.append(entry)
        return {"metrics": list(METRICS), "lower_is_better": sorted(LOWER_IS_BETTER), "groups": groups}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _json_float(x) -> Optional[float]:
    x = float(x)
    return None if math.isnan(x) else x


def aggregate(runs: pd.DataFrame) -> SweepSummary:
    """
    Mean and sample std (n - 1) of every metric per condition and scenario.

    Args:
        runs: One row per run with seed, condition, scenario and every metric.

    Returns:
        SweepSummary: Single-run groups report std 0.
    """
    missing = [c for c in ("seed", *GROUP_KEYS, *METRICS) if c not in runs.columns]
    if missing:
        raise ValueError(f"missing metric columns: {missing}")
    if runs.empty:
        raise ValueError("nothing to aggregate")
    runs = runs.astype({m: float for m in METRICS}).astype({"seed": int})
    runs = runs.sort_values([*GROUP_KEYS, "seed"], kind="mergesort").reset_index(drop=True)
    grouped = runs.groupby(GROUP_KEYS, sort=True)
    table = grouped[list(METRICS)].agg(["mean", "std"])
    table.columns = [f"{m}_{stat}" for m, stat in table.columns]
    table = table.reset_index()
    table.insert(2, "n", grouped.size().to_numpy())
    table.insert(3, "seeds", pd.Series([list(g["seed"]) for _, g in grouped], index=table.index, dtype=object))
    single = table["n"] == 1
    for m in METRICS:
        table.loc[single, f"{m}_std"] = 0.0
    return SweepSummary(table=table, ranks=_rank(table))


def _rank(table: pd.DataFrame) -> Dict[tuple, Dict[str, str]]:
    """Best and second-best scenario per condition and metric."""
    ranks: Dict[tuple, Dict[str, str]] = {}
    for condition, block in table.groupby("condition", sort=True):
        for m in METRICS:
            col = block[f"{m}_mean"].dropna()
            if col.empty:
                continue
            order = col.sort_values(ascending=m in LOWER_IS_BETTER, kind="mergesort").index
            for flag, idx in zip(("best", "second"), order):
                ranks.setdefault((condition, block.loc[idx, "scenario"]), {})[m] = flag
    return ranks


def sweep_configs(cfg: RunConfig, out_root: str) -> List[RunConfig]:
    out = []
    for condition in cfg.conditions:
        base = cfg.with_condition(condition)
        for scenario in cfg.scenarios:
            for seed in cfg.seeds:
                run_dir = os.path.join(out_root, condition, scenario, f"seed{seed:03d}")
                out.append(replace(base, scenario=scenario, seed=seed, out_dir=run_dir))
    return out


def _run_one(cfg: RunConfig) -> str:
    run_experiment(cfg, cfg.out_dir)
    return cfg.out_dir


def run_sweep(cfg: RunConfig, out_root: Optional[str] = None, workers: Optional[int] = None) -> SweepSummary:
    """Runs every configured (condition, scenario, seed), then reports on them."""
    cfg.check()
    out_root = out_root or cfg.out_dir
    workers = workers or cfg.workers
    configs = sweep_configs(cfg, out_root)
    logger.info("Sweep: %d runs on %d worker(s) into %s", len(configs), workers, out_root)
    if workers > 1:
        with Pool(workers) as p:
            run_dirs = p.map(_run_one, configs)
    else:
        run_dirs = [_run_one(c) for c in configs]
    return report(run_dirs, out_root)


def find_run_dirs(root: str) -> List[str]:
    return sorted(os.path.dirname(p) for p in glob.glob(os.path.join(root, "**", "config.json"), recursive=True))


def _check_artifacts(run_dir: str):
    missing = [name for name in REQUIRED_ARTIFACTS if not os.path.exists(os.path.join(run_dir, name))]
    if missing:
        raise MissingArtifactError(f"{run_dir} is missing {', '.join(missing)}")


def _final_row(run_dir: str) -> pd.Series:
    frame = pd.read_csv(os.path.join(run_dir, "metrics.csv"))
    missing = [c for c in METRIC_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"{run_dir}/metrics.csv: missing metric columns {missing}")
    if frame.empty:
        raise ValueError(f"{run_dir}/metrics.csv has no rows")
    return frame.loc[frame["round"].idxmax()]


def report(run_dirs: Sequence[str], out_root: str) -> SweepSummary:
    """
    Aggregates finished run directories and writes summary.json, summary.csv
    and the mean recall heatmap of every (condition, scenario, agent).
    Fails on the first run directory lacking a required artifact.
    """
    if not run_dirs:
        raise MissingArtifactError(f"no run directories under {out_root}")
    rows = []
    heatmaps: Dict[tuple, List[RecallHeatmap]] = {}
    for run_dir in run_dirs:
        _check_artifacts(run_dir)
        row = _final_row(run_dir)
        rows.append(row)
        ckpt = load_checkpoint(os.path.join(run_dir, "checkpoint.json"))
        for name, agent in ckpt.agents.items():
            key = (row["condition"], row["scenario"], name)
            heatmaps.setdefault(key, []).append(recall_heatmap(agent.signs, ckpt.labels, K=agent.K))

    summary = aggregate(pd.DataFrame(rows).reset_index(drop=True))
    os.makedirs(out_root, exist_ok=True)
    with open(os.path.join(out_root, "summary.json"), "w", encoding="utf-8") as f:
        f.write(summary.to_json())
    summary.table.drop(columns=["seeds"]).to_csv(
        os.path.join(out_root, "summary.csv"), index=False, float_format="%.6g", lineterminator="\n"
    )
    for (condition, scenario, agent), maps in sorted(heatmaps.items()):
        mean = RecallHeatmap(np.mean([h.matrix for h in maps], axis=0), np.mean([h.other for h in maps], axis=0))
        save_heatmap_svg(
            os.path.join(out_root, f"mean_heatmap_{condition}_{scenario}_{agent}.svg"),
            mean,
            f"{condition} / {scenario}: agent {agent} (n={len(maps)})",
        )
    logger.info("Summary of %d runs written to %s", len(rows), out_root)
    return summary
