# =============================
# infrastructure/checkpoint.py
# =============================
"""
Versioned JSON checkpoints of a game state. Arrays are stored as
{"shape": [...], "data": [...]} with row-major values; Python's float repr
makes the round trip exact.
"""

import json
import logging
import os
from typing import Dict, NamedTuple

import numpy as np

from app.domain.config_model import RunConfig
from app.domain.errors import MissingArtifactError, SimulationError
from app.domain.gmm import GmmParams, NwHyper
from app.domain.mhng import AgentState, GameState
from app.domain.mvae import MlpParams, MvaeParams
from app.domain.stimuli import Modality

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class Checkpoint(NamedTuple):
    version: int
    config: RunConfig
    round: int
    labels: np.ndarray
    agents: Dict[str, AgentState]
    initial_signs: Dict[str, np.ndarray]


def _arr(a) -> dict:
    a = np.asarray(a)
    return {"shape": list(a.shape), "data": a.ravel().tolist()}


def _unarr(d: dict, dtype=float) -> np.ndarray:
    return np.asarray(d["data"], dtype=dtype).reshape(d["shape"])


def _mvae_to_dict(p: MvaeParams) -> dict:
    return {"latent_dim": p.latent_dim, "tensors": {name: _arr(t) for name, t in p.named_tensors()}}


def _mvae_from_dict(d: dict) -> MvaeParams:
    t = d["tensors"]
    mods = sorted({name.split(".")[0] for name in t}, key=lambda m: list(Modality).index(Modality(m)))

    def net(m, part):
        return MlpParams(*(_unarr(t[f"{m}.{part}.{w}"]) for w in ("w1", "b1", "w2", "b2")))

    return MvaeParams(
        encoders={Modality(m): net(m, "enc") for m in mods},
        decoders={Modality(m): net(m, "dec") for m in mods},
        latent_dim=int(d["latent_dim"]),
    )


def _agent_to_dict(a: AgentState) -> dict:
    return {
        "name": a.name,
        "gmm": {"mus": _arr(a.gmm.mus), "lams": _arr(a.gmm.lams), "pi": _arr(a.gmm.pi)},
        "hyper": {"m0": _arr(a.hyper.m0), "kappa0": a.hyper.kappa0, "nu0": a.hyper.nu0, "W0": _arr(a.hyper.W0)},
        "latents": _arr(a.latents),
        "signs": _arr(a.signs),
        "mvae": _mvae_to_dict(a.mvae) if a.mvae is not None else None,
        "velocity": _mvae_to_dict(a.velocity) if a.velocity is not None else None,
        "elbo_trace": list(a.elbo_trace),
    }


def _agent_from_dict(d: dict) -> AgentState:
    g, h = d["gmm"], d["hyper"]
    return AgentState(
        name=d["name"],
        gmm=GmmParams(_unarr(g["mus"]), _unarr(g["lams"]), _unarr(g["pi"])),
        latents=_unarr(d["latents"]),
        signs=_unarr(d["signs"], int),
        hyper=NwHyper(_unarr(h["m0"]), h["kappa0"], h["nu0"], _unarr(h["W0"])),
        mvae=_mvae_from_dict(d["mvae"]) if d.get("mvae") else None,
        velocity=_mvae_from_dict(d["velocity"]) if d.get("velocity") else None,
        elbo_trace=list(d.get("elbo_trace", [])),
    )


def save_checkpoint(path: str, state: GameState, cfg: RunConfig, labels) -> str:
    """Writes the state after `state.round` rounds; returns the path."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "config": json.loads(cfg.to_json()),
        "round": state.round,
        "labels": _arr(np.asarray(labels, dtype=int)),
        "initial_signs": {k: _arr(v) for k, v in state.initial_signs.items()},
        "agents": [_agent_to_dict(state.agent_a), _agent_to_dict(state.agent_b)],
    }
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(payload, f)
    os.replace(tmp, path)
    logger.info("Checkpoint written: %s", path)
    return path


def load_checkpoint(path: str) -> Checkpoint:
    if not os.path.exists(path):
        raise MissingArtifactError(f"checkpoint not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    version = payload.get("version")
    if version != CHECKPOINT_VERSION:
        raise SimulationError(f"{path}: unsupported checkpoint version {version}")
    agents = [_agent_from_dict(a) for a in payload["agents"]]
    return Checkpoint(
        version=version,
        config=RunConfig.from_dict(payload["config"]),
        round=int(payload["round"]),
        labels=_unarr(payload["labels"], int),
        agents={a.name: a for a in agents},
        initial_signs={k: _unarr(v, int) for k, v in payload["initial_signs"].items()},
    )
