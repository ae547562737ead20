import numpy as np
import pytest

from app.domain.config_model import RunConfig
from app.domain.gmm import GmmParams, NwHyper
from app.domain.mhng import AgentState


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance experiments")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_cfg(tmp_path):
    """A run small enough for unit tests: D = 8 x 2 x 7 = 112."""
    return RunConfig(
        seed=3,
        stimuli_per_emotion=2,
        vision_dim=6,
        audio_dim=5,
        interoception_dim=8,
        ou_steps=40,
        K=4,
        latent_dim=3,
        hidden_dim=8,
        rounds=2,
        epochs=1,
        batch_size=32,
        seeds=[0, 1],
        out_dir=str(tmp_path / "run"),
    )


def frozen_gmm(mus, lam_scale=1.0, pi=None) -> GmmParams:
    mus = np.asarray(mus, dtype=float)
    k, p = mus.shape
    return GmmParams(mus, np.stack([lam_scale * np.eye(p)] * k), np.full(k, 1.0 / k) if pi is None else pi)


def frozen_agent(name, latents, signs, gmm: GmmParams) -> AgentState:
    """An agent without an MVAE: latents and GMM stay fixed unless learned."""
    return AgentState(
        name=name,
        gmm=gmm,
        latents=np.asarray(latents, dtype=float),
        signs=np.asarray(signs, dtype=int),
        hyper=NwHyper.default(gmm.latent_dim),
    )
