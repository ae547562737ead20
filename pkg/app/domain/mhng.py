"""
The Metropolis-Hastings naming game between two GMM+MVAE agents and the
iterative co-construction loop, with the three communication scenarios.
"""

# =============================
# domain/mhng.py
# =============================
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Mapping, NamedTuple, Optional, Sequence

import numpy as np

from app.domain.gmm import GmmParams, NwHyper, sample_prior_gmm, sign_posteriors, update_agent_gmm
from app.domain.mvae import DiagGaussian, MvaeParams, infer_latents, init_mvae, train_agent
from app.domain.stimuli import Modality

logger = logging.getLogger(__name__)


class Scenario(str, Enum):
    METROPOLIS_HASTINGS = "mhng"
    ALWAYS_REJECT = "no_com"  # r = 0: each agent learns alone
    ALWAYS_ACCEPT = "all_accept"  # r = 1

    @property
    def title(self) -> str:
        return {"mhng": "MHNG", "no_com": "No Com.", "all_accept": "All Acc."}[self.value]


@dataclass
class LearningSettings:
    """How an agent infers latents and updates its MVAE after each game."""

    epochs: int = 20
    batch_size: int = 64
    learning_rate: float = 1e-3
    momentum: float = 0.9
    prior_expert: bool = True
    unit_expert: bool = False


@dataclass(eq=False)
class AgentState:
    """
    Everything one agent owns: models, current latents and sign table.
    `features` are the agent's own (D, dim) observation matrices.
    """

    name: str
    gmm: GmmParams
    latents: np.ndarray
    signs: np.ndarray
    hyper: NwHyper
    mvae: Optional[MvaeParams] = None
    velocity: Optional[MvaeParams] = None
    features: Dict[Modality, np.ndarray] = field(default_factory=dict)
    posterior: Optional[DiagGaussian] = None
    elbo_trace: List[float] = field(default_factory=list)

    def __post_init__(self):
        self.latents = np.atleast_2d(np.asarray(self.latents, dtype=float))
        self.signs = np.asarray(self.signs, dtype=int).copy()
        if self.latents.shape[0] != self.signs.shape[0]:
            raise ValueError(f"agent {self.name}: {self.latents.shape[0]} latents but {self.signs.shape[0]} signs")
        if self.signs.size and (self.signs.min() < 0 or self.signs.max() >= self.gmm.K):
            raise ValueError(f"agent {self.name}: signs must lie in [0, {self.gmm.K})")

    @property
    def D(self) -> int:
        return self.signs.shape[0]

    @property
    def K(self) -> int:
        return self.gmm.K


class SignFlip(NamedTuple):
    round: int
    agent: str
    d: int
    old: int
    new: int


class ExchangeStats(NamedTuple):
    proposals: int
    accepted: int
    mean_r: float
    changed: int


@dataclass(eq=False)
class GameState:
    """Two agents, the round counter and one rng stream per agent plus the channel."""

    agent_a: AgentState
    agent_b: AgentState
    rng_a: np.random.Generator
    rng_b: np.random.Generator
    rng_channel: np.random.Generator
    round: int = 0
    initial_signs: Dict[str, np.ndarray] = field(default_factory=dict)
    flips: List[SignFlip] = field(default_factory=list)
    on_event: Optional[Callable[[dict], None]] = None

    def __post_init__(self):
        if self.agent_a.D != self.agent_b.D or self.agent_a.K != self.agent_b.K:
            raise ValueError("agents must share D and K")
        if not self.initial_signs:
            self.initial_signs = {a.name: a.signs.copy() for a in (self.agent_a, self.agent_b)}

    def emit(self, event: dict):
        if self.on_event is not None:
            self.on_event(event)


def propose_signs(speaker: AgentState, rng: np.random.Generator, indices: Optional[Sequence[int]] = None) -> np.ndarray:
    """
    Draws w_d ~ P(w | z_d, mu, Lambda) from the speaker for every index, in
    ascending order, by inverse CDF on one uniform per index.
    """
    idx = np.arange(speaker.D) if indices is None else np.asarray(indices, dtype=int)
    post = sign_posteriors(speaker.latents[idx], speaker.gmm)
    u = rng.random(idx.shape[0])
    draws = (np.cumsum(post, axis=1) < u[:, None]).sum(axis=1)
    return np.minimum(draws, speaker.K - 1)


def propose_sign(speaker: AgentState, d: int, rng: np.random.Generator) -> int:
    if not 0 <= d < speaker.D:
        raise IndexError(f"data point {d} out of range")
    return int(propose_signs(speaker, rng, [d])[0])


def _log_acceptance(listener_z: np.ndarray, listener_gmm: GmmParams, w_sp: np.ndarray, w_li: np.ndarray) -> np.ndarray:
    log_r = listener_gmm.log_likelihood_at(listener_z, w_sp) - listener_gmm.log_likelihood_at(listener_z, w_li)
    return np.minimum(log_r, 0.0)


def acceptance_ratio(listener_z, listener_gmm: GmmParams, w_sp: int, w_li: int) -> float:
    """
    r = min(1, N(z | mu_sp, Lambda_sp^-1) / N(z | mu_li, Lambda_li^-1)), in log space.
    """
    for w in (w_sp, w_li):
        if not 0 <= w < listener_gmm.K:
            raise ValueError(f"sign {w} outside [0, {listener_gmm.K})")
    if w_sp == w_li:
        return 1.0
    z = np.asarray(listener_z, dtype=float)[None, :]
    return float(np.exp(_log_acceptance(z, listener_gmm, np.array([w_sp]), np.array([w_li]))[0]))


def _apply(agent: AgentState, idx: np.ndarray, new: np.ndarray, round_idx: int, flips: Optional[List[SignFlip]]) -> int:
    old = agent.signs[idx]
    changed = np.nonzero(old != new)[0]
    if flips is not None:
        flips.extend(SignFlip(round_idx, agent.name, int(idx[i]), int(old[i]), int(new[i])) for i in changed)
    agent.signs[idx] = new
    return int(changed.size)


def exchange_signs(
    speaker: AgentState,
    listener: AgentState,
    scenario: Scenario,
    rng: np.random.Generator,
    indices: Optional[Sequence[int]] = None,
    round_idx: int = 0,
    flips: Optional[List[SignFlip]] = None,
) -> ExchangeStats:
    """
    One naming-game pass from speaker to listener over `indices` (all d by
    default). The listener's sign table is updated in place.

    Data points are independent given latents and GMMs, so the pass is drawn
    as one vector: proposal uniforms first, then acceptance uniforms.
    """
    scenario = Scenario(scenario)
    idx = np.arange(listener.D) if indices is None else np.asarray(indices, dtype=int)
    if idx.size and (idx.min() < 0 or idx.max() >= listener.D):
        raise IndexError("data point index out of range")
    if scenario is Scenario.ALWAYS_REJECT:
        return ExchangeStats(int(idx.size), 0, 0.0, 0)

    w_sp = propose_signs(speaker, rng, idx)
    w_li = listener.signs[idx]
    if scenario is Scenario.ALWAYS_ACCEPT:
        r = np.ones(idx.size)
        accept = np.ones(idx.size, dtype=bool)
    else:
        r = np.exp(_log_acceptance(listener.latents[idx], listener.gmm, w_sp, w_li))
        accept = rng.random(idx.size) <= r
    new = np.where(accept, w_sp, w_li)
    changed = _apply(listener, idx, new, round_idx, flips)
    return ExchangeStats(int(idx.size), int(accept.sum()), float(r.mean()) if r.size else 0.0, changed)


def mh_exchange(
    speaker: AgentState,
    listener: AgentState,
    d: int,
    scenario: Scenario,
    rng: np.random.Generator,
    flips: Optional[List[SignFlip]] = None,
) -> int:
    """Plays the game for a single data point; returns the listener's sign."""
    if not 0 <= d < listener.D:
        raise IndexError(f"data point {d} out of range")
    exchange_signs(speaker, listener, scenario, rng, [d], flips=flips)
    return int(listener.signs[d])


def self_gibbs(
    agent: AgentState, rng: np.random.Generator, round_idx: int = 0, flips: Optional[List[SignFlip]] = None
) -> int:
    """The agent redraws its own signs from its own posterior; returns the number changed."""
    idx = np.arange(agent.D)
    return _apply(agent, idx, propose_signs(agent, rng, idx), round_idx, flips)


def replay_audit(initial_signs: Mapping[str, np.ndarray], flips: Sequence[SignFlip]) -> Dict[str, np.ndarray]:
    """Rebuilds every agent's sign table from its initial table and the flip log."""
    tables = {name: np.asarray(s, dtype=int).copy() for name, s in initial_signs.items()}
    for f in flips:
        if tables[f.agent][f.d] != f.old:
            raise ValueError(f"audit log inconsistent at {f}")
        tables[f.agent][f.d] = f.new
    return tables


def resample_latents(agent: AgentState, rng: np.random.Generator, settings: LearningSettings):
    """z_d ~ q(z | o_d) fused with the current sign's component."""
    if agent.mvae is None:
        return
    gmm = agent.gmm if settings.prior_expert else None
    agent.posterior, agent.latents = infer_latents(
        agent.mvae, agent.features, rng, gmm, agent.signs, use_unit_expert=settings.unit_expert
    )


def learn(agent: AgentState, rng: np.random.Generator, settings: LearningSettings):
    """GMM Gibbs update given the current signs, then MVAE training against it."""
    agent.gmm = update_agent_gmm(agent.latents, agent.signs, agent.hyper, agent.K, rng, agent.gmm.pi)
    if agent.mvae is None or settings.epochs <= 0:
        return
    agent.mvae, agent.velocity, history = train_agent(
        agent.mvae,
        agent.velocity,
        agent.features,
        agent.signs,
        agent.gmm,
        settings.epochs,
        settings.batch_size,
        settings.learning_rate,
        settings.momentum,
        rng,
        settings.unit_expert,
    )
    agent.elbo_trace.append(history[-1])


def _communicate(state: GameState, speaker: AgentState, listener: AgentState, listener_rng, scenario: Scenario):
    if scenario is Scenario.ALWAYS_REJECT:
        changed = self_gibbs(listener, listener_rng, state.round, state.flips)
        state.emit({"round": state.round, "direction": f"self:{listener.name}", "changed": changed})
        return
    stats = exchange_signs(speaker, listener, scenario, state.rng_channel, round_idx=state.round, flips=state.flips)
    state.emit(
        {
            "round": state.round,
            "direction": f"{speaker.name}->{listener.name}",
            "proposals": stats.proposals,
            "accepted": stats.accepted,
            "acceptance_rate": stats.accepted / max(stats.proposals, 1),
            "mean_r": stats.mean_r,
            "changed": stats.changed,
        }
    )
    logger.debug("round %d %s->%s: accepted %d/%d", state.round, speaker.name, listener.name, stats.accepted, stats.proposals)


def run_round(state: GameState, scenario: Scenario, settings: Optional[LearningSettings] = None) -> GameState:
    """
    One iteration of the co-construction loop, in this order:
    both agents infer latents; A speaks to B; B learns; B speaks to A; A learns.
    Under AlwaysReject the two exchanges are replaced by each listener
    redrawing its own signs, so neither agent ever reads the other.
    """
    scenario = Scenario(scenario)
    settings = settings or LearningSettings()
    a, b = state.agent_a, state.agent_b
    state.round += 1

    resample_latents(a, state.rng_a, settings)
    resample_latents(b, state.rng_b, settings)

    _communicate(state, a, b, state.rng_b, scenario)
    learn(b, state.rng_b, settings)

    _communicate(state, b, a, state.rng_a, scenario)
    learn(a, state.rng_a, settings)
    return state


def init_agent(
    name: str,
    features: Mapping[Modality, np.ndarray],
    K: int,
    hyper: NwHyper,
    rng: np.random.Generator,
    hidden_dim: int = 64,
    init_scale: float = 0.1,
    settings: Optional[LearningSettings] = None,
) -> AgentState:
    """
    Uniform random signs, one prior draw per GMM component, scaled-Gaussian
    MVAE weights, then an initial latent inference pass.
    """
    settings = settings or LearningSettings()
    features = {Modality(m): np.asarray(x, dtype=float) for m, x in features.items()}
    if not features:
        raise ValueError(f"agent {name} has no modalities")
    n = next(iter(features.values())).shape[0]
    signs = rng.integers(0, K, size=n)
    gmm = sample_prior_gmm(hyper, K, rng)
    mvae = init_mvae({m: x.shape[1] for m, x in features.items()}, hyper.dim, hidden_dim, rng, init_scale)
    agent = AgentState(
        name=name,
        gmm=gmm,
        latents=np.zeros((n, hyper.dim)),
        signs=signs,
        hyper=hyper,
        mvae=mvae,
        velocity=mvae.zeros_like(),
        features=features,
    )
    resample_latents(agent, rng, settings)
    return agent


def new_game(
    features_a: Mapping[Modality, np.ndarray],
    features_b: Mapping[Modality, np.ndarray],
    K: int,
    hyper: NwHyper,
    seed: int,
    hidden_dim: int = 64,
    init_scale: float = 0.1,
    settings: Optional[LearningSettings] = None,
    on_event: Optional[Callable[[dict], None]] = None,
) -> GameState:
    """Initializes both agents from independent streams spawned off `seed`."""
    ss_a, ss_b, ss_channel = np.random.SeedSequence([seed, 0x6D686E67]).spawn(3)
    rng_a, rng_b = np.random.default_rng(ss_a), np.random.default_rng(ss_b)
    agent_a = init_agent("a", features_a, K, hyper, rng_a, hidden_dim, init_scale, settings)
    agent_b = init_agent("b", features_b, K, hyper, rng_b, hidden_dim, init_scale, settings)
    return GameState(agent_a, agent_b, rng_a, rng_b, np.random.default_rng(ss_channel), on_event=on_event)
