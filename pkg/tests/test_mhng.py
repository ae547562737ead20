import math

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from app.domain.gmm import NwHyper
from app.domain.mhng import (
    GameState,
    LearningSettings,
    Scenario,
    SignFlip,
    acceptance_ratio,
    exchange_signs,
    mh_exchange,
    new_game,
    propose_sign,
    propose_signs,
    replay_audit,
    resample_latents,
    run_round,
    self_gibbs,
)
from app.domain.stimuli import Modality

from conftest import frozen_agent, frozen_gmm

FROZEN = LearningSettings(epochs=0)


def _pair(n=6, seed=0):
    r = np.random.default_rng(seed)
    gmm_a = frozen_gmm([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]])
    gmm_b = frozen_gmm([[0.5, 0.0], [0.0, 0.5], [1.5, 1.5]])
    a = frozen_agent("a", r.standard_normal((n, 2)), r.integers(0, 3, n), gmm_a)
    b = frozen_agent("b", r.standard_normal((n, 2)), r.integers(0, 3, n), gmm_b)
    return a, b


def _game(a, b, seed=0, events=None):
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)]
    return GameState(a, b, *rngs, on_event=None if events is None else events.append)


def test_acceptance_ratio_examples():
    gmm = frozen_gmm([[0.0], [1.0]])
    assert acceptance_ratio([0.0], gmm, 1, 0) == pytest.approx(math.exp(-0.5), rel=1e-12)
    assert acceptance_ratio([0.0], gmm, 0, 1) == 1.0
    assert acceptance_ratio([0.0], gmm, 1, 1) == 1.0


def test_acceptance_ratio_rejects_unknown_sign():
    with pytest.raises(ValueError):
        acceptance_ratio([0.0], frozen_gmm([[0.0], [1.0]]), 2, 0)


def test_proposal_follows_dominant_component():
    gmm = frozen_gmm([[0.0, 0.0], [20.0, 0.0]])
    sp = frozen_agent("a", [[20.0, 0.0]] * 50, [0] * 50, gmm)
    assert np.all(propose_signs(sp, np.random.default_rng(0)) == 1)
    with pytest.raises(IndexError):
        propose_sign(sp, 50, np.random.default_rng(0))


def test_always_accept_copies_proposals():
    a, b = _pair(n=40)
    expected = propose_signs(a, np.random.default_rng(4))
    stats = exchange_signs(a, b, Scenario.ALWAYS_ACCEPT, np.random.default_rng(4))
    np.testing.assert_array_equal(b.signs, expected)
    assert stats.accepted == stats.proposals == 40
    assert stats.mean_r == 1.0


def test_always_reject_exchange_is_inert():
    a, b = _pair()
    before = b.signs.copy()
    rng = np.random.default_rng(9)
    stats = exchange_signs(a, b, Scenario.ALWAYS_REJECT, rng)
    np.testing.assert_array_equal(b.signs, before)
    assert stats == (6, 0, 0.0, 0)
    assert rng.random() == np.random.default_rng(9).random()


def test_same_sign_proposal_always_accepted():
    gmm = frozen_gmm([[0.0], [9.0]])
    sp = frozen_agent("a", [[0.0]], [0], frozen_gmm([[0.0], [50.0]], lam_scale=10.0))
    li = frozen_agent("b", [[9.0]], [0], gmm)
    for seed in range(20):
        assert mh_exchange(sp, li, 0, Scenario.METROPOLIS_HASTINGS, np.random.default_rng(seed)) == 0


def test_mh_chain_reaches_joint_target():
    """Batched chains: the listener's sign frequencies converge to pi * P(z_sp | w) * P(z_li | w)."""
    n = 20_000
    sp_gmm = frozen_gmm([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    li_gmm = frozen_gmm([[0.5, 0.0], [0.0, 0.5], [1.0, 1.0]])
    z_sp, z_li = np.array([0.3, 0.3]), np.array([0.2, 0.6])
    sp = frozen_agent("a", np.tile(z_sp, (n, 1)), np.zeros(n), sp_gmm)
    li = frozen_agent("b", np.tile(z_li, (n, 1)), np.zeros(n), li_gmm)
    rng = np.random.default_rng(2024)
    for _ in range(60):
        exchange_signs(sp, li, Scenario.METROPOLIS_HASTINGS, rng)

    target = np.array(
        [
            multivariate_normal(sp_gmm.mus[k], np.eye(2)).pdf(z_sp) * multivariate_normal(li_gmm.mus[k], np.eye(2)).pdf(z_li)
            for k in range(3)
        ]
    )
    target /= target.sum()
    empirical = np.bincount(li.signs, minlength=3) / n
    assert 0.5 * np.abs(empirical - target).sum() < 0.02


def test_exchange_index_bounds():
    a, b = _pair()
    with pytest.raises(IndexError):
        exchange_signs(a, b, Scenario.METROPOLIS_HASTINGS, np.random.default_rng(0), indices=[6])


def test_self_gibbs_logs_flips():
    a, _ = _pair(n=30)
    before = a.signs.copy()
    flips = []
    changed = self_gibbs(a, np.random.default_rng(1), round_idx=4, flips=flips)
    assert changed == len(flips) == int(np.sum(before != a.signs))
    assert all(f.round == 4 and f.agent == "a" for f in flips)


@pytest.mark.parametrize("scenario", list(Scenario))
def test_round_events_and_audit(scenario):
    a, b = _pair(n=25)
    events = []
    state = _game(a, b, seed=5, events=events)
    for _ in range(3):
        run_round(state, scenario, FROZEN)
    assert state.round == 3
    assert [e["round"] for e in events] == [1, 1, 2, 2, 3, 3]
    if scenario is Scenario.ALWAYS_REJECT:
        assert [e["direction"] for e in events[:2]] == ["self:b", "self:a"]
    else:
        assert [e["direction"] for e in events[:2]] == ["a->b", "b->a"]
        assert all(0.0 <= e["acceptance_rate"] <= 1.0 for e in events)
    tables = replay_audit(state.initial_signs, state.flips)
    np.testing.assert_array_equal(tables["a"], a.signs)
    np.testing.assert_array_equal(tables["b"], b.signs)


def test_replay_audit_detects_inconsistency():
    with pytest.raises(ValueError):
        replay_audit({"a": np.array([0, 1])}, [SignFlip(1, "a", 0, 2, 1)])


def test_always_reject_isolates_agents():
    runs = []
    for other_seed in (1, 2):
        a, _ = _pair(n=20, seed=0)
        _, b = _pair(n=20, seed=other_seed)
        state = _game(a, b, seed=11)
        for _ in range(3):
            run_round(state, Scenario.ALWAYS_REJECT, FROZEN)
        runs.append(state.agent_a)
    np.testing.assert_array_equal(runs[0].signs, runs[1].signs)
    np.testing.assert_array_equal(runs[0].gmm.mus, runs[1].gmm.mus)
    np.testing.assert_array_equal(runs[0].gmm.lams, runs[1].gmm.lams)


def test_accepting_couples_agents():
    runs = []
    for other_seed in (1, 2):
        a, _ = _pair(n=40, seed=0)
        _, b = _pair(n=40, seed=other_seed)
        state = _game(a, b, seed=11)
        run_round(state, Scenario.ALWAYS_ACCEPT, FROZEN)
        runs.append(state.agent_a.signs.copy())
    assert not np.array_equal(runs[0], runs[1])


def test_game_state_requires_matching_agents():
    a, _ = _pair(n=4)
    _, b = _pair(n=5)
    with pytest.raises(ValueError):
        _game(a, b)


def test_agent_rejects_out_of_range_signs():
    with pytest.raises(ValueError):
        frozen_agent("a", np.zeros((2, 2)), [0, 3], frozen_gmm([[0.0, 0.0], [1.0, 1.0]]))


def _features(seed, n=24):
    r = np.random.default_rng(seed)
    return {Modality.VISION: r.standard_normal((n, 4)), Modality.AUDIO: r.standard_normal((n, 3))}


def test_new_game_is_deterministic():
    hyper = NwHyper.default(2)
    g1 = new_game(_features(0), _features(1), 3, hyper, seed=7, hidden_dim=4)
    g2 = new_game(_features(0), _features(1), 3, hyper, seed=7, hidden_dim=4)
    for x, y in ((g1.agent_a, g2.agent_a), (g1.agent_b, g2.agent_b)):
        np.testing.assert_array_equal(x.signs, y.signs)
        np.testing.assert_array_equal(x.latents, y.latents)
    assert g1.agent_a.latents.shape == (24, 2)


def test_identical_agents_infer_identical_latents():
    hyper = NwHyper.default(2)
    game = new_game(_features(0), _features(0), 3, hyper, seed=1, hidden_dim=4)
    a, b = game.agent_a, game.agent_b
    b.mvae, b.gmm, b.signs = a.mvae.copy(), a.gmm, a.signs.copy()
    resample_latents(a, np.random.default_rng(3), LearningSettings())
    resample_latents(b, np.random.default_rng(3), LearningSettings())
    np.testing.assert_array_equal(a.latents, b.latents)


def test_full_round_trains_both_agents():
    hyper = NwHyper.default(2)
    events = []
    game = new_game(_features(0), _features(1), 3, hyper, seed=2, hidden_dim=4, on_event=events.append)
    run_round(game, Scenario.METROPOLIS_HASTINGS, LearningSettings(epochs=2, batch_size=8))
    assert len(game.agent_a.elbo_trace) == len(game.agent_b.elbo_trace) == 1
    assert np.all(np.isfinite(game.agent_a.latents))
    assert [e["direction"] for e in events] == ["a->b", "b->a"]


@pytest.mark.parametrize("scenario", [Scenario.METROPOLIS_HASTINGS, Scenario.ALWAYS_ACCEPT])
def test_exchange_depends_on_state_not_role(scenario):
    a, b = _pair(n=30, seed=5)
    a2 = frozen_agent("b", a.latents, a.signs.copy(), a.gmm)
    b2 = frozen_agent("a", b.latents, b.signs.copy(), b.gmm)
    forward = exchange_signs(a, b, scenario, np.random.default_rng(8))
    mirrored = exchange_signs(a2, b2, scenario, np.random.default_rng(8))
    assert forward == mirrored
    np.testing.assert_array_equal(b.signs, b2.signs)
