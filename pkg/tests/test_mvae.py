import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from app.domain.core_affect import Emotion
from app.domain.errors import NumericalError
from app.domain.gmm import GmmComponent
from app.domain.mvae import (
    DiagGaussian,
    MlpParams,
    component_expert,
    decode_modality,
    elbo,
    elbo_batch,
    encode_modality,
    infer_latents,
    init_mvae,
    kl_divergence,
    poe_fuse,
    sample_latent,
    train_agent,
    train_step,
)
from app.domain.stimuli import Modality, MultimodalObservation

from conftest import frozen_gmm

DIMS = {Modality.VISION: 3, Modality.AUDIO: 3}


def test_poe_two_experts_exact():
    fused = poe_fuse([DiagGaussian(np.array([0.0]), np.array([1.0])), DiagGaussian(np.array([2.0]), np.array([1.0]))])
    assert abs(fused.mean[0] - 1.0) < 1e-12
    assert abs(fused.var[0] - 0.5) < 1e-12


def test_poe_single_expert_identity():
    e = DiagGaussian(np.array([0.3, -2.0]), np.array([0.7, 4.0]))
    fused = poe_fuse([e])
    np.testing.assert_allclose(fused.mean, e.mean, rtol=1e-15)
    np.testing.assert_allclose(fused.var, e.var, rtol=1e-15)


def test_poe_near_degenerate_expert_dominates():
    sharp = DiagGaussian(np.array([5.0]), np.array([1e-6]))
    broad = DiagGaussian(np.array([-3.0]), np.array([1e6]))
    assert poe_fuse([sharp, broad]).mean[0] == pytest.approx(5.0, abs=1e-9)


def test_poe_empty_rejected():
    with pytest.raises(ValueError):
        poe_fuse([])


_experts = st.lists(
    st.tuples(st.floats(-10, 10), st.floats(1e-3, 1e3)),
    min_size=1,
    max_size=6,
)


@given(_experts, st.randoms(use_true_random=False))
@settings(max_examples=60, deadline=None)
def test_poe_order_invariant(experts, rnd):
    gs = [DiagGaussian(np.array([m]), np.array([v])) for m, v in experts]
    shuffled = list(gs)
    rnd.shuffle(shuffled)
    a, b = poe_fuse(gs), poe_fuse(shuffled)
    np.testing.assert_allclose(a.mean, b.mean, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(a.var, b.var, rtol=1e-9)


@given(_experts)
@settings(max_examples=60, deadline=None)
def test_poe_precision_never_below_any_expert(experts):
    gs = [DiagGaussian(np.array([m]), np.array([v])) for m, v in experts]
    fused = poe_fuse(gs)
    assert all(fused.precision[0] >= g.precision[0] * (1 - 1e-12) for g in gs)


def test_encoder_clamps_variance():
    params = init_mvae({Modality.VISION: 2}, latent_dim=1, hidden_dim=2, rng=np.random.default_rng(0))
    enc = params.encoders[Modality.VISION]
    enc.b2[1] = 100.0
    assert encode_modality(enc, [0.0, 0.0]).var[0] == pytest.approx(1e6)
    enc.b2[1] = -100.0
    assert encode_modality(enc, [0.0, 0.0]).var[0] == pytest.approx(1e-6)


def test_encoder_rejects_nan():
    params = init_mvae({Modality.VISION: 2}, latent_dim=1, hidden_dim=2, rng=np.random.default_rng(0))
    with pytest.raises(NumericalError):
        encode_modality(params.encoders[Modality.VISION], [np.nan, 0.0])


def test_zero_encoder_gives_standard_normal():
    enc = MlpParams.zeros(4, 3, 2 * 2)
    g = encode_modality(enc, np.ones(4))
    np.testing.assert_array_equal(g.mean, [0.0, 0.0])
    np.testing.assert_array_equal(g.var, [1.0, 1.0])


def test_tiny_encoder_by_hand():
    enc = MlpParams(np.array([[1.0]]), np.array([0.0]), np.array([[2.0, 0.5]]), np.array([0.1, 0.0]))
    g = encode_modality(enc, [0.5])
    h = math.tanh(0.5)
    assert g.mean[0] == pytest.approx(2.0 * h + 0.1, abs=1e-12)
    assert g.var[0] == pytest.approx(math.exp(0.5 * h), abs=1e-12)


def test_tiny_decoder_by_hand():
    dec = MlpParams(np.array([[1.0, -1.0]]), np.array([0.0, 0.5]), np.array([[3.0], [2.0]]), np.array([1.0]))
    out = decode_modality(dec, [0.2])
    assert out[0] == pytest.approx(3.0 * math.tanh(0.2) + 2.0 * math.tanh(0.3) + 1.0, abs=1e-12)
    with pytest.raises(ValueError):
        decode_modality(dec, [0.2, 0.1])
    with pytest.raises(NumericalError):
        decode_modality(dec, [np.inf])


def test_poe_unit_and_wide_expert():
    fused = poe_fuse([DiagGaussian(np.array([0.0]), np.array([1.0])), DiagGaussian(np.array([0.0]), np.array([4.0]))])
    assert fused.mean[0] == pytest.approx(0.0, abs=1e-12)
    assert fused.var[0] == pytest.approx(0.8, abs=1e-12)


def test_kl_between_identical_standard_normals_is_zero():
    kl = kl_divergence(np.zeros((1, 3)), np.ones((1, 3)), np.zeros((1, 3)), np.eye(3)[None])
    assert kl[0] == pytest.approx(0.0, abs=1e-12)


def test_kl_matches_scalar_formula():
    # KL(N(1, 0.5) || N(0, 1/2)) = 0.5 * (2*0.5 + 2*1 - 1 - log 0.5 - log 2)
    kl = kl_divergence(np.array([[1.0]]), np.array([[0.5]]), np.array([[0.0]]), np.array([[[2.0]]]))
    assert kl[0] == pytest.approx(1.0, abs=1e-12)


@given(
    st.lists(st.floats(-5, 5), min_size=3, max_size=3),
    st.lists(st.floats(1e-3, 1e2), min_size=3, max_size=3),
    st.integers(0, 2**32 - 1),
)
@settings(max_examples=80, deadline=None)
def test_kl_is_nonnegative(mean, var, seed):
    r = np.random.default_rng(seed)
    lam = _random_lam(r, 3)
    kl = kl_divergence(np.array([mean]), np.array([var]), r.standard_normal((1, 3)), lam[None])
    assert kl[0] >= -1e-9


def test_sample_latent_monte_carlo_moments():
    g = DiagGaussian(np.array([1.5, -2.0]), np.array([0.25, 4.0]))
    draws = np.stack([sample_latent(g, np.random.default_rng(s)) for s in range(4000)])
    np.testing.assert_allclose(draws.mean(axis=0), g.mean, atol=0.1)
    np.testing.assert_allclose(draws.var(axis=0), g.var, rtol=0.1)
    np.testing.assert_array_equal(sample_latent(g, eps=np.zeros(2)), g.mean)


def test_component_expert_uses_precision_diagonal():
    gmm = frozen_gmm([[1.0, 2.0]], lam_scale=4.0)
    e = component_expert(gmm, np.array([0]))
    np.testing.assert_allclose(e.mean, [[1.0, 2.0]])
    np.testing.assert_allclose(e.var, [[0.25, 0.25]])


def test_infer_latents_shapes(rng):
    params = init_mvae(DIMS, latent_dim=2, hidden_dim=4, rng=rng)
    feats = {m: rng.standard_normal((5, d)) for m, d in DIMS.items()}
    fused, z = infer_latents(params, feats, rng, frozen_gmm([[0.0, 0.0], [1.0, 1.0]]), np.array([0, 1, 0, 1, 1]))
    assert z.shape == (5, 2)
    plain, _ = infer_latents(params, feats, rng)
    assert np.all(fused.var < plain.var)


def _random_lam(r, dim):
    a = r.standard_normal((dim, dim))
    return a @ a.T + dim * np.eye(dim)


@pytest.mark.parametrize("instance", range(10))
def test_gradients_match_finite_differences(instance):
    r = np.random.default_rng(instance)
    params = init_mvae(DIMS, latent_dim=2, hidden_dim=3, rng=r, scale=0.5)
    n = 4
    feats = {m: r.standard_normal((n, d)) for m, d in DIMS.items()}
    mus = r.standard_normal((n, 2))
    lams = np.stack([_random_lam(r, 2) for _ in range(n)])
    eps = r.standard_normal((n, 2))
    unit = bool(instance % 2)

    _, grads = elbo_batch(feats, params, mus, lams, eps, unit)
    analytic = dict(grads.named_tensors())
    h = 1e-6
    for name, tensor in params.named_tensors():
        numeric = np.zeros_like(tensor)
        for idx in np.ndindex(tensor.shape):
            old = tensor[idx]
            tensor[idx] = old + h
            up, _ = elbo_batch(feats, params, mus, lams, eps, unit)
            tensor[idx] = old - h
            down, _ = elbo_batch(feats, params, mus, lams, eps, unit)
            tensor[idx] = old
            numeric[idx] = (up - down) / (2 * h)
        a = analytic[name]
        rel = np.linalg.norm(a - numeric) / max(np.linalg.norm(a) + np.linalg.norm(numeric), 1e-10)
        assert rel < 1e-4, name


def test_zero_learning_rate_keeps_params(rng):
    params = init_mvae(DIMS, latent_dim=2, hidden_dim=4, rng=rng)
    batch = {m: rng.standard_normal((6, d)) for m, d in DIMS.items()}
    gmm = frozen_gmm([[0.0, 0.0], [1.0, 0.0]])
    res = train_step(params, batch, np.array([0, 1, 0, 1, 0, 1]), gmm, 0.0, rng)
    for (_, a), (_, b) in zip(params.named_tensors(), res.params.named_tensors()):
        np.testing.assert_array_equal(a, b)
    assert np.isfinite(res.elbo)


def test_small_step_increases_batch_elbo():
    r = np.random.default_rng(21)
    params = init_mvae(DIMS, latent_dim=2, hidden_dim=4, rng=r)
    batch = {m: r.standard_normal((8, d)) for m, d in DIMS.items()}
    gmm = frozen_gmm([[0.0, 0.0], [1.0, -1.0]])
    signs = np.array([0, 1] * 4)
    eps = r.standard_normal((8, 2))
    before, grads = elbo_batch(batch, params, gmm.mus[signs], gmm.lams[signs], eps)
    stepped = params.map(lambda p, g: p + 1e-4 * g, grads)
    after, _ = elbo_batch(batch, stepped, gmm.mus[signs], gmm.lams[signs], eps)
    assert after > before


def test_train_step_rejects_bad_sign(rng):
    params = init_mvae(DIMS, latent_dim=2, hidden_dim=4, rng=rng)
    batch = {m: rng.standard_normal((2, d)) for m, d in DIMS.items()}
    with pytest.raises(ValueError):
        train_step(params, batch, np.array([0, 2]), frozen_gmm([[0.0, 0.0], [1.0, 0.0]]), 1e-3, rng)


def test_singular_prior_precision_rejected(rng):
    params = init_mvae(DIMS, latent_dim=2, hidden_dim=4, rng=rng)
    feats = {m: rng.standard_normal((1, d)) for m, d in DIMS.items()}
    with pytest.raises(NumericalError):
        elbo_batch(feats, params, np.zeros((1, 2)), np.zeros((1, 2, 2)), np.zeros((1, 2)))


def test_training_improves_elbo():
    r = np.random.default_rng(5)
    params = init_mvae(DIMS, latent_dim=2, hidden_dim=8, rng=r)
    signs = np.repeat([0, 1], 40)
    centers = np.array([[2.0, 0.0, -2.0], [-2.0, 1.0, 2.0]])
    feats = {m: centers[signs] + 0.1 * r.standard_normal((80, 3)) for m in DIMS}
    gmm = frozen_gmm([[1.0, 0.0], [-1.0, 0.0]])
    params, velocity, history = train_agent(params, None, feats, signs, gmm, 30, 16, 1e-2, 0.9, r)
    assert len(history) == 30
    assert history[-1] > history[0]


def test_single_observation_elbo(rng):
    params = init_mvae(DIMS, latent_dim=2, hidden_dim=4, rng=rng)
    obs = MultimodalObservation("x", Emotion.SAD, {m: rng.standard_normal(d) for m, d in DIMS.items()})
    value, grads = elbo(obs, params, GmmComponent(np.zeros(2), np.eye(2)), eps=np.zeros(2))
    assert np.isfinite(value)
    assert set(dict(grads.named_tensors())) == set(dict(params.named_tensors()))
