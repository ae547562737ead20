import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

from app.domain.errors import NumericalError
from app.domain.gmm import (
    GmmComponent,
    GmmParams,
    NwHyper,
    component_loglik,
    nw_posterior,
    sample_normal_wishart,
    sample_wishart,
    sign_posterior,
    sign_posteriors,
    update_agent_gmm,
)

from conftest import frozen_gmm


def test_scalar_loglik():
    c = GmmComponent(np.array([0.0]), np.array([[4.0]]))
    expected = 0.5 * (math.log(4.0) - math.log(2 * math.pi) - 4.0)
    assert component_loglik([1.0], c) == pytest.approx(expected, abs=1e-12)


def test_loglik_matches_scipy(rng):
    a = rng.standard_normal((3, 3))
    lam = a @ a.T + 3 * np.eye(3)
    mu = rng.standard_normal(3)
    z = rng.standard_normal(3)
    c = GmmComponent(mu, lam)
    ref = multivariate_normal(mu, np.linalg.inv(lam)).logpdf(z)
    assert component_loglik(z, c) == pytest.approx(ref, rel=1e-10)
    gmm = GmmParams.from_components([c, GmmComponent(-mu, lam)])
    assert gmm.log_likelihoods(z[None])[0, 0] == pytest.approx(ref, rel=1e-10)
    assert gmm.log_likelihood_at(z[None], np.array([0]))[0] == pytest.approx(ref, rel=1e-10)


def test_loglik_dim_mismatch():
    with pytest.raises(ValueError):
        component_loglik([0.0, 1.0], GmmComponent(np.zeros(3), np.eye(3)))


def test_singular_precision_rejected():
    with pytest.raises(NumericalError):
        GmmComponent(np.zeros(2), np.array([[1.0, 1.0], [1.0, 1.0]]))


def test_sign_posterior_sums_to_one(rng):
    gmm = frozen_gmm(rng.standard_normal((5, 2)))
    post = sign_posteriors(rng.standard_normal((20, 2)), gmm)
    np.testing.assert_allclose(post.sum(axis=1), 1.0, atol=1e-12)


def test_sign_posterior_separated_components():
    gmm = frozen_gmm([[0.0, 0.0], [10.0, 0.0]])
    assert sign_posterior([0.0, 0.0], gmm)[0] > 0.99


def test_sign_posterior_far_point_is_finite():
    gmm = frozen_gmm([[0.0], [1.0]], lam_scale=100.0)
    post = sign_posterior([1e4], gmm)
    assert np.all(np.isfinite(post))
    assert post[1] == pytest.approx(1.0)


def test_sign_posterior_zero_weights_everywhere():
    gmm = frozen_gmm([[0.0], [1.0]], pi=np.array([1.0, 0.0]))
    assert sign_posterior([1.0], gmm)[1] == 0.0


@given(shift=st.floats(-50, 50), seed=st.integers(0, 2**16))
@settings(max_examples=30, deadline=None)
def test_sign_posterior_shift_invariant(shift, seed):
    r = np.random.default_rng(seed)
    mus = r.standard_normal((4, 2))
    z = r.standard_normal(2)
    base = sign_posterior(z, frozen_gmm(mus))
    moved = sign_posterior(z + shift, frozen_gmm(mus + shift))
    np.testing.assert_allclose(base, moved, atol=1e-9)


def test_nw_posterior_empty_is_prior():
    hyper = NwHyper.default(3)
    assert nw_posterior(np.empty((0, 3)), hyper) is hyper


def test_nw_posterior_single_point():
    hyper = NwHyper(np.zeros(1), 1.0, 2.0, np.eye(1))
    post = nw_posterior(np.array([[2.0]]), hyper)
    assert post.kappa0 == 2.0
    assert post.nu0 == 3.0
    np.testing.assert_allclose(post.m0, [1.0])
    # W_n^-1 = 1 + 0 + (1 * 1 / 2) * 4 = 3
    np.testing.assert_allclose(post.W0, [[1.0 / 3.0]])


def test_wishart_mean(rng):
    W = np.array([[0.5, 0.1], [0.1, 0.3]])
    draws = sample_wishart(6.0, W, rng, size=20_000)
    assert draws.shape == (20_000, 2, 2)
    se = draws.std(axis=0) / math.sqrt(len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - 6.0 * W) < 4 * se)
    np.testing.assert_array_equal(draws, np.swapaxes(draws, 1, 2))


@pytest.mark.parametrize("instance", range(20))
def test_normal_wishart_posterior_moments(instance):
    r = np.random.default_rng(1000 + instance)
    dim = int(r.integers(1, 4))
    a = r.standard_normal((dim, dim))
    hyper = NwHyper(r.standard_normal(dim), float(r.uniform(0.1, 2.0)), dim + 1.0 + float(r.uniform(0, 3)),
                    (a @ a.T + dim * np.eye(dim)) / 10.0)
    zs = r.standard_normal((int(r.integers(5, 20)), dim)) + 1.5
    post = nw_posterior(zs, hyper)
    mus, lams = sample_normal_wishart(post, r, size=4000)
    n = len(mus)
    mu_se = mus.std(axis=0) / math.sqrt(n)
    lam_se = lams.std(axis=0) / math.sqrt(n)
    assert np.all(np.abs(mus.mean(axis=0) - post.m0) < 4 * mu_se + 1e-12)
    assert np.all(np.abs(lams.mean(axis=0) - post.nu0 * post.W0) < 4 * lam_se + 1e-12)


def test_update_agent_gmm_tracks_assignments(rng):
    hyper = NwHyper.default(2, kappa0=0.01)
    z0 = rng.standard_normal((300, 2)) * 0.1 + [5.0, 0.0]
    z1 = rng.standard_normal((300, 2)) * 0.1 + [-5.0, 2.0]
    latents = np.vstack([z0, z1])
    signs = np.repeat([0, 1], 300)
    gmm = update_agent_gmm(latents, signs, hyper, 3, rng)
    assert gmm.K == 3
    np.testing.assert_allclose(gmm.mus[0], [5.0, 0.0], atol=0.1)
    np.testing.assert_allclose(gmm.mus[1], [-5.0, 2.0], atol=0.1)
    np.testing.assert_allclose(gmm.pi, 1.0 / 3.0)


def test_update_agent_gmm_rejects_bad_signs(rng):
    with pytest.raises(ValueError):
        update_agent_gmm(np.zeros((2, 2)), np.array([0, 5]), NwHyper.default(2), 3, rng)


def test_hyper_validation():
    with pytest.raises(ValueError):
        NwHyper(np.zeros(3), 0.1, 1.5, np.eye(3))
    with pytest.raises(ValueError):
        NwHyper(np.zeros(2), 0.0, 4.0, np.eye(2))


def _fold_one_point(hyper, z):
    kappa = hyper.kappa0 + 1.0
    d = (z - hyper.m0)[:, None]
    w_inv = np.linalg.inv(hyper.W0) + (hyper.kappa0 / kappa) * (d @ d.T)
    return NwHyper((hyper.kappa0 * hyper.m0 + z) / kappa, kappa, hyper.nu0 + 1.0, np.linalg.inv(w_inv))


@pytest.mark.parametrize("instance", range(10))
def test_nw_posterior_matches_sequential_updates(instance):
    r = np.random.default_rng(500 + instance)
    dim = int(r.integers(1, 5))
    kappa0, nu0 = float(r.uniform(0.05, 3.0)), dim + 1.0 + float(r.uniform(0, 4))
    hyper = NwHyper(r.standard_normal(dim), kappa0, nu0, np.eye(dim) * r.uniform(0.2, 2.0))
    zs = r.standard_normal((int(r.integers(1, 30)), dim)) * 2.0 + 1.0
    batch = nw_posterior(zs, hyper)
    step = hyper
    for z in zs:
        step = _fold_one_point(step, z)
    assert batch.kappa0 == pytest.approx(step.kappa0, abs=1e-10)
    assert batch.nu0 == pytest.approx(step.nu0, abs=1e-10)
    np.testing.assert_allclose(batch.m0, step.m0, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(np.linalg.inv(batch.W0), np.linalg.inv(step.W0), rtol=1e-10, atol=1e-10)


def test_far_clusters_sample_ordered_means():
    hyper = NwHyper.default(2)
    signs = np.repeat([0, 1], 20)
    ordered = 0
    for seed in range(300):
        r = np.random.default_rng(seed)
        latents = r.standard_normal((40, 2))
        latents[:, 0] += np.where(signs == 0, 10.0, -10.0)
        gmm = update_agent_gmm(latents, signs, hyper, 2, r)
        ordered += gmm.mus[0, 0] > 5.0 > -5.0 > gmm.mus[1, 0]
    assert ordered / 300 > 0.99
