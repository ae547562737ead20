"""
Per-agent Gaussian mixture over the latent space with a Normal-Wishart prior.

Provides component likelihoods, sign posteriors for the naming game, the
conjugate posterior update and Gibbs resampling of component parameters.
"""

# =============================
# domain/gmm.py
# =============================
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from app.domain.errors import NumericalError

logger = logging.getLogger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)


def _cholesky(mat: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(mat)):
        raise NumericalError(f"{what} has non-finite entries")
    if not np.allclose(mat, np.swapaxes(mat, -1, -2), rtol=1e-10, atol=1e-12):
        raise NumericalError(f"{what} is not symmetric")
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        raise NumericalError(f"{what} is not positive definite") from None


def _symmetrize(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + np.swapaxes(mat, -1, -2))


@dataclass(frozen=True, eq=False)
class NwHyper:
    """
    Normal-Wishart hyperparameters: N(mu | m0, (kappa0 Lambda)^-1) W(Lambda | nu0, W0).
    """

    m0: np.ndarray
    kappa0: float
    nu0: float
    W0: np.ndarray

    def __post_init__(self):
        m0 = np.asarray(self.m0, dtype=float)
        W0 = np.asarray(self.W0, dtype=float)
        object.__setattr__(self, "m0", m0)
        object.__setattr__(self, "W0", W0)
        p = m0.shape[0]
        if W0.shape != (p, p):
            raise ValueError(f"W0 must be {p}x{p}, got {W0.shape}")
        if self.kappa0 <= 0:
            raise ValueError("kappa0 must be > 0")
        if self.nu0 <= p - 1:
            raise ValueError(f"nu0 must be > {p - 1}")
        _cholesky(W0, "W0")

    @property
    def dim(self) -> int:
        return self.m0.shape[0]

    @classmethod
    def default(
        cls, latent_dim: int, kappa0: float = 0.1, nu0: Optional[float] = None, w0_scale: Optional[float] = None
    ) -> "NwHyper":
        """Weak prior: m0 = 0, nu0 = dim + 2, W0 = I / nu0 so that E[Lambda] = I."""
        nu0 = float(latent_dim + 2) if nu0 is None else float(nu0)
        scale = 1.0 / nu0 if w0_scale is None else float(w0_scale)
        return cls(np.zeros(latent_dim), float(kappa0), nu0, scale * np.eye(latent_dim))


@dataclass(frozen=True, eq=False)
class GmmComponent:
    """One Gaussian with mean `mu` and precision matrix `lam`."""

    mu: np.ndarray
    lam: np.ndarray
    chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        lam = _symmetrize(np.asarray(self.lam, dtype=float))
        if lam.shape != (mu.shape[0], mu.shape[0]):
            raise ValueError("precision shape does not match mean")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "chol", _cholesky(lam, "precision matrix"))


@dataclass(frozen=True, eq=False)
class GmmParams:
    """
    K components stacked as arrays, plus mixing weights.

    Cholesky factors and log-determinants of the precisions are computed once
    at construction.
    """

    mus: np.ndarray
    lams: np.ndarray
    pi: np.ndarray
    chols: np.ndarray = field(init=False, repr=False, compare=False)
    logdets: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mus = np.asarray(self.mus, dtype=float)
        lams = _symmetrize(np.asarray(self.lams, dtype=float))
        pi = np.asarray(self.pi, dtype=float)
        k, p = mus.shape
        if lams.shape != (k, p, p) or pi.shape != (k,):
            raise ValueError("inconsistent GMM parameter shapes")
        if np.any(pi < 0) or not math.isclose(pi.sum(), 1.0, rel_tol=0, abs_tol=1e-9):
            raise ValueError("mixing weights must be >= 0 and sum to 1")
        chols = _cholesky(lams, "precision matrix")
        object.__setattr__(self, "mus", mus)
        object.__setattr__(self, "lams", lams)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "chols", chols)
        object.__setattr__(self, "logdets", 2.0 * np.log(np.diagonal(chols, axis1=1, axis2=2)).sum(axis=1))

    @classmethod
    def from_components(cls, components: Sequence[GmmComponent], pi: Optional[np.ndarray] = None) -> "GmmParams":
        k = len(components)
        weights = np.full(k, 1.0 / k) if pi is None else pi
        return cls(np.stack([c.mu for c in components]), np.stack([c.lam for c in components]), weights)

    @property
    def K(self) -> int:
        return self.mus.shape[0]

    @property
    def latent_dim(self) -> int:
        return self.mus.shape[1]

    def component(self, k: int) -> GmmComponent:
        return GmmComponent(self.mus[k], self.lams[k])

    def log_likelihoods(self, zs: np.ndarray) -> np.ndarray:
        """log N(z | mu_k, Lambda_k^-1) for every row z and component k, shape (N, K)."""
        zs = np.atleast_2d(zs)
        diff = zs[:, None, :] - self.mus[None, :, :]
        # (z - mu)^T L L^T (z - mu) = |L^T (z - mu)|^2
        proj = np.einsum("kji,nkj->nki", self.chols, diff)
        maha = np.sum(proj**2, axis=-1)
        return 0.5 * (self.logdets[None, :] - self.latent_dim * _LOG_2PI - maha)

    def log_likelihood_at(self, zs: np.ndarray, signs: np.ndarray) -> np.ndarray:
        """log N(z_d | mu_{w_d}, Lambda_{w_d}^-1) for paired rows and signs."""
        zs = np.atleast_2d(zs)
        signs = np.asarray(signs, dtype=int)
        diff = zs - self.mus[signs]
        proj = np.einsum("nji,nj->ni", self.chols[signs], diff)
        return 0.5 * (self.logdets[signs] - self.latent_dim * _LOG_2PI - np.sum(proj**2, axis=-1))


def component_loglik(z, c: GmmComponent) -> float:
    """
    log N(z | mu, Lambda^-1) through the Cholesky factor of Lambda.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != c.mu.shape:
        raise ValueError(f"latent dim {z.shape} does not match component dim {c.mu.shape}")
    proj = c.chol.T @ (z - c.mu)
    logdet = 2.0 * np.sum(np.log(np.diag(c.chol)))
    return float(0.5 * (logdet - z.shape[0] * _LOG_2PI - proj @ proj))


def sign_posteriors(zs: np.ndarray, gmm: GmmParams) -> np.ndarray:
    """Batched sign posterior, shape (N, K); rows sum to one."""
    with np.errstate(divide="ignore"):
        logits = gmm.log_likelihoods(zs) + np.log(gmm.pi)[None, :]
    norm = logsumexp(logits, axis=1, keepdims=True)
    if not np.all(np.isfinite(norm)):
        raise NumericalError("sign posterior is -inf for every component")
    return np.exp(logits - norm)


def sign_posterior(z, gmm: GmmParams) -> np.ndarray:
    """p_k proportional to pi_k N(z | mu_k, Lambda_k^-1), normalized in log space."""
    return sign_posteriors(np.asarray(z, dtype=float)[None, :], gmm)[0]


def nw_posterior(zs: np.ndarray, hyper: NwHyper) -> NwHyper:
    """
    Conjugate Normal-Wishart update given the latents assigned to one component.

    Args:
        zs (np.ndarray): (n, dim) latents; n may be zero.
        hyper (NwHyper): Prior hyperparameters.

    Returns:
        NwHyper: Posterior (m_n, kappa_n, nu_n, W_n).
    """
    zs = np.asarray(zs, dtype=float).reshape(-1, hyper.dim)
    n = zs.shape[0]
    if n == 0:
        return hyper
    zbar = zs.mean(axis=0)
    centered = zs - zbar
    scatter = centered.T @ centered
    kappa_n = hyper.kappa0 + n
    m_n = (hyper.kappa0 * hyper.m0 + n * zbar) / kappa_n
    dm = (zbar - hyper.m0)[:, None]
    w_inv = np.linalg.inv(hyper.W0) + scatter + (hyper.kappa0 * n / kappa_n) * (dm @ dm.T)
    W_n = _symmetrize(np.linalg.inv(_symmetrize(w_inv)))
    _cholesky(W_n, "posterior Wishart scale")
    return NwHyper(m_n, kappa_n, hyper.nu0 + n, W_n)


def sample_wishart(nu: float, W: np.ndarray, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """
    Wishart(nu, W) draws by the Bartlett decomposition.

    Lambda = L A A^T L^T with L = chol(W), A lower triangular,
    A_ii = sqrt(chi2(nu - i)) and standard normals below the diagonal.
    """
    W = np.asarray(W, dtype=float)
    p = W.shape[0]
    if nu <= p - 1:
        raise ValueError(f"Wishart degrees of freedom must be > {p - 1}")
    L = _cholesky(W, "Wishart scale")
    n = 1 if size is None else int(size)
    A = np.zeros((n, p, p))
    diag = np.sqrt(rng.chisquare(nu - np.arange(p), size=(n, p)))
    A[:, np.arange(p), np.arange(p)] = diag
    rows, cols = np.tril_indices(p, k=-1)
    A[:, rows, cols] = rng.standard_normal((n, rows.size))
    X = L[None, :, :] @ A
    lam = _symmetrize(X @ np.swapaxes(X, -1, -2))
    return lam[0] if size is None else lam


def sample_normal_wishart(
    hyper: NwHyper, rng: np.random.Generator, size: Optional[int] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """Draws (mu, Lambda): Lambda ~ W(nu, W), then mu ~ N(m, (kappa Lambda)^-1)."""
    n = 1 if size is None else int(size)
    lams = sample_wishart(hyper.nu0, hyper.W0, rng, size=n)
    chol = _cholesky(hyper.kappa0 * lams, "scaled precision")
    eps = rng.standard_normal((n, hyper.dim))
    # x = C^-T eps has covariance (C C^T)^-1
    offsets = np.linalg.solve(np.swapaxes(chol, -1, -2), eps[..., None])[..., 0]
    mus = hyper.m0[None, :] + offsets
    if size is None:
        return mus[0], lams[0]
    return mus, lams


def sample_component_posterior(zs: np.ndarray, hyper: NwHyper, rng: np.random.Generator) -> GmmComponent:
    """One Gibbs draw of (mu_k, Lambda_k) given the latents assigned to k."""
    mu, lam = sample_normal_wishart(nw_posterior(zs, hyper), rng)
    return GmmComponent(mu, lam)


def sample_prior_gmm(hyper: NwHyper, K: int, rng: np.random.Generator) -> GmmParams:
    """Initial mixture: one prior draw per component, uniform weights."""
    return GmmParams.from_components([sample_component_posterior(np.empty((0, hyper.dim)), hyper, rng) for _ in range(K)])


def update_agent_gmm(
    latents: np.ndarray,
    signs: np.ndarray,
    hyper: NwHyper,
    K: int,
    rng: np.random.Generator,
    pi: Optional[np.ndarray] = None,
) -> GmmParams:
    """
    Resamples every component from its posterior given the current signs.

    Components are drawn in index order from one stream; empty components
    are drawn from the prior. Mixing weights stay fixed.
    """
    latents = np.asarray(latents, dtype=float)
    signs = np.asarray(signs, dtype=int)
    if signs.shape[0] != latents.shape[0]:
        raise ValueError("need one sign per latent")
    if signs.size and (signs.min() < 0 or signs.max() >= K):
        raise ValueError(f"signs must lie in [0, {K})")
    components = [sample_component_posterior(latents[signs == k], hyper, rng) for k in range(K)]
    gmm = GmmParams.from_components(components, pi)
    logger.debug("GMM resampled; occupancy %s", np.bincount(signs, minlength=K).tolist())
    return gmm
