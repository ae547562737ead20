"""
Multimodal VAE with product-of-experts fusion, written directly on numpy.

Every modality has a two-layer tanh encoder that outputs a diagonal Gaussian
(mean and log-variance heads) and a two-layer tanh decoder that outputs the
mean of a unit-variance Gaussian likelihood. The ELBO and its gradients are
computed analytically; parameters are trained by gradient ascent with momentum.
"""

# =============================
# domain/mvae.py
# =============================
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from app.domain.errors import NumericalError
from app.domain.gmm import GmmComponent, GmmParams
from app.domain.stimuli import Modality, MultimodalObservation

logger = logging.getLogger(__name__)

LOGVAR_BOUND = math.log(1e6)  # var clamped to [1e-6, 1e6]
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(eq=False)
class DiagGaussian:
    """Mean and per-dimension variance; leading axes may index a batch."""

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.var = np.asarray(self.var, dtype=float)
        if self.mean.shape != self.var.shape:
            raise ValueError("mean and var shapes differ")
        if not (np.all(np.isfinite(self.mean)) and np.all(np.isfinite(self.var))):
            raise NumericalError("Gaussian has non-finite parameters")
        if np.any(self.var <= 0):
            raise NumericalError("Gaussian variance must be > 0")

    @property
    def precision(self) -> np.ndarray:
        return 1.0 / self.var


@dataclass(eq=False)
class MlpParams:
    """
    Two-layer perceptron: out = tanh(x @ w1 + b1) @ w2 + b2.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        if self.w1.shape[1] != self.b1.shape[0] or self.w2.shape != (self.b1.shape[0], self.b2.shape[0]):
            raise ValueError(
                f"inconsistent MLP shapes: w1 {self.w1.shape}, b1 {self.b1.shape}, w2 {self.w2.shape}, b2 {self.b2.shape}"
            )

    @property
    def in_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[1]

    def tensors(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return self.w1, self.b1, self.w2, self.b2

    @classmethod
    def init(cls, in_dim: int, hidden_dim: int, out_dim: int, rng: np.random.Generator, scale: float = 0.1) -> "MlpParams":
        return cls(
            scale * rng.standard_normal((in_dim, hidden_dim)),
            np.zeros(hidden_dim),
            scale * rng.standard_normal((hidden_dim, out_dim)),
            np.zeros(out_dim),
        )

    @classmethod
    def zeros(cls, in_dim: int, hidden_dim: int, out_dim: int) -> "MlpParams":
        return cls(np.zeros((in_dim, hidden_dim)), np.zeros(hidden_dim), np.zeros((hidden_dim, out_dim)), np.zeros(out_dim))

    def map(self, fn, *others: "MlpParams") -> "MlpParams":
        return MlpParams(*(fn(*ts) for ts in zip(self.tensors(), *(o.tensors() for o in others))))


@dataclass(eq=False)
class MvaeParams:
    """Per-modality encoders and decoders sharing one latent space."""

    encoders: Dict[Modality, MlpParams]
    decoders: Dict[Modality, MlpParams]
    latent_dim: int = 9

    def __post_init__(self):
        if set(self.encoders) != set(self.decoders):
            raise ValueError("every modality needs an encoder and a decoder")
        for m in self.encoders:
            if self.encoders[m].out_dim != 2 * self.latent_dim:
                raise ValueError(f"{m.value} encoder must output 2 x latent_dim values")
            if self.decoders[m].in_dim != self.latent_dim:
                raise ValueError(f"{m.value} decoder must read latent_dim values")
            if self.decoders[m].out_dim != self.encoders[m].in_dim:
                raise ValueError(f"{m.value} decoder output must match encoder input")

    @property
    def modalities(self) -> List[Modality]:
        return [m for m in Modality if m in self.encoders]

    def named_tensors(self) -> Iterator[Tuple[str, np.ndarray]]:
        """Stable (name, array) walk used by checkpoints and gradient checks."""
        for m in self.modalities:
            for part, net in (("enc", self.encoders[m]), ("dec", self.decoders[m])):
                for name, t in zip(("w1", "b1", "w2", "b2"), net.tensors()):
                    yield f"{m.value}.{part}.{name}", t

    def map(self, fn, *others: "MvaeParams") -> "MvaeParams":
        return MvaeParams(
            encoders={m: self.encoders[m].map(fn, *(o.encoders[m] for o in others)) for m in self.modalities},
            decoders={m: self.decoders[m].map(fn, *(o.decoders[m] for o in others)) for m in self.modalities},
            latent_dim=self.latent_dim,
        )

    def zeros_like(self) -> "MvaeParams":
        return self.map(np.zeros_like)

    def copy(self) -> "MvaeParams":
        return self.map(np.copy)


def init_mvae(
    dims: Mapping[Modality, int],
    latent_dim: int = 9,
    hidden_dim: int = 64,
    rng: Optional[np.random.Generator] = None,
    scale: float = 0.1,
) -> MvaeParams:
    """Scaled-Gaussian initialization of every encoder and decoder."""
    rng = rng if rng is not None else np.random.default_rng()
    encoders, decoders = {}, {}
    for m in Modality:
        if m not in dims:
            continue
        encoders[m] = MlpParams.init(dims[m], hidden_dim, 2 * latent_dim, rng, scale)
        decoders[m] = MlpParams.init(latent_dim, hidden_dim, dims[m], rng, scale)
    return MvaeParams(encoders, decoders, latent_dim)


def _forward(net: MlpParams, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    h = np.tanh(x @ net.w1 + net.b1)
    out = h @ net.w2 + net.b2
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite MLP activations")
    return h, out


def encode_modality(enc: MlpParams, o_m) -> DiagGaussian:
    """
    Modality expert q(z | o_m).

    Args:
        enc (MlpParams): Encoder with a 2 x latent_dim output (mean, log-var).
        o_m: One observation vector or a (N, dim) batch.

    Returns:
        DiagGaussian: var = exp(log-var) clamped to [1e-6, 1e6].
    """
    x = np.asarray(o_m, dtype=float)
    if x.shape[-1] != enc.in_dim:
        raise ValueError(f"observation dim {x.shape[-1]} does not match encoder input {enc.in_dim}")
    if not np.all(np.isfinite(x)):
        raise NumericalError("non-finite observation")
    _, out = _forward(enc, x)
    latent = enc.out_dim // 2
    logvar = np.clip(out[..., latent:], -LOGVAR_BOUND, LOGVAR_BOUND)
    return DiagGaussian(out[..., :latent], np.exp(logvar))


def decode_modality(dec: MlpParams, z) -> np.ndarray:
    """Reconstruction mean of one modality."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != dec.in_dim:
        raise ValueError(f"latent dim {z.shape[-1]} does not match decoder input {dec.in_dim}")
    if not np.all(np.isfinite(z)):
        raise NumericalError("non-finite latent")
    return _forward(dec, z)[1]


def poe_fuse(experts: Sequence[DiagGaussian]) -> DiagGaussian:
    """
    Product of Gaussian experts: precisions add, means are precision-weighted.
    """
    if not experts:
        raise ValueError("need at least one expert")
    shape = experts[0].mean.shape
    if any(e.mean.shape != shape for e in experts):
        raise ValueError("experts have different shapes")
    precision = np.zeros(shape)
    weighted = np.zeros(shape)
    for e in experts:
        p = 1.0 / e.var
        precision += p
        weighted += e.mean * p
    var = 1.0 / precision
    return DiagGaussian(weighted * var, var)


def sample_latent(g: DiagGaussian, rng: Optional[np.random.Generator] = None, eps=None) -> np.ndarray:
    """Reparameterized draw z = mean + sqrt(var) * eps."""
    if eps is None:
        rng = rng if rng is not None else np.random.default_rng()
        eps = rng.standard_normal(g.mean.shape)
    return g.mean + np.sqrt(g.var) * np.asarray(eps, dtype=float)


def unit_expert(shape) -> DiagGaussian:
    return DiagGaussian(np.zeros(shape), np.ones(shape))


def component_expert(gmm: GmmParams, signs: np.ndarray) -> DiagGaussian:
    """
    The sign's GMM component as a diagonal expert N(mu_w, diag(Lambda_w)^-1).
    """
    signs = np.asarray(signs, dtype=int)
    lam_diag = np.diagonal(gmm.lams[signs], axis1=-2, axis2=-1)
    return DiagGaussian(gmm.mus[signs], 1.0 / lam_diag)


def infer_latents(
    params: MvaeParams,
    features: Mapping[Modality, np.ndarray],
    rng: np.random.Generator,
    gmm: Optional[GmmParams] = None,
    signs: Optional[np.ndarray] = None,
    use_unit_expert: bool = False,
) -> Tuple[DiagGaussian, np.ndarray]:
    """
    Fuses the modality experts (plus the sign's component when `gmm` and
    `signs` are given) and draws one latent per data point.
    """
    experts = [encode_modality(params.encoders[m], features[m]) for m in params.modalities]
    if use_unit_expert:
        experts.append(unit_expert(experts[0].mean.shape))
    if gmm is not None and signs is not None:
        experts.append(component_expert(gmm, signs))
    fused = poe_fuse(experts)
    return fused, sample_latent(fused, rng)


def _prior_logdets(prior_lams: np.ndarray) -> np.ndarray:
    try:
        chol = np.linalg.cholesky(prior_lams)
    except np.linalg.LinAlgError:
        raise NumericalError("prior precision is singular or not positive definite") from None
    return 2.0 * np.log(np.diagonal(chol, axis1=-2, axis2=-1)).sum(axis=-1)


def kl_divergence(
    mean: np.ndarray,
    var: np.ndarray,
    prior_mus: np.ndarray,
    prior_lams: np.ndarray,
    prior_logdets: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    KL(N(mean, diag(var)) || N(mu, Lambda^-1)) row by row.

    Args:
        mean, var: (N, L) diagonal posterior.
        prior_mus: (N, L) prior means.
        prior_lams: (N, L, L) prior precisions.
        prior_logdets: Optional log det of each prior precision.

    Returns:
        np.ndarray: (N,) divergences.
    """
    mean, var = np.atleast_2d(mean), np.atleast_2d(var)
    prior_mus = np.atleast_2d(prior_mus)
    prior_lams = np.asarray(prior_lams, dtype=float).reshape(-1, mean.shape[1], mean.shape[1])
    logdets = _prior_logdets(prior_lams) if prior_logdets is None else prior_logdets
    diff = mean - prior_mus
    lam_diag = np.diagonal(prior_lams, axis1=-2, axis2=-1)
    mahal = np.einsum("ni,nij,nj->n", diff, prior_lams, diff)
    return 0.5 * (np.sum(lam_diag * var, axis=1) + mahal - mean.shape[1] - np.sum(np.log(var), axis=1) - logdets)


def elbo_batch(
    features: Mapping[Modality, np.ndarray],
    params: MvaeParams,
    prior_mus: np.ndarray,
    prior_lams: np.ndarray,
    eps: np.ndarray,
    use_unit_expert: bool = False,
    prior_logdets: Optional[np.ndarray] = None,
) -> Tuple[float, MvaeParams]:
    """
    Mean ELBO over a batch and its gradient for every parameter.

    ELBO_n = sum_m log N(o_m | dec_m(z), I) - KL(q_PoE(z) || N(mu_w, Lambda_w^-1))
    with z = mean + sqrt(var) * eps and the KL in closed form between the
    diagonal fused posterior and the full-covariance prior component.

    Args:
        features: (N, dim_m) observation matrices, one per modality.
        params (MvaeParams): Encoders and decoders.
        prior_mus (np.ndarray): (N, L) prior component means.
        prior_lams (np.ndarray): (N, L, L) prior component precisions.
        eps (np.ndarray): (N, L) standard-normal draws for reparameterization.
        use_unit_expert (bool): Include N(0, I) as an extra expert in q.
        prior_logdets: Optional precomputed log det of each prior precision.

    Returns:
        Tuple[float, MvaeParams]: Mean ELBO and its gradient.
    """
    mods = params.modalities
    L = params.latent_dim
    prior_mus = np.atleast_2d(prior_mus)
    n = prior_mus.shape[0]
    logdets = _prior_logdets(prior_lams) if prior_logdets is None else prior_logdets

    # encoders and PoE
    cache = {}
    precision = np.ones((n, L)) if use_unit_expert else np.zeros((n, L))
    weighted = np.zeros((n, L))
    for m in mods:
        x = np.asarray(features[m], dtype=float)
        h, out = _forward(params.encoders[m], x)
        mu_m, raw = out[:, :L], out[:, L:]
        p_m = np.exp(-np.clip(raw, -LOGVAR_BOUND, LOGVAR_BOUND))
        precision += p_m
        weighted += mu_m * p_m
        cache[m] = (x, h, raw, mu_m, p_m)
    var = 1.0 / precision
    mean = var * weighted
    sd = np.sqrt(var)
    z = mean + sd * eps

    # decoders
    recon = np.zeros(n)
    g_z = np.zeros((n, L))
    dec_grads = {}
    for m in mods:
        dec = params.decoders[m]
        x = cache[m][0]
        h, out = _forward(dec, z)
        r = x - out
        recon += -0.5 * np.sum(r**2, axis=1) - 0.5 * x.shape[1] * _LOG_2PI
        da = (r @ dec.w2.T) * (1.0 - h**2)
        g_z += da @ dec.w1.T
        dec_grads[m] = MlpParams(z.T @ da, da.sum(axis=0), h.T @ r, r.sum(axis=0))

    # KL to the sign's component
    kl = kl_divergence(mean, var, prior_mus, prior_lams, logdets)
    lam_diag = np.diagonal(prior_lams, axis1=-2, axis2=-1)
    lam_diff = np.einsum("nij,nj->ni", prior_lams, mean - prior_mus)
    values = recon - kl
    if not np.all(np.isfinite(values)):
        raise NumericalError("non-finite ELBO")

    # back through the reparameterization and the PoE
    g_mean = g_z - lam_diff
    g_var = g_z * eps / (2.0 * sd) - 0.5 * (lam_diag - precision)
    enc_grads = {}
    for m in mods:
        x, h, raw, mu_m, p_m = cache[m]
        enc = params.encoders[m]
        g_mu_m = g_mean * var * p_m
        g_p = g_mean * var * (mu_m - mean) - g_var * var**2
        g_raw = -p_m * g_p * ((raw > -LOGVAR_BOUND) & (raw < LOGVAR_BOUND))
        g_out = np.hstack([g_mu_m, g_raw])
        da = (g_out @ enc.w2.T) * (1.0 - h**2)
        enc_grads[m] = MlpParams(x.T @ da, da.sum(axis=0), h.T @ g_out, g_out.sum(axis=0))

    grads = MvaeParams(enc_grads, dec_grads, L).map(lambda g: g / n)
    return float(values.mean()), grads


def elbo(
    obs: MultimodalObservation,
    params: MvaeParams,
    prior: GmmComponent,
    rng: Optional[np.random.Generator] = None,
    eps=None,
    use_unit_expert: bool = False,
) -> Tuple[float, MvaeParams]:
    """ELBO of a single observation against one prior component."""
    features = {m: np.asarray(obs.features[m], dtype=float)[None, :] for m in params.modalities}
    if eps is None:
        rng = rng if rng is not None else np.random.default_rng()
        eps = rng.standard_normal(params.latent_dim)
    return elbo_batch(features, params, prior.mu[None, :], prior.lam[None, :, :], np.atleast_2d(eps), use_unit_expert)


class TrainResult(NamedTuple):
    params: MvaeParams
    velocity: MvaeParams
    elbo: float


def train_step(
    params: MvaeParams,
    batch: Mapping[Modality, np.ndarray],
    signs: np.ndarray,
    gmm: GmmParams,
    learning_rate: float,
    rng: np.random.Generator,
    momentum: float = 0.0,
    velocity: Optional[MvaeParams] = None,
    use_unit_expert: bool = False,
) -> TrainResult:
    """
    One gradient-ascent step on the batch ELBO, priors picked by `signs`.

    velocity <- momentum * velocity + grad; params <- params + lr * velocity.
    """
    signs = np.asarray(signs, dtype=int)
    if signs.size and (signs.min() < 0 or signs.max() >= gmm.K):
        raise ValueError(f"signs must lie in [0, {gmm.K})")
    eps = rng.standard_normal((signs.shape[0], params.latent_dim))
    value, grads = elbo_batch(batch, params, gmm.mus[signs], gmm.lams[signs], eps, use_unit_expert, gmm.logdets[signs])
    velocity = grads if velocity is None else velocity.map(lambda v, g: momentum * v + g, grads)
    updated = params.map(lambda p, v: p + learning_rate * v, velocity)
    return TrainResult(updated, velocity, value)


def train_agent(
    params: MvaeParams,
    velocity: Optional[MvaeParams],
    features: Mapping[Modality, np.ndarray],
    signs: np.ndarray,
    gmm: GmmParams,
    epochs: int,
    batch_size: int,
    learning_rate: float,
    momentum: float,
    rng: np.random.Generator,
    use_unit_expert: bool = False,
) -> Tuple[MvaeParams, MvaeParams, List[float]]:
    """
    Mini-batch training for `epochs` passes in a shuffled order drawn from rng.

    Returns:
        Tuple: (params, velocity, mean ELBO per epoch).
    """
    signs = np.asarray(signs, dtype=int)
    n = signs.shape[0]
    velocity = velocity if velocity is not None else params.zeros_like()
    history = []
    for _ in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            batch = {m: features[m][idx] for m in params.modalities}
            params, velocity, value = train_step(
                params, batch, signs[idx], gmm, learning_rate, rng, momentum, velocity, use_unit_expert
            )
            total += value * len(idx)
        history.append(total / max(n, 1))
    if history:
        logger.debug("MVAE epochs done; ELBO %.3f -> %.3f", history[0], history[-1])
    return params, velocity, history
