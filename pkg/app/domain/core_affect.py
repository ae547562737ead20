"""
Core-affect simulation: valence/arousal trajectories produced by an
Ornstein-Uhlenbeck process, the per-emotion parameter table, the four
interoceptive profiles and the seven-replica initialization scheme.
"""

# =============================
# domain/core_affect.py
# =============================
import math
from dataclasses import dataclass, replace
from enum import Enum, IntEnum
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.signal import lfilter

from app.domain.errors import NumericalError

DEFAULT_DT = 0.02
DEFAULT_STEPS = 345
DEFAULT_CLIP = 1.5
REPLICAS_PER_STIMULUS = 7


class Emotion(IntEnum):
    """The eight reference emotion categories, in parameter-table order."""

    NEUTRAL = 0
    CALM = 1
    HAPPY = 2
    SAD = 3
    ANGRY = 4
    FEARFUL = 5
    DISGUST = 6
    SURPRISED = 7

    @property
    def title(self) -> str:
        return self.name.capitalize()

    @classmethod
    def parse(cls, value) -> "Emotion":
        """Accepts an Emotion, its ordinal, or its (case-insensitive) name."""
        if isinstance(value, cls):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        text = str(value).strip()
        if text.isdigit():
            return cls(int(text))
        try:
            return cls[text.upper()]
        except KeyError:
            raise ValueError(f"Unknown emotion label: {value!r}") from None


N_EMOTIONS = len(Emotion)


@dataclass(frozen=True)
class OUParams:
    """
    Ornstein-Uhlenbeck parameters of one emotion, per affect axis.

    The targets mu are dimensionless affect coordinates, theta are mean
    reversion rates and sigma are volatilities.
    """

    mu_v: float
    mu_a: float
    theta_v: float
    theta_a: float
    sigma_v: float
    sigma_a: float

    def __post_init__(self):
        values = (self.mu_v, self.mu_a, self.theta_v, self.theta_a, self.sigma_v, self.sigma_a)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"OU parameters must be finite: {self}")
        if self.theta_v <= 0 or self.theta_a <= 0:
            raise ValueError("theta_v and theta_a must be > 0")
        if self.sigma_v < 0 or self.sigma_a < 0:
            raise ValueError("sigma_v and sigma_a must be >= 0")

    @property
    def mu(self) -> np.ndarray:
        return np.array([self.mu_v, self.mu_a])

    @property
    def theta(self) -> np.ndarray:
        return np.array([self.theta_v, self.theta_a])

    @property
    def sigma(self) -> np.ndarray:
        return np.array([self.sigma_v, self.sigma_a])


# Rows: (mu_v, mu_a, sigma_v, sigma_a, theta_v, theta_a), same column order as
# the published parameter table.
_ORIGINAL_TABLE = {
    Emotion.NEUTRAL: (0.00, 0.00, 0.090, 0.090, 1.5, 1.5),
    Emotion.CALM: (0.80, -0.50, 0.135, 0.180, 2.1, 1.8),
    Emotion.HAPPY: (0.90, 0.50, 0.090, 0.225, 2.7, 2.4),
    Emotion.SAD: (-0.70, -0.50, 0.180, 0.135, 2.4, 2.1),
    Emotion.ANGRY: (-0.60, 0.60, 0.225, 0.270, 1.8, 2.7),
    Emotion.FEARFUL: (-0.80, 0.70, 0.270, 0.315, 1.5, 3.0),
    Emotion.DISGUST: (-0.90, 0.20, 0.225, 0.225, 2.1, 2.4),
    Emotion.SURPRISED: (0.00, 0.80, 0.180, 0.360, 1.2, 1.8),
}


class ProfileKind(str, Enum):
    ORIGINAL = "original"
    HAPPY_INVERSE = "happy_inverse"
    LOW_VALENCE_FOCUS = "low_valence_focus"
    LOW_AROUSAL_FOCUS = "low_arousal_focus"


@dataclass(frozen=True)
class InteroceptiveProfile:
    """One agent's body: OU parameters for every emotion."""

    kind: ProfileKind
    params: Mapping[Emotion, OUParams]

    def __post_init__(self):
        missing = [e.title for e in Emotion if e not in self.params]
        if missing:
            raise ValueError(f"Profile {self.kind.value} lacks emotions: {missing}")

    def __getitem__(self, emotion) -> OUParams:
        return self.params[Emotion.parse(emotion)]

    def circumplex_means(self) -> np.ndarray:
        """Returns the 8x2 matrix of (valence, arousal) targets in Emotion order."""
        return np.array([self.params[e].mu for e in Emotion])


def _original_params(overrides: Optional[Mapping[str, Mapping[str, float]]] = None) -> Dict[Emotion, OUParams]:
    params = {}
    for emotion, (mu_v, mu_a, sigma_v, sigma_a, theta_v, theta_a) in _ORIGINAL_TABLE.items():
        params[emotion] = OUParams(mu_v, mu_a, theta_v, theta_a, sigma_v, sigma_a)
    for name, fields in (overrides or {}).items():
        emotion = Emotion.parse(name)
        try:
            params[emotion] = replace(params[emotion], **{k: float(v) for k, v in fields.items()})
        except TypeError as e:
            raise ValueError(f"Bad OU override for {emotion.title}: {e}") from None
    return params


def build_profile(
    kind, overrides: Optional[Mapping[str, Mapping[str, float]]] = None
) -> InteroceptiveProfile:
    """
    Builds one of the four interoceptive profiles.

    Derived profiles are deterministic transforms of Original: Happy-inverse
    flips the Happy attractor, the two focus profiles scale one axis's
    (mu, theta, sigma) by a quarter for every emotion.

    Args:
        kind: A ProfileKind or its string value.
        overrides: Optional per-emotion field overrides applied to Original
            before any transform.

    Returns:
        InteroceptiveProfile: The populated profile.
    """
    kind = ProfileKind(kind)
    base = _original_params(overrides)
    if kind is ProfileKind.ORIGINAL:
        params = base
    elif kind is ProfileKind.HAPPY_INVERSE:
        happy = base[Emotion.HAPPY]
        params = dict(base)
        params[Emotion.HAPPY] = replace(happy, mu_v=-happy.mu_v, mu_a=-happy.mu_a)
    elif kind is ProfileKind.LOW_VALENCE_FOCUS:
        params = {
            e: replace(p, mu_v=p.mu_v / 4, theta_v=p.theta_v / 4, sigma_v=p.sigma_v / 4)
            for e, p in base.items()
        }
    else:
        params = {
            e: replace(p, mu_a=p.mu_a / 4, theta_a=p.theta_a / 4, sigma_a=p.sigma_a / 4)
            for e, p in base.items()
        }
    return InteroceptiveProfile(kind=kind, params=params)


@dataclass(frozen=True, eq=False)
class AffectTrajectory:
    """
    A sampled (valence, arousal) path. Row 0 is the initial state.
    """

    samples: np.ndarray
    dt: float
    target: Emotion
    initial: Emotion

    def __post_init__(self):
        if self.samples.ndim != 2 or self.samples.shape[1] != 2 or len(self.samples) < 1:
            raise ValueError("samples must be a non-empty T x 2 array")
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if not np.all(np.isfinite(self.samples)):
            raise NumericalError("trajectory contains non-finite values")

    def downsample(self, frames: int) -> np.ndarray:
        """Evenly spaced frames, first and last sample always kept."""
        if frames >= len(self.samples):
            return self.samples.copy()
        idx = np.round(np.linspace(0, len(self.samples) - 1, frames)).astype(int)
        return self.samples[idx]

    def observation(self, frames: Optional[int] = None) -> np.ndarray:
        """Flattened frame-major (v0, a0, v1, a1, ...) interoceptive vector."""
        s = self.samples if frames is None else self.downsample(frames)
        return s.reshape(-1).copy()


def euler_maruyama_step(x, p: OUParams, dt: float, noise) -> np.ndarray:
    """
    One Euler-Maruyama step of the OU process on both affect axes.

    Args:
        x: Current (valence, arousal); any array ending in an axis of size 2.
        p (OUParams): Parameters of the target emotion.
        dt (float): Time step, > 0.
        noise: Standard-normal draws, same shape as x.

    Returns:
        np.ndarray: x + theta (mu - x) dt + sigma sqrt(dt) noise.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    x = np.asarray(x, dtype=float)
    noise = np.asarray(noise, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(noise))):
        raise NumericalError("non-finite state or noise in OU step")
    return x + p.theta * (p.mu - x) * dt + p.sigma * math.sqrt(dt) * noise


def simulate_ou(
    x0,
    params: Sequence[OUParams],
    steps: int,
    dt: float,
    rng: np.random.Generator,
    clip: Optional[float] = DEFAULT_CLIP,
) -> np.ndarray:
    """
    Simulates one OU path per row of x0.

    The Euler-Maruyama recursion x' = (1 - theta dt) x + theta mu dt +
    sigma sqrt(dt) n is linear, so each axis is run as a first-order IIR
    filter over the drive term. Noise is drawn once as an (N, steps-1, 2)
    block, which fixes the stream order. Clipping is applied to the finished
    path.

    Returns:
        np.ndarray: Array of shape (N, steps, 2); [:, 0] equals x0.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if dt <= 0:
        raise ValueError("dt must be > 0")
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    if len(params) != len(x0):
        raise ValueError("need one OUParams per initial state")
    if not np.all(np.isfinite(x0)):
        raise NumericalError("non-finite initial state")

    n = len(x0)
    noise = rng.standard_normal((n, steps - 1, 2))
    out = np.empty((n, steps, 2))
    out[:, 0] = x0
    if steps > 1:
        sqrt_dt = math.sqrt(dt)
        for i, p in enumerate(params):
            for ax in range(2):
                decay = 1.0 - p.theta[ax] * dt
                drive = p.theta[ax] * p.mu[ax] * dt + p.sigma[ax] * sqrt_dt * noise[i, :, ax]
                out[i, 1:, ax], _ = lfilter([1.0], [1.0, -decay], drive, zi=[decay * x0[i, ax]])
    if clip is not None:
        np.clip(out, -clip, clip, out=out)
    return out


def stationary_variance(p: OUParams) -> np.ndarray:
    """Analytic stationary variance sigma^2 / (2 theta) per axis."""
    return p.sigma**2 / (2.0 * p.theta)


def replica_initial_emotions(target: Emotion) -> List[Emotion]:
    """The seven emotions other than target, in ordinal order."""
    return [e for e in Emotion if e != target]


def generate_interoception(
    labels: Sequence[Emotion],
    profile: InteroceptiveProfile,
    steps: int = DEFAULT_STEPS,
    dt: float = DEFAULT_DT,
    rng: Optional[np.random.Generator] = None,
    clip: Optional[float] = DEFAULT_CLIP,
    initial_profile: Optional[InteroceptiveProfile] = None,
) -> List[AffectTrajectory]:
    """
    Emits seven trajectories per labeled stimulus.

    Replica j starts at the Original-profile mean of the j-th other emotion and
    relaxes toward the label's attractor under the dynamics of `profile`.
    Output is ordered stimulus by stimulus, replicas in ordinal order.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    labels = [Emotion.parse(lab) for lab in labels]
    if not labels:
        return []
    rng = rng if rng is not None else np.random.default_rng()
    starts = (initial_profile or build_profile(ProfileKind.ORIGINAL, None)).circumplex_means()

    x0, params, pairs = [], [], []
    for label in labels:
        for initial in replica_initial_emotions(label):
            x0.append(starts[initial])
            params.append(profile[label])
            pairs.append((label, initial))
    paths = simulate_ou(np.array(x0), params, steps, dt, rng, clip)
    return [
        AffectTrajectory(samples=paths[i], dt=dt, target=target, initial=initial)
        for i, (target, initial) in enumerate(pairs)
    ]


def export_trajectories_csv(
    path: str, trajectories: Sequence[AffectTrajectory], stimulus_ids: Sequence[str]
):
    """
    Writes trajectories as long-format CSV: stimulus_id, replica, t, valence, arousal.

    `stimulus_ids` holds one id per trajectory; replicas are numbered in order
    of appearance within each stimulus id.
    """
    if len(trajectories) != len(stimulus_ids):
        raise ValueError("need one stimulus id per trajectory")
    frames = []
    seen: Dict[str, int] = {}
    for traj, sid in zip(trajectories, stimulus_ids):
        replica = seen.get(sid, 0)
        seen[sid] = replica + 1
        n = len(traj.samples)
        frames.append(
            pd.DataFrame(
                {
                    "stimulus_id": sid,
                    "replica": replica,
                    "t": np.arange(n) * traj.dt,
                    "valence": traj.samples[:, 0],
                    "arousal": traj.samples[:, 1],
                }
            )
        )
    columns = ["stimulus_id", "replica", "t", "valence", "arousal"]
    table = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=columns)
    table.to_csv(path, index=False, float_format="%.10g")
