# =============================
# domain/config_model.py
# =============================
"""
This module defines the run configuration of an experiment and the named
condition presets compared across interoceptive profiles.
"""

import dataclasses
import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional

from app.domain.core_affect import DEFAULT_CLIP, DEFAULT_DT, DEFAULT_STEPS, Emotion, ProfileKind, build_profile
from app.domain.errors import ConfigError
from app.domain.gmm import NwHyper
from app.domain.mhng import LearningSettings, Scenario
from app.domain.stimuli import Modality, ModalitySpec

# condition name -> (profile_a, profile_b, interoception)
CONDITION_PRESETS: Dict[str, tuple] = {
    "vision_audio": (ProfileKind.ORIGINAL, ProfileKind.ORIGINAL, False),
    "original": (ProfileKind.ORIGINAL, ProfileKind.ORIGINAL, True),
    "happy_inverse": (ProfileKind.ORIGINAL, ProfileKind.HAPPY_INVERSE, True),
    "low_valence_focus": (ProfileKind.ORIGINAL, ProfileKind.LOW_VALENCE_FOCUS, True),
    "low_arousal_focus": (ProfileKind.ORIGINAL, ProfileKind.LOW_AROUSAL_FOCUS, True),
}

_OU_FIELDS = ("mu_v", "mu_a", "theta_v", "theta_a", "sigma_v", "sigma_a")


@dataclass
class RunConfig:
    """
    A dataclass that holds every parameter of one experiment run and of the
    sweeps built from it. Defaults equal configs/default.toml.
    """

    seed: int = 0
    condition: str = "original"
    scenario: str = Scenario.METROPOLIS_HASTINGS.value
    profile_a: str = ProfileKind.ORIGINAL.value
    profile_b: str = ProfileKind.ORIGINAL.value
    interoception: bool = True

    # dataset
    feature_dir: str = ""
    stimuli_per_emotion: int = 8
    vision_dim: int = 40
    audio_dim: int = 60
    interoception_dim: int = 64
    separation: float = 0.5
    noise_scale: float = 1.0
    interoception_noise: float = 1.5
    standardize: bool = True
    ou_steps: int = DEFAULT_STEPS
    ou_dt: float = DEFAULT_DT
    ou_clip: float = DEFAULT_CLIP
    ou_overrides: Dict[str, Dict[str, float]] = field(default_factory=dict)

    # model
    K: int = 9
    latent_dim: int = 9
    hidden_dim: int = 64
    init_scale: float = 0.1
    kappa0: float = 0.1
    nu0: Optional[float] = None
    w0_scale: Optional[float] = None

    # learning
    rounds: int = 50
    epochs: int = 20
    batch_size: int = 64
    learning_rate: float = 1e-3
    momentum: float = 0.9
    prior_expert: bool = True
    unit_expert: bool = False

    # sweep / output
    out_dir: str = "runs"
    seeds: List[int] = field(default_factory=lambda: list(range(10)))
    conditions: List[str] = field(default_factory=lambda: ["original"])
    scenarios: List[str] = field(default_factory=lambda: [s.value for s in Scenario])
    workers: int = 1

    def validate(self) -> Optional[str]:
        """Validates the configuration parameters; returns a message or None."""
        try:
            Scenario(self.scenario)
            ProfileKind(self.profile_a)
            ProfileKind(self.profile_b)
            for s in self.scenarios:
                Scenario(s)
        except ValueError as e:
            return str(e)
        for c in [self.condition, *self.conditions]:
            if c not in CONDITION_PRESETS:
                return f"Unknown condition {c!r}; expected one of {sorted(CONDITION_PRESETS)}"
        if self.stimuli_per_emotion <= 0:
            return "stimuli_per_emotion must be > 0"
        if min(self.vision_dim, self.audio_dim) < 0 or self.vision_dim + self.audio_dim == 0:
            return "at least one exteroceptive modality needs dim > 0"
        if self.interoception and (self.interoception_dim <= 0 or self.interoception_dim % 2):
            return "interoception_dim must be a positive even number"
        if self.interoception and self.interoception_dim // 2 > self.ou_steps:
            return "interoception_dim / 2 frames cannot exceed ou_steps"
        if self.separation < 0 or self.noise_scale < 0 or self.interoception_noise < 0:
            return "separation, noise_scale and interoception_noise must be >= 0"
        if self.ou_steps < 1 or self.ou_dt <= 0:
            return "ou_steps must be >= 1 and ou_dt > 0"
        if self.ou_clip is not None and self.ou_clip <= 0:
            return "ou_clip must be > 0"
        for name, fields in self.ou_overrides.items():
            try:
                Emotion.parse(name)
            except ValueError as e:
                return f"ou_overrides: {e}"
            bad = set(fields) - set(_OU_FIELDS)
            if bad:
                return f"ou_overrides.{name}: unknown fields {sorted(bad)}"
        if self.K < 2 or self.latent_dim < 1 or self.hidden_dim < 1:
            return "K must be >= 2, latent_dim and hidden_dim >= 1"
        if self.kappa0 <= 0:
            return "kappa0 must be > 0"
        if self.nu0 is not None and self.nu0 <= self.latent_dim - 1:
            return f"nu0 must be > latent_dim - 1 = {self.latent_dim - 1}"
        if self.w0_scale is not None and self.w0_scale <= 0:
            return "w0_scale must be > 0"
        if self.rounds < 0 or self.epochs < 0:
            return "rounds and epochs must be >= 0"
        if self.batch_size <= 0 or self.learning_rate < 0 or not 0 <= self.momentum < 1:
            return "batch_size must be > 0, learning_rate >= 0 and momentum in [0, 1)"
        if not self.seeds:
            return "seeds must not be empty"
        if self.workers < 1:
            return "workers must be >= 1"
        return None

    def check(self) -> "RunConfig":
        """Raises ConfigError when validate() reports a problem."""
        msg = self.validate()
        if msg:
            raise ConfigError(msg)
        return self

    def with_condition(self, name: str) -> "RunConfig":
        """Applies a named condition preset (profiles and interoception switch)."""
        if name not in CONDITION_PRESETS:
            raise ConfigError(f"Unknown condition {name!r}; expected one of {sorted(CONDITION_PRESETS)}")
        pa, pb, intero = CONDITION_PRESETS[name]
        return replace(self, condition=name, profile_a=pa.value, profile_b=pb.value, interoception=intero)

    def modality_specs(self) -> List[ModalitySpec]:
        specs = []
        if self.vision_dim:
            specs.append(ModalitySpec(Modality.VISION, self.vision_dim, self.noise_scale))
        if self.audio_dim:
            specs.append(ModalitySpec(Modality.AUDIO, self.audio_dim, self.noise_scale))
        if self.interoception:
            specs.append(ModalitySpec(Modality.INTEROCEPTION, self.interoception_dim, self.interoception_noise))
        return specs

    def profiles(self):
        overrides = self.ou_overrides or None
        return build_profile(self.profile_a, overrides), build_profile(self.profile_b, overrides)

    def initial_profile(self):
        return build_profile(ProfileKind.ORIGINAL, self.ou_overrides or None)

    def hyper(self) -> NwHyper:
        return NwHyper.default(self.latent_dim, self.kappa0, self.nu0, self.w0_scale)

    def learning(self) -> LearningSettings:
        return LearningSettings(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            prior_expert=self.prior_expert,
            unit_expert=self.unit_expert,
        )

    def to_json(self) -> str:
        """Serializes the configuration to a JSON string."""
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @staticmethod
    def from_dict(data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(RunConfig)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown config keys: {sorted(unknown)}")
        return RunConfig(**data)

    @staticmethod
    def from_json(s: str) -> "RunConfig":
        """Deserializes a JSON string into a RunConfig object."""
        return RunConfig.from_dict(json.loads(s))

    @staticmethod
    def from_toml(path: str) -> "RunConfig":
        """
        Reads a TOML file. Top-level keys map onto fields; a `condition` key
        applies its preset first, and explicit profile keys still win.
        """
        try:
            with open(path, "rb") as f:
                data = tomllib.load(f)
        except OSError as e:
            raise ConfigError(f"Cannot read config {path}: {e}") from e
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from e
        explicit = {k: data[k] for k in ("profile_a", "profile_b", "interoception") if k in data}
        cfg = RunConfig.from_dict(data)
        if "condition" in data:
            cfg = replace(cfg.with_condition(cfg.condition), **explicit)
        return cfg
