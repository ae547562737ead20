"""
Exteroceptive stimuli and the multimodal dataset both agents observe.

Synthetic vision/audio features are class prototypes plus Gaussian noise,
drawn per agent so the two bodies see the same stimulus differently.
Interoception is the flattened OU trajectory of the agent's own profile,
read through additive sensor noise.
Pre-extracted features can be ingested from CSV instead.
"""

# =============================
# domain/stimuli.py
# =============================
import csv
import logging
import math
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from app.domain.core_affect import (
    DEFAULT_CLIP,
    DEFAULT_DT,
    DEFAULT_STEPS,
    N_EMOTIONS,
    REPLICAS_PER_STIMULUS,
    AffectTrajectory,
    Emotion,
    InteroceptiveProfile,
    generate_interoception,
)
from app.domain.errors import FeatureParseError

logger = logging.getLogger(__name__)

AGENT_NAMES = ("a", "b")


class Modality(str, Enum):
    VISION = "vision"
    AUDIO = "audio"
    INTEROCEPTION = "interoception"


EXTEROCEPTIVE = (Modality.VISION, Modality.AUDIO)

# rng stream ids; combined with (seed, agent, modality) into a SeedSequence
_STREAM_PROTOTYPE = 0
_STREAM_NOISE = 1
_STREAM_OU = 2
_STREAM_SENSOR = 3
_MODALITY_CODE = {Modality.VISION: 0, Modality.AUDIO: 1, Modality.INTEROCEPTION: 2}


@dataclass(frozen=True)
class ModalitySpec:
    name: Modality
    dim: int
    noise_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "name", Modality(self.name))
        if self.dim < 1:
            raise ValueError(f"{self.name.value}: dim must be >= 1")
        if self.noise_scale < 0:
            raise ValueError(f"{self.name.value}: noise_scale must be >= 0")


@dataclass
class MultimodalObservation:
    """
    One data point as seen by one agent. The label is a reference for
    evaluation only; the learner never reads it.
    """

    stimulus_id: str
    label: Emotion
    features: Dict[Modality, np.ndarray] = field(default_factory=dict)

    @property
    def o_v(self) -> np.ndarray:
        return self.features[Modality.VISION]

    @property
    def o_a(self) -> np.ndarray:
        return self.features[Modality.AUDIO]

    @property
    def o_i(self) -> np.ndarray:
        return self.features[Modality.INTEROCEPTION]


@dataclass
class StimulusDataset:
    """
    Both agents' observations, aligned index by index (joint attention).
    """

    agents: Tuple[List[MultimodalObservation], List[MultimodalObservation]]
    trajectories: Optional[Tuple[List[AffectTrajectory], List[AffectTrajectory]]] = None

    def __post_init__(self):
        a, b = self.agents
        if len(a) != len(b):
            raise ValueError(f"agents observe different numbers of data points: {len(a)} vs {len(b)}")
        for d, (oa, ob) in enumerate(zip(a, b)):
            if oa.stimulus_id != ob.stimulus_id or oa.label != ob.label:
                raise ValueError(
                    f"data point {d} is not aligned: {oa.stimulus_id}/{oa.label.title} "
                    f"vs {ob.stimulus_id}/{ob.label.title}"
                )

    def __len__(self) -> int:
        return len(self.agents[0])

    @property
    def labels(self) -> np.ndarray:
        return np.array([int(o.label) for o in self.agents[0]], dtype=int)

    @property
    def stimulus_ids(self) -> List[str]:
        return [o.stimulus_id for o in self.agents[0]]

    @property
    def source_ids(self) -> List[str]:
        """Stimulus ids with the replica suffix removed."""
        return [sid.rsplit("-r", 1)[0] for sid in self.stimulus_ids]

    def modalities(self, agent: int) -> List[Modality]:
        if not self.agents[agent]:
            return []
        return [m for m in Modality if m in self.agents[agent][0].features]

    def matrix(self, agent: int, modality: Modality) -> np.ndarray:
        """Stacks one modality of one agent into a (D, dim) array."""
        return np.stack([o.features[modality] for o in self.agents[agent]])

    def features(self, agent: int, modalities: Optional[Sequence[Modality]] = None) -> Dict[Modality, np.ndarray]:
        mods = self.modalities(agent) if modalities is None else modalities
        return {Modality(m): self.matrix(agent, Modality(m)) for m in mods}


def _stream(seed: int, agent_id: int, modality: Modality, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, agent_id, _MODALITY_CODE[modality], stream]))


def make_prototypes(
    spec: ModalitySpec,
    n_emotions: int = N_EMOTIONS,
    agent_id: int = 0,
    seed: int = 0,
    separation: float = 0.5,
) -> np.ndarray:
    """
    Draws the class prototypes of one (agent, modality).

    Each agent owns an independent stream, so two agents with the same seed
    still get different prototype matrices.

    Returns:
        np.ndarray: (n_emotions, spec.dim) matrix of separation * N(0, 1) draws.
    """
    rng = _stream(seed, agent_id, spec.name, _STREAM_PROTOTYPE)
    return separation * rng.standard_normal((n_emotions, spec.dim))


def stimulus_labels(stimuli_per_emotion: int) -> List[Emotion]:
    """Balanced label list, grouped by emotion."""
    return [e for e in Emotion for _ in range(stimuli_per_emotion)]


def _interoception_frames(spec: ModalitySpec, steps: int) -> int:
    if spec.dim % 2 != 0:
        raise ValueError(f"interoception dim must be even (2 x frames), got {spec.dim}")
    frames = spec.dim // 2
    if frames > steps:
        raise ValueError(f"interoception dim {spec.dim} needs {frames} frames but only {steps} OU steps")
    return frames


def _observe(trajs: Sequence[AffectTrajectory], spec: ModalitySpec, frames: int, seed: int, agent_id: int) -> np.ndarray:
    """Downsampled trajectories plus sensor noise; one row per trajectory."""
    clean = np.stack([t.observation(frames) for t in trajs])
    rng = _stream(seed, agent_id, Modality.INTEROCEPTION, _STREAM_SENSOR)
    return clean + rng.standard_normal(clean.shape) * spec.noise_scale


def build_dataset(
    labels: Sequence[Emotion],
    specs: Sequence[ModalitySpec],
    profiles: Sequence[InteroceptiveProfile],
    seed: int = 0,
    separation: float = 0.5,
    steps: int = DEFAULT_STEPS,
    dt: float = DEFAULT_DT,
    clip: Optional[float] = DEFAULT_CLIP,
    initial_profile: Optional[InteroceptiveProfile] = None,
) -> StimulusDataset:
    """
    Builds the synthetic two-agent dataset.

    Every labeled stimulus is replicated seven times (one per replica
    initial state). Replicas share the stimulus' exteroceptive draw and differ
    in interoception.
    The observed interoception is the sampled trajectory plus independent
    sensor noise scaled by the interoception spec's noise_scale.

    Args:
        labels: Reference emotion of every stimulus.
        specs: One ModalitySpec per modality to generate.
        profiles: Interoceptive profile of agent A and agent B.
        seed: Root seed of all streams.
        separation: Prototype scale factor.
        steps, dt, clip: OU simulation settings.
        initial_profile: Profile whose means seed the replicas (Original by default).

    Returns:
        StimulusDataset: D = len(labels) * 7 aligned data points per agent.
    """
    labels = [Emotion.parse(lab) for lab in labels]
    if not labels:
        raise ValueError("labels must be non-empty")
    if len(profiles) != 2:
        raise ValueError("need exactly one profile per agent")
    by_name = {Modality(s.name): s for s in specs}

    agents: List[List[MultimodalObservation]] = []
    trajectories: List[List[AffectTrajectory]] = []
    for agent_id, profile in enumerate(profiles):
        extero = {}
        for modality in EXTEROCEPTIVE:
            if modality not in by_name:
                continue
            spec = by_name[modality]
            protos = make_prototypes(spec, N_EMOTIONS, agent_id, seed, separation)
            rng = _stream(seed, agent_id, modality, _STREAM_NOISE)
            noise = rng.standard_normal((len(labels), spec.dim)) * spec.noise_scale
            extero[modality] = protos[[int(lab) for lab in labels]] + noise

        trajs: List[AffectTrajectory] = []
        frames = None
        observed = None
        if Modality.INTEROCEPTION in by_name:
            spec = by_name[Modality.INTEROCEPTION]
            frames = _interoception_frames(spec, steps)
            rng = _stream(seed, agent_id, Modality.INTEROCEPTION, _STREAM_OU)
            trajs = generate_interoception(labels, profile, steps, dt, rng, clip, initial_profile)
            observed = _observe(trajs, spec, frames, seed, agent_id)

        observations = []
        for s, label in enumerate(labels):
            for j in range(REPLICAS_PER_STIMULUS):
                feats = {m: v[s].copy() for m, v in extero.items()}
                if frames is not None:
                    r = s * REPLICAS_PER_STIMULUS + j
                    feats[Modality.INTEROCEPTION] = observed[r].copy()
                observations.append(
                    MultimodalObservation(stimulus_id=f"s{s:04d}-r{j}", label=label, features=feats)
                )
        agents.append(observations)
        trajectories.append(trajs)

    dataset = StimulusDataset(agents=(agents[0], agents[1]), trajectories=(trajectories[0], trajectories[1]))
    logger.info("Built dataset: %d stimuli x %d replicas = %d data points", len(labels), REPLICAS_PER_STIMULUS, len(dataset))
    return dataset


def standardize(dataset: StimulusDataset) -> StimulusDataset:
    """
    Z-scores every modality of every agent per dimension over the dataset.
    Zero-variance dimensions are only centered.
    """
    agents = []
    for agent in range(2):
        mats = dataset.features(agent)
        scaled = {}
        for m, x in mats.items():
            sd = x.std(axis=0)
            sd[sd == 0] = 1.0
            scaled[m] = (x - x.mean(axis=0)) / sd
        agents.append(
            [
                MultimodalObservation(o.stimulus_id, o.label, {m: scaled[m][d] for m in scaled})
                for d, o in enumerate(dataset.agents[agent])
            ]
        )
    return StimulusDataset(agents=(agents[0], agents[1]), trajectories=dataset.trajectories)


# --- CSV helpers ---
def _feature_header(dim: int) -> List[str]:
    return ["stimulus_id", "label"] + [f"f_{i}" for i in range(dim)]


def load_feature_csv(path: str, spec: ModalitySpec) -> List[MultimodalObservation]:
    """
    Parses a feature file with header stimulus_id,label,f_0..f_{dim-1}.

    Args:
        path (str): CSV file to read.
        spec (ModalitySpec): Modality the columns belong to; fixes dim.

    Returns:
        List[MultimodalObservation]: One observation per row, holding only
        `spec.name` features.

    Raises:
        FeatureParseError: On a bad header, wrong column count, unknown label
            or non-numeric value; the message names the line.
    """
    expected = _feature_header(spec.dim)
    out: List[MultimodalObservation] = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise FeatureParseError(path, 1, "missing header")
        if [h.strip() for h in header] != expected:
            raise FeatureParseError(path, 1, f"header must be stimulus_id,label,f_0..f_{spec.dim - 1}")
        for row in reader:
            line_no = reader.line_num
            if not row:
                continue
            if len(row) != len(expected):
                raise FeatureParseError(path, line_no, f"expected {spec.dim} feature values, got {len(row) - 2}")
            try:
                label = Emotion.parse(row[1])
            except ValueError:
                raise FeatureParseError(path, line_no, f"unknown label {row[1]!r}") from None
            try:
                values = np.array([float(v) for v in row[2:]])
            except ValueError:
                raise FeatureParseError(path, line_no, "non-numeric feature value") from None
            if not all(math.isfinite(v) for v in values):
                raise FeatureParseError(path, line_no, "non-finite feature value")
            out.append(MultimodalObservation(row[0].strip(), label, {spec.name: values}))
    return out


def export_dataset(dataset: StimulusDataset, out_dir: str) -> List[str]:
    """
    Writes one CSV per modality per agent, named <agent>_<modality>.csv.

    Returns:
        List[str]: Paths written.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for agent, name in enumerate(AGENT_NAMES):
        for modality in dataset.modalities(agent):
            x = dataset.matrix(agent, modality)
            table = pd.DataFrame(x, columns=_feature_header(x.shape[1])[2:])
            table.insert(0, "label", [o.label.name.lower() for o in dataset.agents[agent]])
            table.insert(0, "stimulus_id", dataset.stimulus_ids)
            path = os.path.join(out_dir, f"{name}_{modality.value}.csv")
            table.to_csv(path, index=False, float_format="%.17g")
            written.append(path)
    logger.info("Exported %d feature files to %s", len(written), out_dir)
    return written


def _merge(per_modality: Sequence[List[MultimodalObservation]], path_hint: str) -> List[MultimodalObservation]:
    merged = [MultimodalObservation(o.stimulus_id, o.label, dict(o.features)) for o in per_modality[0]]
    for rows in per_modality[1:]:
        if len(rows) != len(merged):
            raise ValueError(f"{path_hint}: modality files have different row counts")
        for d, (base, extra) in enumerate(zip(merged, rows)):
            if base.stimulus_id != extra.stimulus_id or base.label != extra.label:
                raise ValueError(f"{path_hint}: row {d} differs between modality files ({base.stimulus_id} vs {extra.stimulus_id})")
            base.features.update(extra.features)
    return merged


def load_dataset(
    feature_dir: str,
    specs: Sequence[ModalitySpec],
    profiles: Sequence[InteroceptiveProfile],
    seed: int = 0,
    steps: int = DEFAULT_STEPS,
    dt: float = DEFAULT_DT,
    clip: Optional[float] = DEFAULT_CLIP,
    initial_profile: Optional[InteroceptiveProfile] = None,
) -> StimulusDataset:
    """
    Loads pre-extracted exteroceptive features from `feature_dir`.

    Vision/audio files are required for every requested modality. When both
    `<agent>_interoception.csv` files exist, rows are taken as data points
    verbatim; otherwise interoception is simulated and every row is
    replicated seven times.
    """
    by_name = {Modality(s.name): s for s in specs}
    extero_specs = [by_name[m] for m in EXTEROCEPTIVE if m in by_name]
    if not extero_specs:
        raise ValueError("feature ingestion needs at least one exteroceptive modality")
    want_intero = Modality.INTEROCEPTION in by_name
    intero_paths = [os.path.join(feature_dir, f"{n}_interoception.csv") for n in AGENT_NAMES]
    use_intero_files = want_intero and all(os.path.exists(p) for p in intero_paths)

    agents, trajectories = [], []
    for agent_id, name in enumerate(AGENT_NAMES):
        parts = [load_feature_csv(os.path.join(feature_dir, f"{name}_{s.name.value}.csv"), s) for s in extero_specs]
        if use_intero_files:
            parts.append(load_feature_csv(intero_paths[agent_id], by_name[Modality.INTEROCEPTION]))
        rows = _merge(parts, os.path.join(feature_dir, name))
        trajs: List[AffectTrajectory] = []
        if want_intero and not use_intero_files:
            frames = _interoception_frames(by_name[Modality.INTEROCEPTION], steps)
            rng = _stream(seed, agent_id, Modality.INTEROCEPTION, _STREAM_OU)
            trajs = generate_interoception([o.label for o in rows], profiles[agent_id], steps, dt, rng, clip, initial_profile)
            observed = _observe(trajs, by_name[Modality.INTEROCEPTION], frames, seed, agent_id)
            expanded = []
            for s, o in enumerate(rows):
                for j in range(REPLICAS_PER_STIMULUS):
                    feats = {m: v.copy() for m, v in o.features.items()}
                    feats[Modality.INTEROCEPTION] = observed[s * REPLICAS_PER_STIMULUS + j].copy()
                    expanded.append(MultimodalObservation(f"{o.stimulus_id}-r{j}", o.label, feats))
            rows = expanded
        agents.append(rows)
        trajectories.append(trajs)

    dataset = StimulusDataset(agents=(agents[0], agents[1]), trajectories=(trajectories[0], trajectories[1]))
    logger.info("Loaded %d data points per agent from %s", len(dataset), feature_dir)
    return dataset
