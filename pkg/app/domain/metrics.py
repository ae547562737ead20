"""
Evaluation measures for a pair of agents: partition agreement with the
reference labels (ARI), inter-agent agreement (Cohen's kappa), cluster
quality (Davies-Bouldin), latent-structure similarity (TopSim), matched
recall heatmaps and 2-D PCA projections.
"""

# =============================
# domain/metrics.py
# =============================
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Union

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import pdist
from scipy.stats import spearmanr
from sklearn.decomposition import PCA
from sklearn.metrics import adjusted_rand_score, cohen_kappa_score

from app.domain.core_affect import N_EMOTIONS, Emotion
from app.domain.errors import NumericalError

logger = logging.getLogger(__name__)

TOPSIM_MAX_PAIRS = 100_000
TOPSIM_SEED = 0


def _paired(x, y, min_len: int = 1):
    x = np.asarray(x).ravel()
    y = np.asarray(y).ravel()
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    if x.shape[0] < min_len:
        raise ValueError(f"need at least {min_len} items, got {x.shape[0]}")
    return x, y


def adjusted_rand_index(partition_x, partition_y) -> float:
    """Hubert-Arabie adjusted Rand index of two partitions of the same items."""
    x, y = _paired(partition_x, partition_y, min_len=2)
    return float(adjusted_rand_score(x, y))


def cohens_kappa(signs_a, signs_b) -> float:
    """
    Chance-corrected agreement (p_o - p_e) / (1 - p_e). When both tables are
    constant on the same sign p_e = 1 and kappa is defined as 1.0.
    """
    a, b = _paired(signs_a, signs_b)
    alphabet, inv = np.unique(np.concatenate([a, b]), return_inverse=True)
    ia, ib = inv[: a.shape[0]], inv[a.shape[0]:]
    n = a.shape[0]
    p_o = float(np.mean(ia == ib))
    p_e = float(np.dot(np.bincount(ia, minlength=alphabet.size), np.bincount(ib, minlength=alphabet.size))) / (n * n)
    if math.isclose(p_e, 1.0):
        if math.isclose(p_o, 1.0):
            return 1.0
        raise ValueError("kappa undefined: chance agreement is 1 but observed agreement is not")
    return float(cohen_kappa_score(a, b))


def davies_bouldin(latents, signs) -> float:
    """
    Mean over non-empty clusters of max_j (s_i + s_j) / d_ij, where s is the
    mean Euclidean distance to the centroid and d the centroid distance.
    """
    z = np.atleast_2d(np.asarray(latents, dtype=float))
    s = np.asarray(signs).ravel()
    if z.shape[0] != s.shape[0]:
        raise ValueError(f"{z.shape[0]} latents but {s.shape[0]} signs")
    clusters = np.unique(s)
    if clusters.size < 2:
        raise ValueError("Davies-Bouldin needs at least 2 non-empty clusters")
    centroids = np.stack([z[s == c].mean(axis=0) for c in clusters])
    spread = np.array([np.linalg.norm(z[s == c] - centroids[i], axis=1).mean() for i, c in enumerate(clusters)])
    dist = np.linalg.norm(centroids[:, None, :] - centroids[None, :, :], axis=-1)
    np.fill_diagonal(dist, np.inf)
    if np.any(dist == 0):
        raise NumericalError("two clusters share a centroid")
    ratio = (spread[:, None] + spread[None, :]) / dist
    return float(ratio.max(axis=1).mean())


def _pair_subsample(n: int, max_pairs: int, seed: int):
    rng = np.random.default_rng(seed)
    i = rng.integers(0, n, size=max_pairs)
    j = rng.integers(0, n - 1, size=max_pairs)
    j = j + (j >= i)
    return i, j


def topsim(latents_a, latents_b, max_pairs: int = TOPSIM_MAX_PAIRS, seed: int = TOPSIM_SEED) -> float:
    """
    Spearman correlation between the two agents' pairwise Euclidean distance
    vectors. Above `max_pairs` pairs a fixed-seed random subsample is used.
    """
    za = np.atleast_2d(np.asarray(latents_a, dtype=float))
    zb = np.atleast_2d(np.asarray(latents_b, dtype=float))
    if za.shape[0] != zb.shape[0]:
        raise ValueError(f"length mismatch: {za.shape[0]} vs {zb.shape[0]}")
    n = za.shape[0]
    if n < 3:
        raise ValueError("TopSim needs at least 3 data points")
    if n * (n - 1) // 2 <= max_pairs:
        da, db = pdist(za), pdist(zb)
    else:
        i, j = _pair_subsample(n, max_pairs, seed)
        da = np.linalg.norm(za[i] - za[j], axis=1)
        db = np.linalg.norm(zb[i] - zb[j], axis=1)
    if np.ptp(da) == 0 or np.ptp(db) == 0:
        raise NumericalError("TopSim undefined: a distance vector has zero variance")
    return float(spearmanr(da, db).correlation)


@dataclass(eq=False)
class RecallHeatmap:
    """
    matrix[i, j]: share of items labeled i whose sign was matched to label j.
    other[i]: share of items labeled i carrying a sign left unmatched.
    assignment maps sign -> matched label.
    """

    matrix: np.ndarray
    other: np.ndarray
    assignment: Dict[int, int] = field(default_factory=dict)
    counts: Optional[np.ndarray] = None

    @property
    def row_labels(self) -> List[str]:
        return [e.title for e in Emotion][: self.matrix.shape[0]]


def recall_heatmap(signs, labels, n_labels: int = N_EMOTIONS, K: Optional[int] = None) -> RecallHeatmap:
    """
    Matches signs to labels by a maximum-weight assignment on the label x sign
    contingency table and reports per-label recall over the matched columns.
    """
    s, y = _paired(signs, labels)
    s = s.astype(int)
    y = y.astype(int)
    K = int(s.max()) + 1 if K is None else K
    if s.min() < 0 or s.max() >= K:
        raise ValueError(f"signs must lie in [0, {K})")
    if y.min() < 0 or y.max() >= n_labels:
        raise ValueError(f"labels must lie in [0, {n_labels})")

    counts = np.zeros((n_labels, K), dtype=int)
    np.add.at(counts, (y, s), 1)
    rows, cols = linear_sum_assignment(counts, maximize=True)
    assignment = {int(c): int(r) for r, c in zip(rows, cols)}

    totals = counts.sum(axis=1).astype(float)
    safe = np.where(totals > 0, totals, 1.0)
    matrix = np.zeros((n_labels, n_labels))
    other = np.zeros(n_labels)
    for sign in range(K):
        if sign in assignment:
            matrix[:, assignment[sign]] += counts[:, sign]
        else:
            other += counts[:, sign]
    return RecallHeatmap(matrix / safe[:, None], other / safe, assignment, counts)


def diagonal_recall(heatmap: Union[RecallHeatmap, np.ndarray]) -> np.ndarray:
    """Per-label matched recall, i.e. the heatmap diagonal."""
    matrix = heatmap.matrix if isinstance(heatmap, RecallHeatmap) else np.asarray(heatmap, dtype=float)
    return np.diag(matrix).copy()


@dataclass(eq=False)
class PcaProjection:
    coords: np.ndarray
    explained_ratio: np.ndarray
    degenerate: bool = False


def pca_project(latents, out_dim: int = 2, tol: float = 1e-12) -> PcaProjection:
    """
    Mean-centered projection onto the top principal axes. Each axis is signed
    so its largest-magnitude loading is positive. Axes with (numerically) zero
    variance are dropped and the result is flagged degenerate.
    """
    z = np.atleast_2d(np.asarray(latents, dtype=float))
    if z.shape[0] <= out_dim:
        raise ValueError(f"need more than {out_dim} points, got {z.shape[0]}")
    n_comp = min(out_dim, z.shape[1])
    pca = PCA(n_components=n_comp, svd_solver="full").fit(z)
    total = float(np.var(z, axis=0, ddof=1).sum())
    keep = pca.explained_variance_ > tol * max(total, np.finfo(float).tiny)
    comps = pca.components_[keep]
    if comps.size:
        flip = np.sign(comps[np.arange(comps.shape[0]), np.abs(comps).argmax(axis=1)])
        comps = comps * flip[:, None]
    coords = (z - pca.mean_) @ comps.T
    degenerate = bool(keep.sum() < out_dim)
    if degenerate:
        logger.debug("PCA kept %d of %d components", keep.sum(), out_dim)
    return PcaProjection(coords, pca.explained_variance_ratio_[keep], degenerate)


@dataclass(eq=False)
class MetricsReport:
    round: int
    ari_a: float
    ari_b: float
    kappa: float
    dbs_a: float
    dbs_b: float
    topsim: float
    recall_a: Optional[RecallHeatmap] = None
    recall_b: Optional[RecallHeatmap] = None

    SCALARS = ("ari_a", "ari_b", "kappa", "dbs_a", "dbs_b", "topsim")

    def row(self) -> Dict[str, float]:
        out = {"round": self.round}
        out.update({k: getattr(self, k) for k in self.SCALARS})
        return out


def _dbs_or_nan(latents, signs, agent: str) -> float:
    try:
        return davies_bouldin(latents, signs)
    except (ValueError, NumericalError) as e:
        logger.warning("DBS for agent %s recorded as NaN: %s", agent, e)
        return float("nan")


def evaluate(state, labels, round_idx: Optional[int] = None) -> MetricsReport:
    """Every metric for the current state of a two-agent game."""
    a, b = state.agent_a, state.agent_b
    labels = np.asarray(labels, dtype=int)
    try:
        ts = topsim(a.latents, b.latents)
    except NumericalError as e:
        logger.warning("TopSim recorded as NaN: %s", e)
        ts = float("nan")
    return MetricsReport(
        round=state.round if round_idx is None else round_idx,
        ari_a=adjusted_rand_index(a.signs, labels),
        ari_b=adjusted_rand_index(b.signs, labels),
        kappa=cohens_kappa(a.signs, b.signs),
        dbs_a=_dbs_or_nan(a.latents, a.signs, a.name),
        dbs_b=_dbs_or_nan(b.latents, b.signs, b.name),
        topsim=ts,
        recall_a=recall_heatmap(a.signs, labels, K=a.K),
        recall_b=recall_heatmap(b.signs, labels, K=b.K),
    )
