"""Model-selection scores.

Seven methods share the signature "per-sample inputs in, one real out":

  * lfc / lgc   -- entrywise Pearson correlation between a Gram matrix
                   (features, respectively projected gradients) and the
                   label-agreement kernel; higher means same-class samples
                   look alike to the model.
  * leep        -- log-likelihood of the target labels under an empirical
                   source-class -> target-class transfer classifier built
                   from the source model's output probabilities.
  * rsa         -- Spearman correlation between the representation
                   dissimilarity matrices of the candidate model and a small
                   probe network trained on the target task.
  * domsim      -- exp(-gamma * EMD) between per-class mean features of the
                   source and target datasets.
  * featmet     -- weighted combination of two per-row sparsity statistics.
  * random      -- seeded uniform permutation, the no-information baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .data import EmbeddingSet, Kind, ScoreEntry
from .errors import (
    ConstantRow,
    DegenerateRanking,
    InvariantViolation,
    KindMismatch,
    NoSurvivingClass,
    SolverNonConvergence,
)
from .kernels import KernelKind, KernelMatrix, _symmetric_product, gram_kernel, \
    label_kernel, matrix_pearson, random_projection
from .rng import SplitMix64
from .stats import spearman

DEFAULT_PROJECTION_DIM = 10_000
DEFAULT_EMD_GAMMA = 0.01
DEFAULT_MIN_CLASS_COUNT = 5
DEAD_UNIT_THRESHOLD = 1e-6
LEEP_LOG_FLOOR = 1e-300


# --- label/feature and label/gradient correlation ---------------------------------


def lfc_score(features: EmbeddingSet) -> float:
    """Correlation between the feature Gram matrix and the label kernel."""
    if features.kind != Kind.FEATURES:
        raise KindMismatch("lfc expects a features set")
    return matrix_pearson(gram_kernel(features), label_kernel(features.labels))


def lgc_score(gradients: EmbeddingSet, k: int = DEFAULT_PROJECTION_DIM,
              seed: int = 0) -> float:
    """Correlation between the (projected) gradient Gram matrix and the label
    kernel. Gradients of dimension <= k pass through unprojected."""
    if gradients.kind != Kind.GRADIENTS:
        raise KindMismatch("lgc expects a gradients set")
    projected = random_projection(gradients, k, seed)
    return matrix_pearson(gram_kernel(projected), label_kernel(projected.labels))


# --- leep --------------------------------------------------------------------------


@dataclass(frozen=True)
class LeepResult:
    score: float
    floored_samples: int      # samples whose mixture hit the log floor
    empty_source_dims: int    # source dimensions with zero total mass, skipped


def leep(probs: EmbeddingSet) -> LeepResult:
    """Mean log-likelihood of the target labels under the empirical
    source->target classifier; always <= 0, higher is better.

    Source dimensions with zero total probability mass carry no evidence and
    are skipped (they contribute nothing to any mixture); mixtures that
    underflow are floored at 1e-300 and counted.
    """
    if probs.kind != Kind.PROBABILITIES:
        raise KindMismatch("leep expects a probabilities set")
    theta = probs.vectors.astype(np.float64)
    labels = probs.labels.astype(np.int64)
    n = probs.n
    counts = np.bincount(labels, minlength=probs.num_classes)
    if (counts == 0).any():
        missing = int(np.flatnonzero(counts == 0)[0])
        raise InvariantViolation(f"target class {missing} has no samples")

    onehot = np.zeros((n, probs.num_classes), dtype=np.float64)
    onehot[np.arange(n), labels] = 1.0
    joint = (onehot.T @ theta) / n                  # (C_tgt, C_src)
    col_mass = joint.sum(axis=0)
    alive = col_mass > 0.0
    cond = np.zeros_like(joint)
    cond[:, alive] = joint[:, alive] / col_mass[alive]

    mixture = np.einsum("iz,iz->i", theta, cond[labels, :])
    floored = int((mixture < LEEP_LOG_FLOOR).sum())
    score = float(np.log(np.maximum(mixture, LEEP_LOG_FLOOR)).mean())
    return LeepResult(score, floored, int((~alive).sum()))


def leep_score(probs: EmbeddingSet) -> float:
    return leep(probs).score


# --- representation dissimilarity / rsa ------------------------------------------


def rdm(features: EmbeddingSet) -> KernelMatrix:
    """Representation dissimilarity matrix: 1 - Pearson(row_i, row_j), zero
    diagonal. Rows must be non-constant for per-row correlation to exist."""
    if features.kind != Kind.FEATURES:
        raise KindMismatch("rdm expects a features set")
    x = features.vectors.astype(np.float64)
    centered = x - x.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(centered, axis=1)
    dead = np.flatnonzero(norms == 0.0)
    if dead.size:
        raise ConstantRow(int(dead[0]))
    normalized = centered / norms[:, None]
    entries = 1.0 - _symmetric_product(normalized)
    np.fill_diagonal(entries, 0.0)
    return KernelMatrix(entries, KernelKind.DISSIMILARITY)


def rsa_score(model_features: EmbeddingSet, probe_features: EmbeddingSet) -> float:
    """Spearman correlation between the strict upper triangles of the model's
    and the probe's dissimilarity matrices (identical sample ordering)."""
    if model_features.n != probe_features.n:
        raise ValueError("model and probe sets must describe the same samples")
    iu = np.triu_indices(model_features.n, k=1)
    a = rdm(model_features).entries[iu]
    b = rdm(probe_features).entries[iu]
    if a.size == 0 or np.ptp(a) == 0.0 or np.ptp(b) == 0.0:
        raise DegenerateRanking("constant dissimilarity triangle")
    return spearman(a, b)


# --- class means and earth mover's distance ----------------------------------------


def class_means(eset: EmbeddingSet,
                min_count: int = DEFAULT_MIN_CLASS_COUNT
                ) -> tuple[np.ndarray, np.ndarray]:
    """Per-class mean vectors for classes with at least `min_count` samples,
    plus class weights (counts normalized to sum to 1 over survivors)."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = eset.class_counts()
    survivors = np.flatnonzero(counts >= min_count)
    if survivors.size == 0:
        raise NoSurvivingClass(
            f"no class has >= {min_count} samples (max count {int(counts.max())})")
    x = eset.vectors.astype(np.float64)
    means = np.stack([x[eset.labels == c].mean(axis=0) for c in survivors])
    weights = counts[survivors].astype(np.float64)
    weights /= weights.sum()
    return means, weights


@dataclass(frozen=True)
class TransportPlan:
    """Optimal mass flows between two weighted point sets and their cost."""

    flows: np.ndarray  # (m, k), non-negative
    cost: float

    def validate(self, weights_a: np.ndarray, weights_b: np.ndarray,
                 dist: np.ndarray) -> None:
        if (self.flows < -1e-12).any():
            raise InvariantViolation("negative flow")
        if np.abs(self.flows.sum(axis=1) - weights_a).max() > 1e-9:
            raise InvariantViolation("flow row sums do not match source weights")
        if np.abs(self.flows.sum(axis=0) - weights_b).max() > 1e-9:
            raise InvariantViolation("flow column sums do not match sink weights")
        if abs(float(np.sum(self.flows * dist)) - self.cost) > 1e-9:
            raise InvariantViolation("cost inconsistent with flows")


def emd(means_a: np.ndarray, weights_a: np.ndarray,
        means_b: np.ndarray, weights_b: np.ndarray) -> TransportPlan:
    """Exact earth mover's distance between weighted point sets under the
    Euclidean ground metric, solved as a balanced transportation LP."""
    means_a = np.asarray(means_a, dtype=np.float64)
    means_b = np.asarray(means_b, dtype=np.float64)
    weights_a = np.asarray(weights_a, dtype=np.float64)
    weights_b = np.asarray(weights_b, dtype=np.float64)
    if abs(weights_a.sum() - 1.0) > 1e-9 or abs(weights_b.sum() - 1.0) > 1e-9:
        raise ValueError("weights must each sum to 1")
    if (weights_a <= 0).any() or (weights_b <= 0).any():
        raise ValueError("weights must be strictly positive")
    m, k = weights_a.shape[0], weights_b.shape[0]
    diff = means_a[:, None, :] - means_b[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))

    # equality constraints: row sums = weights_a, column sums = weights_b
    a_eq = np.zeros((m + k, m * k))
    for i in range(m):
        a_eq[i, i * k:(i + 1) * k] = 1.0
    for j in range(k):
        a_eq[m + j, j::k] = 1.0
    b_eq = np.concatenate([weights_a, weights_b])
    res = linprog(dist.ravel(), A_eq=a_eq, b_eq=b_eq,
                  bounds=(0.0, None), method="highs")
    if not res.success:
        raise SolverNonConvergence(
            f"transportation LP failed on a feasible balanced instance: {res.message}")
    flows = np.maximum(res.x.reshape(m, k), 0.0)
    plan = TransportPlan(flows, float(np.sum(flows * dist)))
    plan.validate(weights_a, weights_b, dist)
    return plan


def domain_similarity_score(source_means: EmbeddingSet, target: EmbeddingSet,
                            gamma: float = DEFAULT_EMD_GAMMA,
                            min_count: int = DEFAULT_MIN_CLASS_COUNT) -> float:
    """exp(-gamma * EMD) between source and target per-class mean features.

    The source set is typically a precomputed means file (one row per class,
    uniform weights follow from the counts); the minimum-count exclusion
    applies to the raw target samples only. Any gamma > 0 yields the same
    ranking, so downstream metrics do not depend on its value.
    """
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    src_means, src_weights = class_means(source_means, min_count=1)
    tgt_means, tgt_weights = class_means(target, min_count=min_count)
    plan = emd(src_means, src_weights, tgt_means, tgt_weights)
    return math.exp(-gamma * plan.cost)


# --- feature sparsity metrics ------------------------------------------------------


@dataclass(frozen=True)
class FeatureMetricsResult:
    score: float
    dead_unit_sparsity: float
    hoyer_sparsity: float
    zero_rows: int  # rows with zero norm; counted as maximally sparse


def feature_metrics(features: EmbeddingSet,
                    weights: tuple[float, float] = (0.5, 0.5)) -> FeatureMetricsResult:
    """Weighted sum of two per-row sparsity statistics: the fraction of
    near-zero entries (|v| < 1e-6), and the Hoyer ratio
    (sqrt(d) - |v|_1 / |v|_2) / (sqrt(d) - 1). One-hot rows score 1,
    constant rows score 0; zero rows are treated as maximally sparse and
    flagged. For d == 1 the Hoyer ratio is defined as 0."""
    if features.kind != Kind.FEATURES:
        raise KindMismatch("feature metrics expect a features set")
    x = features.vectors.astype(np.float64)
    n, d = x.shape
    dead = float((np.abs(x) < DEAD_UNIT_THRESHOLD).mean())

    l1 = np.abs(x).sum(axis=1)
    l2 = np.linalg.norm(x, axis=1)
    zero_rows = int((l2 == 0.0).sum())
    if d == 1:
        hoyer_rows = np.where(l2 == 0.0, 1.0, 0.0)
    else:
        root_d = math.sqrt(d)
        with np.errstate(invalid="ignore", divide="ignore"):
            hoyer_rows = (root_d - l1 / l2) / (root_d - 1.0)
        hoyer_rows = np.where(l2 == 0.0, 1.0, hoyer_rows)
    hoyer = float(hoyer_rows.mean())
    w1, w2 = weights
    return FeatureMetricsResult(w1 * dead + w2 * hoyer, dead, hoyer, zero_rows)


def feature_metrics_score(features: EmbeddingSet,
                          weights: tuple[float, float] = (0.5, 0.5)) -> float:
    return feature_metrics(features, weights).score


# --- random baseline ------------------------------------------------------------


def random_scores(model_names: list[str], seed: int) -> list[ScoreEntry]:
    """Seeded uniform permutation of the zoo encoded as scores: the model at
    permuted position i receives score n - i."""
    n = len(model_names)
    perm = SplitMix64(seed).permutation(n)
    return [ScoreEntry(model_names[perm[i]], "random", float(n - i))
            for i in range(n)]
