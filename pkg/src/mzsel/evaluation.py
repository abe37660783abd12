"""Benchmark harness: run selection methods over a zoo manifest, rank the
models, and measure ranking quality against ground-truth fine-tuning
accuracies.

All methods are scored on one shared stratified subsample per task, so
differences between methods never come from different data draws. Every
tie-break is deterministic (ascending model name), making reports suitable
as golden files.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import scores as sc
from .data import (
    EmbeddingSet,
    Kind,
    ModelEntry,
    ScoreEntry,
    ZooManifest,
    load_embeddings,
    save_embeddings,
    save_manifest,
    stratified_subsample_indices,
)
from .errors import (
    DuplicateModel,
    InsufficientGroundTruth,
    ManifestError,
    MissingInput,
)
from .rng import SplitMix64, derive_seed
from .stats import spearman

METHOD_INPUTS: dict[str, tuple[str, ...]] = {
    "lfc": ("embedding_file",),
    "lgc": ("gradient_file",),
    "leep": ("probs_file",),
    "rsa": ("embedding_file", "probe_file"),
    "domsim": ("embedding_file", "source_means_file"),
    "featmet": ("embedding_file",),
    "random": (),
}


@dataclass(frozen=True)
class EvalConfig:
    per_class_cap: int | None = None   # None: use the manifest value
    seed: int | None = None            # None: use the manifest value
    projection_dim: int = sc.DEFAULT_PROJECTION_DIM
    gamma: float = sc.DEFAULT_EMD_GAMMA
    fm_weights: tuple[float, float] = (0.5, 0.5)
    min_class_count: int = sc.DEFAULT_MIN_CLASS_COUNT
    topk: tuple[int, ...] = (1, 3)
    jobs: int = 1


@dataclass
class EvalReport:
    task: str
    method: str
    params: dict
    scores: list[ScoreEntry]
    ranked_models: list[str]
    spearman_to_accuracy: float | None
    trials_to_best: int | None
    topk_gain: dict[int, float] | None
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "method": self.method,
            "params": self.params,
            "scores": [{"task": self.task, "method": s.method, "model": s.model,
                        "score": s.score, "params": self.params}
                       for s in self.scores],
            "ranked_models": self.ranked_models,
            "spearman_to_accuracy": self.spearman_to_accuracy,
            "trials_to_best": self.trials_to_best,
            "topk_gain": {str(k): v for k, v in (self.topk_gain or {}).items()},
            "warnings": self.warnings,
        }


# --- ranking metrics ---------------------------------------------------------------


def rank_models(entries: list[ScoreEntry]) -> list[str]:
    """Models in descending score order, ties broken by ascending name."""
    names = [e.model for e in entries]
    if len(set(names)) != len(names):
        raise DuplicateModel("duplicate model in score list")
    return [e.model for e in sorted(entries, key=lambda e: (-e.score, e.model))]


def _best_model(accuracies: dict[str, float]) -> str:
    best_acc = max(accuracies.values())
    return min(m for m, a in accuracies.items() if a == best_acc)


def spearman_to_accuracy(entries: list[ScoreEntry],
                         accuracies: dict[str, float]) -> float:
    """Spearman rank correlation between scores and fine-tuning accuracies
    over the models that have ground truth (at least 3 required)."""
    known = [e for e in entries if e.model in accuracies]
    if len(known) < 3:
        raise InsufficientGroundTruth(
            f"need >= 3 models with accuracies, have {len(known)}")
    s = np.array([e.score for e in known])
    a = np.array([accuracies[e.model] for e in known])
    return spearman(s, a)


def trials_to_best(entries: list[ScoreEntry],
                   accuracies: dict[str, float]) -> int:
    """1-indexed rank position at which score-ordered search first hits the
    highest-accuracy model (accuracy ties broken by ascending name)."""
    if not accuracies:
        raise InsufficientGroundTruth("no ground-truth accuracies")
    ranked = rank_models(entries)
    best = _best_model(accuracies)
    if best not in ranked:
        raise InsufficientGroundTruth(f"best model '{best}' has no score")
    return ranked.index(best) + 1


def topk_gain(entries: list[ScoreEntry], accuracies: dict[str, float],
              k: int, baseline_model: str) -> float:
    """Best accuracy among the top-k ranked models minus the baseline
    model's accuracy (may be negative)."""
    if baseline_model not in accuracies:
        raise InsufficientGroundTruth(
            f"baseline '{baseline_model}' has no ground-truth accuracy")
    ranked = rank_models(entries)[:k]
    known = [accuracies[m] for m in ranked if m in accuracies]
    if not known:
        raise InsufficientGroundTruth("no top-k model has a ground-truth accuracy")
    return max(known) - accuracies[baseline_model]


# --- harness ---------------------------------------------------------------------


class _TaskData:
    """Loads, label-checks, and subsamples the per-model input files of one
    task; caches by path so shared files load once."""

    def __init__(self, manifest: ZooManifest, cap: int, seed: int):
        self.manifest = manifest
        self.cap = cap
        self.seed = seed
        self._cache: dict[str, EmbeddingSet] = {}
        self._indices: np.ndarray | None = None
        self._ref_labels: np.ndarray | None = None

    def _subsample(self, eset: EmbeddingSet) -> EmbeddingSet:
        if self._ref_labels is None:
            self._ref_labels = eset.labels
            self._indices = stratified_subsample_indices(
                eset.labels, eset.num_classes, self.cap, self.seed)
        elif not np.array_equal(eset.labels, self._ref_labels):
            raise ManifestError(
                "input files disagree on sample labels; the zoo must share "
                "one target sample set")
        return eset.take(self._indices)

    def target(self, path: str) -> EmbeddingSet:
        """A target-task file: subsampled once per task, shared draw."""
        key = f"target:{path}"
        if key not in self._cache:
            self._cache[key] = self._subsample(load_embeddings(path))
        return self._cache[key]

    def raw(self, path: str) -> EmbeddingSet:
        """A source-side file (e.g. source class means): never subsampled."""
        key = f"raw:{path}"
        if key not in self._cache:
            self._cache[key] = load_embeddings(path)
        return self._cache[key]


def _check_inputs(manifest: ZooManifest, method: str) -> None:
    for model in manifest.models:
        for field_name in METHOD_INPUTS[method]:
            path = getattr(model, field_name)
            if path is None:
                raise MissingInput(model.name, method, field_name)
            if not Path(path).is_file():
                raise MissingInput(model.name, method,
                                   f"{field_name} ({path}: not found)")


def _score_model(method: str, model: ModelEntry, data: _TaskData,
                 config: EvalConfig, seed: int) -> tuple[float, list[str]]:
    warnings: list[str] = []
    if method == "lfc":
        value = sc.lfc_score(data.target(model.embedding_file))
    elif method == "lgc":
        value = sc.lgc_score(data.target(model.gradient_file),
                             k=config.projection_dim, seed=seed)
    elif method == "leep":
        result = sc.leep(data.target(model.probs_file))
        if result.floored_samples:
            warnings.append(f"{model.name}: {result.floored_samples} samples hit "
                            "the leep log floor")
        if result.empty_source_dims:
            warnings.append(f"{model.name}: {result.empty_source_dims} empty "
                            "source dimensions skipped")
        value = result.score
    elif method == "rsa":
        value = sc.rsa_score(data.target(model.embedding_file),
                             data.target(model.probe_file))
    elif method == "domsim":
        value = sc.domain_similarity_score(
            data.raw(model.source_means_file),
            data.target(model.embedding_file),
            gamma=config.gamma, min_count=config.min_class_count)
    elif method == "featmet":
        result = sc.feature_metrics(data.target(model.embedding_file),
                                    weights=config.fm_weights)
        if result.zero_rows:
            warnings.append(f"{model.name}: {result.zero_rows} zero rows treated "
                            "as maximally sparse")
        value = result.score
    else:
        raise ValueError(f"unknown method '{method}'")
    return value, warnings


def run_benchmark(manifest: ZooManifest, methods: list[str],
                  config: EvalConfig = EvalConfig()
                  ) -> tuple[list[EvalReport], list[dict]]:
    """Score every model with every requested method on one shared subsample
    and attach ranking-quality metrics.

    Methods whose required inputs are missing for any model are skipped
    zoo-wide and reported in the second return value instead of crashing.
    """
    cap = config.per_class_cap if config.per_class_cap is not None else manifest.per_class_cap
    seed = config.seed if config.seed is not None else manifest.seed
    data = _TaskData(manifest, cap, seed)
    accuracies = {m.name: m.finetune_accuracy for m in manifest.models
                  if m.finetune_accuracy is not None}

    reports: list[EvalReport] = []
    skipped: list[dict] = []
    for method in methods:
        if method not in METHOD_INPUTS:
            raise ValueError(f"unknown method '{method}'")
        try:
            _check_inputs(manifest, method)
        except MissingInput as exc:
            skipped.append({"method": method, "reason": str(exc)})
            continue

        warnings: list[str] = []
        if method == "random":
            entries = sc.random_scores([m.name for m in manifest.models], seed)
        else:
            def job(model: ModelEntry) -> tuple[float, list[str]]:
                return _score_model(method, model, data, config, seed)

            if config.jobs > 1:
                # threads share the loaded-file cache; warm it serially so the
                # shared subsample draw happens exactly once
                for model in manifest.models:
                    for field_name in METHOD_INPUTS[method]:
                        path = getattr(model, field_name)
                        if field_name == "source_means_file":
                            data.raw(path)
                        else:
                            data.target(path)
                with ThreadPoolExecutor(max_workers=config.jobs) as pool:
                    results = list(pool.map(job, manifest.models))
            else:
                results = [job(m) for m in manifest.models]
            entries = []
            for model, (value, notes) in zip(manifest.models, results):
                entries.append(ScoreEntry(model.name, method, value))
                warnings.extend(notes)

        if method == "featmet" and config.fm_weights != (0.5, 0.5):
            warnings.append(
                f"featmet uses non-default weights {config.fm_weights}")

        params = _method_params(method, config, seed)
        ranked = rank_models(entries)
        rho = trials = gains = None
        if accuracies:
            try:
                rho = spearman_to_accuracy(entries, accuracies)
            except InsufficientGroundTruth as exc:
                warnings.append(str(exc))
            try:
                trials = trials_to_best(entries, accuracies)
                gains = {k: topk_gain(entries, accuracies, k, manifest.baseline_model)
                         for k in config.topk}
            except InsufficientGroundTruth as exc:
                warnings.append(str(exc))
        else:
            warnings.append("no ground-truth accuracies; ranking metrics omitted")
        reports.append(EvalReport(manifest.task_name, method, params, entries,
                                  ranked, rho, trials, gains, warnings))
    return reports, skipped


def _method_params(method: str, config: EvalConfig, seed: int) -> dict:
    params: dict = {"seed": seed}
    if method == "lgc":
        params["k"] = config.projection_dim
    if method == "domsim":
        params["gamma"] = config.gamma
        params["min_class_count"] = config.min_class_count
    if method == "featmet":
        params["weights"] = list(config.fm_weights)
    return params


# --- synthetic zoo -------------------------------------------------------------------


CENTROID_SEPARATION = 3.0
PROB_SHARPNESS = 4.0
SOURCE_SHIFT = 60.0


def gen_synthetic_zoo(out_dir, n_models: int, n_classes: int, per_class: int,
                      d: int, alignment_spectrum: list[float], seed: int,
                      per_class_cap: int = 25, noise_scale: float = 1.0) -> Path:
    """Write a desk-scale zoo with planted ranking structure.

    Model m has alignment a in [0, 1]: its class centroids sit at distance
    proportional to a (separation 3a along orthogonal class axes) under
    within-class noise of scale `noise_scale`, its source-model probabilities
    sharpen toward the true class as a grows, and its synthetic fine-tuning
    accuracy is the monotone map 0.5 + 0.45 a. Source class means for the
    domain-similarity method drift away from the target as (1 - a). Returns
    the manifest path.
    """
    if len(alignment_spectrum) != n_models:
        raise ValueError("need one alignment value per model")
    if any(not 0.0 <= a <= 1.0 for a in alignment_spectrum):
        raise ValueError("alignment values must lie in [0, 1]")
    if d < n_classes:
        raise ValueError("need d >= n_classes for orthogonal class centroids")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    n = n_classes * per_class
    labels = np.arange(n, dtype=np.uint32) % n_classes

    models = []
    for m, a in enumerate(alignment_spectrum):
        name = f"synth{m:02d}"
        centroids = np.zeros((n_classes, d))
        centroids[np.arange(n_classes), np.arange(n_classes)] = a * CENTROID_SEPARATION

        def clustered(tag: str) -> np.ndarray:
            rng = SplitMix64(derive_seed(seed, f"{name}/{tag}"))
            noise = rng.gaussians(n * d).reshape(n, d)
            return centroids[labels] + noise_scale * noise

        features = clustered("features")
        gradients = clustered("gradients")
        prng = SplitMix64(derive_seed(seed, f"{name}/probs"))
        logits = PROB_SHARPNESS * a * np.eye(n_classes)[labels] \
            + 0.5 * prng.gaussians(n * n_classes).reshape(n, n_classes)
        logits -= logits.max(axis=1, keepdims=True)
        probs = np.exp(logits)
        probs /= probs.sum(axis=1, keepdims=True)

        prober = SplitMix64(derive_seed(seed, f"{name}/probe"))
        probe_centroids = np.zeros((n_classes, d))
        probe_centroids[np.arange(n_classes), np.arange(n_classes)] = \
            0.9 * CENTROID_SEPARATION
        probe = probe_centroids[labels] + prober.gaussians(n * d).reshape(n, d)

        source_means = centroids.copy()
        source_means[:, -1] += (1.0 - a) * SOURCE_SHIFT

        paths = {}
        for tag, kind, array, labs, ncls in (
                ("features", Kind.FEATURES, features, labels, n_classes),
                ("gradients", Kind.GRADIENTS, gradients, labels, n_classes),
                ("probs", Kind.PROBABILITIES, probs, labels, n_classes),
                ("probe", Kind.FEATURES, probe, labels, n_classes),
                ("source_means", Kind.FEATURES, source_means,
                 np.arange(n_classes, dtype=np.uint32), n_classes)):
            path = out_dir / f"{name}_{tag}.mze"
            save_embeddings(EmbeddingSet(kind, array.astype(np.float32),
                                         labs, ncls), path)
            paths[tag] = str(path)

        models.append(ModelEntry(
            name=name,
            embedding_file=paths["features"],
            gradient_file=paths["gradients"],
            probs_file=paths["probs"],
            probe_file=paths["probe"],
            source_means_file=paths["source_means"],
            finetune_accuracy=0.5 + 0.45 * a,
        ))

    manifest = ZooManifest(
        task_name=f"synthetic-{n_models}x{n_classes}",
        baseline_model=models[0].name,
        models=tuple(models),
        per_class_cap=per_class_cap,
        seed=seed,
    )
    manifest_path = out_dir / "manifest.json"
    save_manifest(manifest, manifest_path)
    return manifest_path
