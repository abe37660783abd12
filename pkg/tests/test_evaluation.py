"""Ranking, ranking-quality metrics, the benchmark harness, and the
synthetic planted-structure zoo."""

import json

import numpy as np
import pytest

from mzsel import errors
from mzsel.data import ScoreEntry, load_embeddings, load_manifest
from mzsel.evaluation import (
    EvalConfig,
    gen_synthetic_zoo,
    rank_models,
    run_benchmark,
    spearman_to_accuracy,
    topk_gain,
    trials_to_best,
)
from mzsel.rng import SplitMix64
from mzsel.scores import lfc_score, random_scores

from oracles import spearman_oracle


def entries(method="lfc", **scores):
    return [ScoreEntry(name, method, value) for name, value in scores.items()]


class TestRankModels:
    def test_two_models(self):
        assert rank_models(entries(a=0.9, b=0.1)) == ["a", "b"]

    def test_tie_broken_lexicographically(self):
        assert rank_models(entries(b=0.5, a=0.5)) == ["a", "b"]

    def test_output_is_permutation(self):
        rng = np.random.default_rng(0)
        scores = {f"m{i:02d}": float(rng.normal()) for i in range(30)}
        ranked = rank_models(entries(**scores))
        assert sorted(ranked) == sorted(scores)

    def test_duplicate_model_rejected(self):
        with pytest.raises(errors.DuplicateModel):
            rank_models([ScoreEntry("a", "lfc", 1.0), ScoreEntry("a", "lfc", 2.0)])

    def test_invariant_under_increasing_transform(self):
        rng = np.random.default_rng(1)
        scores = {f"m{i}": float(rng.normal()) for i in range(12)}
        base = rank_models(entries(**scores))
        warped = rank_models(entries(**{k: float(np.exp(3 * v)) for k, v
                                        in scores.items()}))
        assert base == warped


class TestSpearmanToAccuracy:
    def test_perfect_ranking(self):
        acc = {"a": 0.9, "b": 0.8, "c": 0.7}
        assert spearman_to_accuracy(entries(a=3.0, b=2.0, c=1.0), acc) == 1.0

    def test_reversed_ranking(self):
        acc = {"a": 0.9, "b": 0.8, "c": 0.7}
        assert spearman_to_accuracy(entries(a=1.0, b=2.0, c=3.0), acc) == -1.0

    def test_ties_match_exhaustive_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            scores = rng.integers(0, 4, size=10).astype(float)
            accs = rng.integers(0, 4, size=10).astype(float) / 4.0
            if np.ptp(scores) == 0 or np.ptp(accs) == 0:
                continue
            names = [f"m{i}" for i in range(10)]
            got = spearman_to_accuracy(
                [ScoreEntry(n, "lfc", s) for n, s in zip(names, scores)],
                dict(zip(names, accs)))
            assert got == pytest.approx(spearman_oracle(scores, accs), abs=1e-12)

    def test_insufficient_ground_truth(self):
        with pytest.raises(errors.InsufficientGroundTruth):
            spearman_to_accuracy(entries(a=1.0, b=2.0), {"a": 0.5, "b": 0.6})


class TestTrialsToBest:
    def test_best_scored_first(self):
        acc = {"a": 0.9, "b": 0.5}
        assert trials_to_best(entries(a=2.0, b=1.0), acc) == 1

    def test_best_scored_last(self):
        names = [f"m{i}" for i in range(6)]
        scores = {n: float(-i) for i, n in enumerate(names)}
        acc = {n: 0.1 for n in names}
        acc["m5"] = 0.9  # best accuracy has the worst score
        assert trials_to_best(entries(**scores), acc) == 6

    def test_accuracy_tie_broken_by_name(self):
        acc = {"a": 0.9, "b": 0.9, "c": 0.1}
        # both a and b have max accuracy; 'a' wins the tie-break
        assert trials_to_best(entries(b=3.0, a=2.0, c=1.0), acc) == 2

    def test_random_pipeline_mean_trials(self):
        # expected trials for a uniform permutation of n=30 is 15.5
        n = 30
        names = [f"m{i:02d}" for i in range(n)]
        acc = {name: 0.5 for name in names}
        acc["m07"] = 0.99
        total = 0
        trials = 20_000
        for seed in range(trials):
            total += trials_to_best(random_scores(names, seed), acc)
        assert abs(total / trials - 15.5) < 0.25

    def test_random_permutation_position_at_spec_scale(self):
        # same statistic via the permutation directly, 100k seeds within 0.1
        n, target = 30, 7
        total = 0
        for seed in range(100_000):
            total += SplitMix64(seed).permutation(n).index(target) + 1
        assert abs(total / 100_000 - 15.5) < 0.1

    def test_no_ground_truth(self):
        with pytest.raises(errors.InsufficientGroundTruth):
            trials_to_best(entries(a=1.0, b=2.0, c=3.0), {})


class TestTopkGain:
    ACC = {"resnet101_imagenet": 0.7754, "m1": 0.78, "m2": 0.76, "m3": 0.77}

    def _entries(self):
        return entries(m1=3.0, m2=2.0, m3=1.0, resnet101_imagenet=0.5)

    def test_top3_fixture(self):
        gain = topk_gain(self._entries(), self.ACC, 3, "resnet101_imagenet")
        assert gain == 0.78 - 0.7754

    def test_full_zoo_is_best_gain(self):
        gain = topk_gain(self._entries(), self.ACC, 4, "resnet101_imagenet")
        assert gain == max(self.ACC.values()) - 0.7754

    def test_baseline_top_ranked_zero_gain(self):
        acc = {"base": 0.9, "other": 0.5}
        assert topk_gain(entries(base=2.0, other=1.0), acc, 1, "base") == 0.0

    def test_nondecreasing_in_k(self):
        rng = np.random.default_rng(3)
        names = [f"m{i}" for i in range(10)]
        scores = {n: float(rng.normal()) for n in names}
        acc = {n: float(rng.uniform(0.3, 0.9)) for n in names}
        gains = [topk_gain(entries(**scores), acc, k, "m0")
                 for k in range(1, 11)]
        assert all(g2 >= g1 for g1, g2 in zip(gains, gains[1:]))

    def test_missing_baseline_accuracy(self):
        with pytest.raises(errors.InsufficientGroundTruth):
            topk_gain(entries(a=1.0, b=2.0), {"a": 0.5}, 1, "b")


@pytest.fixture(scope="module")
def planted_zoo(tmp_path_factory):
    out = tmp_path_factory.mktemp("zoo")
    manifest_path = gen_synthetic_zoo(
        out, n_models=8, n_classes=4, per_class=25, d=32,
        alignment_spectrum=list(np.linspace(0.1, 0.95, 8)), seed=11)
    return load_manifest(manifest_path)


class TestRunBenchmark:
    def test_planted_three_model_ranking(self, tmp_path):
        manifest_path = gen_synthetic_zoo(
            tmp_path, n_models=3, n_classes=3, per_class=20, d=16,
            alignment_spectrum=[0.1, 0.5, 0.9], seed=5)
        manifest = load_manifest(manifest_path)
        reports, skipped = run_benchmark(manifest, ["lfc"])
        assert not skipped
        assert reports[0].spearman_to_accuracy == 1.0
        assert reports[0].trials_to_best == 1

    def test_missing_inputs_skip_method_not_run(self, planted_zoo, tmp_path):
        doc_path = tmp_path / "partial.json"
        doc = {
            "task_name": "partial", "baseline_model": "synth00",
            "models": [
                {"name": m.name, "embedding_file": m.embedding_file}
                for m in planted_zoo.models
            ],
        }
        doc_path.write_text(json.dumps(doc))
        manifest = load_manifest(doc_path)
        reports, skipped = run_benchmark(manifest, ["lfc", "leep", "random"])
        assert {r.method for r in reports} == {"lfc", "random"}
        assert skipped and skipped[0]["method"] == "leep"
        assert "probs_file" in skipped[0]["reason"]

    def test_rerun_is_byte_identical(self, planted_zoo):
        config = EvalConfig(topk=(1, 3))
        methods = ["lfc", "lgc", "leep", "random"]
        first, _ = run_benchmark(planted_zoo, methods, config)
        second, _ = run_benchmark(planted_zoo, methods, config)
        a = json.dumps([r.to_dict() for r in first], sort_keys=True)
        b = json.dumps([r.to_dict() for r in second], sort_keys=True)
        assert a == b

    def test_jobs_do_not_change_results(self, planted_zoo):
        serial, _ = run_benchmark(planted_zoo, ["lfc", "lgc"], EvalConfig(jobs=1))
        parallel, _ = run_benchmark(planted_zoo, ["lfc", "lgc"], EvalConfig(jobs=4))
        assert json.dumps([r.to_dict() for r in serial], sort_keys=True) \
            == json.dumps([r.to_dict() for r in parallel], sort_keys=True)

    def test_uncapped_equals_precapped(self, tmp_path):
        # capping inside the harness must equal running on pre-capped files
        from mzsel.data import save_embeddings, stratified_subsample
        manifest_path = gen_synthetic_zoo(
            tmp_path / "full", n_models=3, n_classes=3, per_class=40, d=8,
            alignment_spectrum=[0.2, 0.5, 0.8], seed=13, per_class_cap=10)
        manifest = load_manifest(manifest_path)
        capped_reports, _ = run_benchmark(manifest, ["lfc"])

        pre_dir = tmp_path / "pre"
        pre_dir.mkdir()
        doc = {"task_name": manifest.task_name, "baseline_model":
               manifest.baseline_model, "seed": manifest.seed,
               "per_class_cap": 10**9, "models": []}
        for m in manifest.models:
            eset = stratified_subsample(load_embeddings(m.embedding_file),
                                        10, manifest.seed)
            out = pre_dir / f"{m.name}.mze"
            save_embeddings(eset, out)
            doc["models"].append({"name": m.name, "embedding_file": out.name,
                                  "finetune_accuracy": m.finetune_accuracy})
        pre_path = pre_dir / "manifest.json"
        pre_path.write_text(json.dumps(doc))
        pre_reports, _ = run_benchmark(load_manifest(pre_path), ["lfc"])
        assert [e.score for e in capped_reports[0].scores] \
            == [e.score for e in pre_reports[0].scores]

    def test_mismatched_labels_rejected(self, tmp_path):
        from mzsel.data import EmbeddingSet, Kind, save_embeddings
        rng = np.random.default_rng(14)
        a = EmbeddingSet(Kind.FEATURES, rng.normal(size=(6, 3)).astype(np.float32),
                         np.array([0, 0, 0, 1, 1, 1], np.uint32), 2)
        b = EmbeddingSet(Kind.FEATURES, rng.normal(size=(6, 3)).astype(np.float32),
                         np.array([0, 1, 0, 1, 0, 1], np.uint32), 2)
        save_embeddings(a, tmp_path / "a.mze")
        save_embeddings(b, tmp_path / "b.mze")
        doc = {"task_name": "bad", "baseline_model": "a",
               "models": [{"name": "a", "embedding_file": "a.mze"},
                          {"name": "b", "embedding_file": "b.mze"}]}
        (tmp_path / "manifest.json").write_text(json.dumps(doc))
        with pytest.raises(errors.ManifestError):
            run_benchmark(load_manifest(tmp_path / "manifest.json"), ["lfc"])


class TestSyntheticZoo:
    def test_noiseless_full_alignment_lfc_is_one(self, tmp_path):
        manifest_path = gen_synthetic_zoo(
            tmp_path, n_models=1, n_classes=3, per_class=10, d=8,
            alignment_spectrum=[1.0], seed=0, noise_scale=0.0)
        manifest = load_manifest(manifest_path)
        eset = load_embeddings(manifest.models[0].embedding_file)
        assert lfc_score(eset) == pytest.approx(1.0, abs=1e-9)

    def test_zero_alignment_lfc_near_zero(self, tmp_path):
        values = []
        for seed in range(5):
            manifest_path = gen_synthetic_zoo(
                tmp_path / str(seed), n_models=1, n_classes=4, per_class=25,
                d=32, alignment_spectrum=[0.0], seed=seed)
            manifest = load_manifest(manifest_path)
            values.append(lfc_score(load_embeddings(
                manifest.models[0].embedding_file)))
        assert max(abs(v) for v in values) < 0.1

    def test_monotone_spectrum_ranks_correctly(self, planted_zoo):
        reports, _ = run_benchmark(planted_zoo, ["lfc", "lgc", "leep"])
        for report in reports:
            assert report.spearman_to_accuracy >= 0.9
            assert report.trials_to_best <= 2

    def test_all_files_validate(self, planted_zoo):
        for m in planted_zoo.models:
            for path in (m.embedding_file, m.gradient_file, m.probs_file,
                         m.probe_file, m.source_means_file):
                load_embeddings(path)

    def test_bad_spectrum_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            gen_synthetic_zoo(tmp_path, 2, 2, 5, 4, [0.5], seed=0)
        with pytest.raises(ValueError):
            gen_synthetic_zoo(tmp_path, 1, 2, 5, 4, [1.5], seed=0)
