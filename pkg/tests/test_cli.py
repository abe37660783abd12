"""The CLI must be a thin shell: results byte-equal to library calls,
documented exit codes, machine output to --out, human summary to stdout."""

import json

import numpy as np
import pytest

from mzsel.cli import main
from mzsel.data import (
    EmbeddingSet,
    Kind,
    load_embeddings,
    load_manifest,
    save_embeddings,
)
from mzsel.evaluation import gen_synthetic_zoo
from mzsel.scores import lfc_score


@pytest.fixture()
def features_file(tmp_path):
    rng = np.random.default_rng(0)
    labels = np.array([0, 0, 0, 1, 1, 1], dtype=np.uint32)
    centroids = np.array([[2.5, 0.0, 0.0], [0.0, 2.5, 0.0]])
    vectors = (centroids[labels] + rng.normal(size=(6, 3))).astype(np.float32)
    path = tmp_path / "feats.mze"
    save_embeddings(EmbeddingSet(Kind.FEATURES, vectors, labels, 2), path)
    return path


@pytest.fixture(scope="module")
def zoo(tmp_path_factory):
    out = tmp_path_factory.mktemp("clizoo")
    return gen_synthetic_zoo(out, n_models=4, n_classes=3, per_class=15, d=12,
                             alignment_spectrum=[0.2, 0.5, 0.7, 0.9], seed=3)


class TestScoreCommand:
    def test_happy_path_matches_library(self, features_file, tmp_path, capsys):
        out = tmp_path / "score.json"
        code = main(["score", "--method", "lfc", "--embeddings",
                     str(features_file), "--out", str(out)])
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["method"] == "lfc"
        assert doc["score"] == lfc_score(load_embeddings(features_file))
        # byte-for-byte: the CLI emission is exactly the sorted-keys dump
        expected = json.dumps(doc, indent=2, sort_keys=True) + "\n"
        assert out.read_bytes() == expected.encode()
        assert "lfc score" in capsys.readouterr().out

    def test_unknown_method_usage_error(self, features_file, tmp_path):
        out = tmp_path / "never.json"
        code = main(["score", "--method", "foo", "--embeddings",
                     str(features_file), "--out", str(out)])
        assert code == 1
        assert not out.exists()

    def test_rsa_requires_probe(self, features_file):
        assert main(["score", "--method", "rsa", "--embeddings",
                     str(features_file)]) == 1

    def test_missing_file_is_error_not_crash(self, tmp_path):
        assert main(["score", "--method", "lfc", "--embeddings",
                     str(tmp_path / "absent.mze")]) == 1


class TestEvalCommand:
    def test_full_run_exit_zero(self, zoo, tmp_path):
        out = tmp_path / "report.json"
        code = main(["eval", "--manifest", str(zoo), "--methods",
                     "lfc,lgc,leep,rsa,domsim,featmet,random",
                     "--topk", "1,3", "--out", str(out)])
        assert code == 0
        doc = json.loads(out.read_text())
        methods = [r["method"] for r in doc["tasks"][0]["reports"]]
        assert methods == ["lfc", "lgc", "leep", "rsa", "domsim", "featmet",
                           "random"]

    def test_missing_inputs_exit_two(self, zoo, tmp_path):
        manifest = load_manifest(zoo)
        doc = {"task_name": "partial", "baseline_model": manifest.models[0].name,
               "models": [{"name": m.name, "embedding_file": m.embedding_file,
                           "finetune_accuracy": m.finetune_accuracy}
                          for m in manifest.models]}
        path = tmp_path / "partial.json"
        path.write_text(json.dumps(doc))
        out = tmp_path / "report.json"
        code = main(["eval", "--manifest", str(path), "--methods",
                     "lfc,leep,rsa", "--out", str(out)])
        assert code == 2
        report = json.loads(out.read_text())
        skipped = {s["method"] for s in report["tasks"][0]["skipped_methods"]}
        assert skipped == {"leep", "rsa"}
        assert [r["method"] for r in report["tasks"][0]["reports"]] == ["lfc"]

    def test_rerun_byte_identical(self, zoo, tmp_path):
        outs = []
        for name in ("a.json", "b.json"):
            out = tmp_path / name
            assert main(["eval", "--manifest", str(zoo), "--methods",
                         "lfc,random", "--seed", "9", "--out", str(out)]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_macro_average_over_two_tasks(self, zoo, tmp_path):
        out = tmp_path / "multi.json"
        code = main(["eval", "--manifest", str(zoo), "--manifest", str(zoo),
                     "--methods", "lfc", "--out", str(out)])
        assert code == 0
        doc = json.loads(out.read_text())
        assert len(doc["tasks"]) == 2
        macro = doc["macro_average"]["lfc"]
        assert macro["spearman_to_accuracy"] == pytest.approx(
            doc["tasks"][0]["reports"][0]["spearman_to_accuracy"])

    def test_unknown_method_rejected(self, zoo):
        assert main(["eval", "--manifest", str(zoo), "--methods", "lfc,nope"]) == 1


class TestSimulateCommand:
    def test_csv_and_summary(self, features_file, tmp_path):
        csv_path = tmp_path / "trace.csv"
        json_path = tmp_path / "summary.json"
        code = main(["simulate", "--embeddings", str(features_file),
                     "--eta", "0.5", "--times", "0,0.1,1",
                     "--out-csv", str(csv_path), "--out", str(json_path)])
        assert code == 0
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0] == "t,loss,first_order_estimate"
        assert len(lines) == 4
        first = [float(v) for v in lines[1].split(",")]
        assert first[0] == 0.0
        assert first[1] == pytest.approx(first[2], rel=1e-12)
        summary = json.loads(json_path.read_text())
        assert summary["jensen_lhs"] <= summary["jensen_rhs"] + 1e-9
        assert summary["training_speed"] > 0.0

    def test_library_equivalence(self, features_file, tmp_path):
        from mzsel.dynamics import (generalization_score, jensen_gap,
                                    signed_labels, training_speed)
        from mzsel.kernels import gram_kernel
        json_path = tmp_path / "summary.json"
        main(["simulate", "--embeddings", str(features_file),
              "--out", str(json_path), "--out-csv", str(tmp_path / "t.csv")])
        summary = json.loads(json_path.read_text())
        eset = load_embeddings(features_file)
        kernel = gram_kernel(eset)
        y = signed_labels(eset.labels, 2)
        assert summary["training_speed"] == training_speed(kernel, y)
        assert summary["generalization_score"] == generalization_score(kernel, y)
        lhs, rhs = jensen_gap(kernel, y)
        assert summary["jensen_lhs"] == lhs and summary["jensen_rhs"] == rhs

    def test_requires_exactly_one_input(self, features_file):
        assert main(["simulate"]) == 1
        assert main(["simulate", "--embeddings", str(features_file),
                     "--kernel", "x"]) == 1

    def test_multiclass_task_clean_error(self, tmp_path, capsys):
        rng = np.random.default_rng(5)
        path = tmp_path / "tri.mze"
        save_embeddings(EmbeddingSet(Kind.FEATURES,
                                     rng.normal(size=(6, 2)).astype(np.float32),
                                     np.array([0, 1, 2] * 2, np.uint32), 3),
                        path)
        assert main(["simulate", "--embeddings", str(path)]) == 1
        assert "binary" in capsys.readouterr().err


class TestFileCommands:
    def test_project_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        src = tmp_path / "g.mze"
        save_embeddings(EmbeddingSet(Kind.GRADIENTS,
                                     rng.normal(size=(5, 700)).astype(np.float32),
                                     np.zeros(5, np.uint32), 1), src)
        dst = tmp_path / "p.mze"
        assert main(["project", "--embeddings", str(src), "--k", "100",
                     "--seed", "4", "--out-file", str(dst)]) == 0
        projected = load_embeddings(dst)
        assert projected.d == 100
        from mzsel.kernels import random_projection
        expected = random_projection(load_embeddings(src), 100, 4)
        assert projected == expected

    def test_subsample_matches_library(self, tmp_path):
        rng = np.random.default_rng(2)
        labels = (np.arange(40) % 2).astype(np.uint32)
        src = tmp_path / "s.mze"
        save_embeddings(EmbeddingSet(Kind.FEATURES,
                                     rng.normal(size=(40, 3)).astype(np.float32),
                                     labels, 2), src)
        dst = tmp_path / "c.mze"
        assert main(["subsample", "--embeddings", str(src), "--per-class-cap",
                     "5", "--seed", "6", "--out-file", str(dst)]) == 0
        from mzsel.data import stratified_subsample
        assert load_embeddings(dst) == stratified_subsample(
            load_embeddings(src), 5, 6)

    def test_synth_writes_loadable_zoo(self, tmp_path):
        assert main(["synth", "--out-dir", str(tmp_path / "z"), "--n-models",
                     "3", "--n-classes", "2", "--per-class", "6", "--d", "4",
                     "--seed", "1"]) == 0
        manifest = load_manifest(tmp_path / "z" / "manifest.json")
        assert len(manifest.models) == 3

    def test_inspect_happy_path(self, features_file, capsys):
        assert main(["inspect", str(features_file)]) == 0
        out = capsys.readouterr().out
        assert "kind:        features" in out
        assert "samples:     6" in out

    def test_inspect_probabilities_row_sums(self, tmp_path, capsys):
        vec = np.array([[0.25, 0.75], [0.5, 0.5]], dtype=np.float32)
        path = tmp_path / "p.mze"
        save_embeddings(EmbeddingSet(Kind.PROBABILITIES, vec,
                                     np.zeros(2, np.uint32), 1), path)
        assert main(["inspect", str(path)]) == 0
        assert "row-sum deviation" in capsys.readouterr().out

    def test_inspect_truncated_reports_offset(self, features_file, tmp_path,
                                              capsys):
        crippled = tmp_path / "cut.mze"
        crippled.write_bytes(features_file.read_bytes()[:-2])
        assert main(["inspect", str(crippled)]) == 1
        err = capsys.readouterr().err
        assert "TruncatedFile" in err and "byte offset" in err
