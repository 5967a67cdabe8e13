import json

import pytest

from graphattr import generate_ba2motifs, random_model, save_dataset, save_model
from graphattr.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, main


@pytest.fixture()
def model_path(tmp_path):
    model = random_model("gcn", in_dim=10, hidden=8, num_layers=3, clf_hidden=8,
                         num_classes=2, seed=3)
    path = tmp_path / "model.json"
    save_model(model, path)
    return path


def _read(path):
    return json.loads(path.read_text())


def test_explain_single_graph(tmp_path, model_path):
    data = tmp_path / "data.json"
    save_dataset(generate_ba2motifs(1, base_size=10, seed=4), data)
    out = tmp_path / "out"
    rc = main(["explain", "--model", str(model_path), "--data", str(data),
               "--out", str(out), "--sparsity", "0.7"])
    assert rc == EXIT_OK
    names = sorted(p.name for p in out.iterdir())
    assert names == ["graph_0000.attr.json", "graph_0000.expl.json", "manifest.json"]
    manifest = _read(out / "manifest.json")
    assert manifest["command"] == "explain"
    assert manifest["config"]["sparsity"] == "0.7"
    assert manifest["max_abs_residual"] <= 1e-6


def test_explain_rerun_is_byte_identical(tmp_path, model_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    args = ["explain", "--model", str(model_path), "--gen", "ba2motifs:2:10:5",
            "--sparsity", "0.6,0.8"]
    assert main(args + ["--out", str(out1)]) == EXIT_OK
    assert main(args + ["--out", str(out2)]) == EXIT_OK
    for p1 in sorted(out1.iterdir()):
        p2 = out2 / p1.name
        if p1.name == "manifest.json":
            a, b = _read(p1), _read(p2)
            a["config"].pop("out"), b["config"].pop("out")
            assert a == b
        else:
            assert p1.read_bytes() == p2.read_bytes()


def test_explain_parallel_matches_sequential(tmp_path, model_path):
    seq, par = tmp_path / "seq", tmp_path / "par"
    args = ["explain", "--model", str(model_path), "--gen", "ba2motifs:3:8:6"]
    assert main(args + ["--out", str(seq)]) == EXIT_OK
    assert main(args + ["--out", str(par), "--jobs", "2"]) == EXIT_OK
    for p1 in sorted(seq.iterdir()):
        if p1.name == "manifest.json":
            continue
        assert p1.read_bytes() == (par / p1.name).read_bytes()


def test_explain_writes_per_class_explanations(tmp_path, model_path):
    out = tmp_path / "out"
    rc = main(["explain", "--model", str(model_path), "--gen", "ba2motifs:1:8:7",
               "--out", str(out), "--class", "0,1", "--sparsity", "0.5,0.9"])
    assert rc == EXIT_OK
    expl = _read(out / "graph_0000.expl.json")
    assert len(expl) == 4  # two sparsities times two classes
    assert {e["class"] for e in expl} == {0, 1}


def test_explain_requires_data_or_gen(tmp_path, model_path, capsys):
    rc = main(["explain", "--model", str(model_path), "--out", str(tmp_path / "o")])
    assert rc == EXIT_VALIDATION
    assert "required" in capsys.readouterr().err


def test_explain_missing_model_is_validation_error(tmp_path):
    rc = main(["explain", "--model", str(tmp_path / "nope.json"),
               "--gen", "ba2motifs:1:8:7", "--out", str(tmp_path / "o")])
    assert rc == EXIT_VALIDATION


def test_check_oracle_passes(capsys):
    rc = main(["check-oracle", "--models-per-arch", "1", "--nodes", "4", "--layers", "1"])
    assert rc == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 4
    assert "max abs deviation" in out


def test_check_oracle_negative_control(capsys):
    rc = main(["check-oracle", "--models-per-arch", "1", "--nodes", "4",
               "--layers", "1", "--inject-fault"])
    assert rc == EXIT_NUMERICAL
    out = capsys.readouterr().out
    assert "[FAIL] equivalence" in out


def test_check_oracle_guard_refusal(capsys):
    rc = main(["check-oracle", "--nodes", "12"])
    assert rc == EXIT_VALIDATION
    assert "refused" in capsys.readouterr().err


def test_eval_fidelity_writes_summary_grid(tmp_path, model_path):
    out = tmp_path / "ev"
    rc = main(["eval", "--metric", "fidelity", "--model", str(model_path),
               "--gen", "ba2motifs:3:8:8", "--out", str(out)])
    assert rc == EXIT_OK
    lines = (out / "fidelity_summary.csv").read_text().strip().splitlines()
    assert len(lines) == 6  # header plus the five-point sparsity grid
    records = (out / "fidelity_records.csv").read_text().strip().splitlines()
    assert len(records) == 1 + 3 * 5
    report = _read(out / "fidelity.json")
    assert report["config"]["metric"] == "fidelity"


def test_eval_stability_reports_k_grid(tmp_path, model_path):
    out = tmp_path / "ev"
    rc = main(["eval", "--metric", "stability", "--model", str(model_path),
               "--gen", "ba2motifs:4:8:9", "--out", str(out)])
    assert rc == EXIT_OK
    report = _read(out / "stability.json")
    assert sorted(report["summary"]["coverage"], key=int) == [str(k) for k in range(1, 11)]
    assert report["config"]["sparsity"] == "0.7"


def test_eval_discriminability_nonnegative(tmp_path):
    from helpers import degree_split_fixture

    model, relabeled = degree_split_fixture()
    model_file = tmp_path / "deg.json"
    save_model(model, model_file)
    data_file = tmp_path / "deg_data.json"
    save_dataset(relabeled, data_file)

    out = tmp_path / "ev"
    rc = main(["eval", "--metric", "discriminability", "--model", str(model_file),
               "--data", str(data_file), "--out", str(out), "--classes", "0,1"])
    assert rc == EXIT_OK
    report = _read(out / "discriminability.json")
    assert report["summary"]["0-1"] >= 0.0


def test_eval_rejects_bad_sparsity(tmp_path, model_path):
    rc = main(["eval", "--metric", "fidelity", "--model", str(model_path),
               "--gen", "ba2motifs:2:8:1", "--out", str(tmp_path / "x"),
               "--sparsity", "1.5"])
    assert rc == EXIT_VALIDATION


def test_gen_spec_validation(tmp_path, model_path):
    rc = main(["explain", "--model", str(model_path), "--gen", "ba2motifs:10",
               "--out", str(tmp_path / "o")])
    assert rc == EXIT_VALIDATION


def test_terms_command_prints_signatures(model_path, capsys):
    rc = main(["terms", "--model", str(model_path)])
    assert rc == EXIT_OK
    out = capsys.readouterr().out
    assert "6 term classes" in out
    assert "V·V·V·X·W1·W2·W3·Wc1·Wc2" in out
    assert "variable slots: 7" in out  # features count as constants by default


def test_explain_error_names_graph(tmp_path, capsys):
    # A node-classification model without --row fails per graph, with the id.
    node_model = random_model("gcn", in_dim=10, hidden=4, num_layers=2,
                              clf_hidden=4, num_classes=2, pooling="none", seed=1)
    path = tmp_path / "node.json"
    save_model(node_model, path)
    rc = main(["explain", "--model", str(path), "--gen", "ba2motifs:1:8:2",
               "--out", str(tmp_path / "o")])
    assert rc == EXIT_VALIDATION
    assert "graph 0" in capsys.readouterr().err
