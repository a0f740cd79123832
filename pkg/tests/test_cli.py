import csv
import json
from pathlib import Path

import pytest
import yaml

from conftest import ROOT
from lsmnas import cli
from lsmnas.cli import genome_file_text, main
from lsmnas.config import ConfigError, RunConfig, config_from_dict, load_config
from lsmnas.reference import reference_genome
from lsmnas.search import read_history
from lsmnas.simulator import SimulationFault

TOY = ROOT / "configs" / "toy.yaml"


@pytest.fixture(scope="module")
def toy_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("toy")
    assert main(["search", "--config", str(TOY), "--out", str(out)]) == 0
    return out


def write_yaml(path, data):
    path.write_text(yaml.safe_dump(data))
    return path


def mnist_config(tmp_path, mnist_paths, limit=20):
    data = {
        "dataset": {"format": "idx", **mnist_paths, "train_limit": limit, "test_limit": limit},
        "sim": {"duration_ms": 50.0},
    }
    return write_yaml(tmp_path / "mnist.yaml", data)


# --- search -------------------------------------------------------------------

def test_search_artifacts(toy_run):
    for name in ("config.yaml", "history.jsonl", "best_genome.json", "summary.json"):
        assert (toy_run / name).is_file()
    summary = json.loads((toy_run / "summary.json").read_text())
    steps = [summary["step_best_accuracy"][s] for s in "123"]
    assert steps == sorted(steps)
    history = read_history(toy_run / "history.jsonl")
    assert summary["best_accuracy"] == max(r.accuracy for r in history)
    assert summary["evaluations"] == len(history)
    assert {"intra_potential", "reduction_pct"} <= set(summary["connections"])
    assert json.loads((toy_run / "best_genome.json").read_text())["input_channels"] == 100


def test_toy_search_reaches_target(toy_run):
    summary = json.loads((toy_run / "summary.json").read_text())
    assert summary["best_accuracy"] >= 0.95
    assert summary["evaluations"] <= 60


def test_search_rerun_byte_identical(toy_run, tmp_path):
    assert main(["search", "--config", str(TOY), "--out", str(tmp_path)]) == 0
    for name in ("history.jsonl", "best_genome.json"):
        assert (tmp_path / name).read_bytes() == (toy_run / name).read_bytes()


def test_search_resume_completes_identically(toy_run, tmp_path):
    lines = (toy_run / "history.jsonl").read_text().splitlines(keepends=True)
    (tmp_path / "history.jsonl").write_text("".join(lines[: len(lines) // 2]))
    assert main(["search", "--config", str(TOY), "--out", str(tmp_path), "--resume"]) == 0
    assert (tmp_path / "history.jsonl").read_bytes() == (toy_run / "history.jsonl").read_bytes()


def test_zero_groups_is_config_error(tmp_path, capsys):
    data = yaml.safe_load(TOY.read_text()) | {"group_count": 0}
    code = main(["search", "--config", str(write_yaml(tmp_path / "c.yaml", data)),
                 "--out", str(tmp_path / "o")])
    assert code == 2
    assert "group_count" in capsys.readouterr().err


@pytest.mark.parametrize("patch,field", [
    ({"bogus": 1}, "bogus"),
    ({"sim": {"dt": "fast"}}, "sim.dt"),
    ({"dataset": {"format": "idx"}}, "dataset.train_images"),
    ({"dataset": {"format": "idx", "train_images": "/nope", "train_labels": "/nope",
                  "test_images": "/nope", "test_labels": "/nope"}}, "dataset"),
    ({"total_neurons": 15}, "total_neurons"),
    ({"search": {"max_disturb": 500}}, "search.max_disturb"),
])
def test_config_errors_name_field(tmp_path, patch, field):
    with pytest.raises(ConfigError) as info:
        config_from_dict(yaml.safe_load(TOY.read_text()) | patch).validate()
    assert info.value.field == field


def test_missing_config_file(tmp_path):
    assert main(["search", "--config", str(tmp_path / "none.yaml")]) == 2


# --- config round trip --------------------------------------------------------

def test_effective_config_round_trip(toy_run):
    echoed = load_config(toy_run / "config.yaml")
    assert echoed == load_config(TOY).__class__(**{**load_config(TOY).__dict__, "out": str(toy_run)})
    assert echoed.dumps() == (toy_run / "config.yaml").read_text()


def test_default_config_round_trip():
    assert config_from_dict(yaml.safe_load(RunConfig().dumps())) == RunConfig()


# --- evaluate -----------------------------------------------------------------

def test_evaluate_published_mnist_genome(tmp_path, mnist_paths):
    genome = tmp_path / "published.json"
    genome.write_text(genome_file_text(reference_genome("mnist"), 784))
    cfg = mnist_config(tmp_path, mnist_paths)
    reports = []
    for i in range(2):
        out = tmp_path / f"e{i}"
        assert main(["evaluate", "--config", str(cfg), "--genome", str(genome), "--out", str(out)]) == 0
        reports.append(json.loads((out / "evaluation.json").read_text()))
    assert reports[0] == reports[1]  # zero variance under fixed seeds
    assert 0.0 <= reports[0]["accuracy"] <= 1.0
    assert reports[0]["connections"]["reduction_pct"] == pytest.approx(67.7, abs=0.05)


def test_evaluate_channel_mismatch(tmp_path, toy_run, mnist_paths, capsys):
    cfg = mnist_config(tmp_path, mnist_paths)
    code = main(["evaluate", "--config", str(cfg), "--genome", str(toy_run / "best_genome.json")])
    assert code == 3
    assert "input channels" in capsys.readouterr().err


def test_evaluate_bad_genome_file(tmp_path):
    bad = tmp_path / "g.json"
    bad.write_text("{not json")
    assert main(["evaluate", "--config", str(TOY), "--genome", str(bad)]) == 3
    bad.write_text(json.dumps({"format": "lsm-genome/1", "layers": [[{"neuron_count": 3}]]}))
    assert main(["evaluate", "--config", str(TOY), "--genome", str(bad)]) == 3


def test_dataset_override(tmp_path, toy_run, mnist_paths):
    ds = write_yaml(tmp_path / "ds.yaml", {"format": "idx", **mnist_paths, "train_limit": 5})
    # override swaps the synthetic data for MNIST, so the toy genome no longer fits
    code = main(["evaluate", "--config", str(TOY), "--dataset", str(ds),
                 "--genome", str(toy_run / "best_genome.json")])
    assert code == 3


def test_simulation_fault_exit_code(monkeypatch, toy_run):
    def explode(config):
        raise SimulationFault("non-finite membrane potential", neuron=3, step=7)

    monkeypatch.setattr(cli, "build_objective", explode)
    assert main(["evaluate", "--config", str(TOY), "--genome", str(toy_run / "best_genome.json")]) == 4


# --- minimize -----------------------------------------------------------------

def test_minimize_csv(toy_run, tmp_path):
    code = main(["minimize", "--config", str(TOY), "--genome", str(toy_run / "best_genome.json"),
                 "--fractions", "1.0,0.9,0.8,0.6", "--out", str(tmp_path)])
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "minimize.csv").open()))
    assert [r["fraction"] for r in rows] == ["1.0", "0.9", "0.8", "0.6"]
    assert [int(r["neurons"]) for r in rows] == [100, 90, 80, 60]
    best = json.loads((toy_run / "summary.json").read_text())["best_accuracy"]
    assert float(rows[0]["accuracy"]) == best


def test_minimize_bad_fractions(toy_run):
    g = str(toy_run / "best_genome.json")
    assert main(["minimize", "--config", str(TOY), "--genome", g, "--fractions", "1.0,x"]) == 2
    assert main(["minimize", "--config", str(TOY), "--genome", g, "--fractions", "1.5"]) == 2


# --- report -------------------------------------------------------------------

def test_report(toy_run, tmp_path):
    assert main(["report", str(toy_run / "history.jsonl"), "--out", str(tmp_path)]) == 0
    history = read_history(toy_run / "history.jsonl")
    rows = list(csv.DictReader((tmp_path / "report.csv").open()))
    assert len(rows) == len(history)
    flagged = [i for i, r in enumerate(rows) if r["is_best"] == "1"]
    top = max(r.accuracy for r in history)
    assert flagged == [next(i for i, r in enumerate(history) if r.accuracy == top)]
    for s in "123":
        curve = [float(r["step_best"]) for r in rows if r["step"] == s]
        assert curve == sorted(curve)
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["records"] == len(history)


def test_report_reduction_column_for_published_mnist(tmp_path):
    from lsmnas.search import SearchRecord

    rec = SearchRecord(reference_genome("mnist"), 0.932, 1, 0.05, 0, 0)
    hist = tmp_path / "history.jsonl"
    hist.write_text(rec.to_json() + "\n")
    assert main(["report", str(hist)]) == 0
    row = next(csv.DictReader((tmp_path / "report.csv").open()))
    assert float(row["reduction_pct"]) == pytest.approx(67.7, abs=0.05)
    assert row["is_best"] == "1"


def test_report_errors(tmp_path):
    assert main(["report", str(tmp_path / "missing.jsonl")]) == 3
    empty = tmp_path / "h.jsonl"
    empty.write_text("")
    assert main(["report", str(empty)]) == 3
    empty.write_text("garbage\n")
    assert main(["report", str(empty)]) == 3


def test_report_is_idempotent(toy_run, tmp_path):
    main(["report", str(toy_run / "history.jsonl"), "--out", str(tmp_path)])
    first = (tmp_path / "report.csv").read_bytes()
    before = (toy_run / "history.jsonl").read_bytes()
    main(["report", str(toy_run / "history.jsonl"), "--out", str(tmp_path)])
    assert (tmp_path / "report.csv").read_bytes() == first
    assert (toy_run / "history.jsonl").read_bytes() == before
    assert not [p for p in Path(tmp_path).iterdir() if p.name.startswith(".")]


@pytest.mark.parametrize("name", ["toy.yaml", "mnist_desk.yaml", "mnist_full.yaml"])
def test_shipped_configs_validate(name):
    config = load_config(ROOT / "configs" / name)
    config.validate(check_files=name != "mnist_full.yaml")
