import json

import pytest
from pydantic import ValidationError

from app.errors import ExperimentError
from app.experiments.runner import run_experiment
from app.experiments.schemas import load_experiment_config
from app.services.reports import config_hash, read_csv


def _run(out_dir, **doc):
    doc.setdefault("seed", 0)
    cfg = load_experiment_config(None, {"out_dir": str(out_dir), **doc})
    return run_experiment(cfg)


def _json(path):
    return json.loads(path.read_text(encoding="utf-8"))


# ---------------- Configuration ----------------

def test_seed_reaches_every_seeded_section():
    cfg = load_experiment_config(None, {"experiment": "sweep", "seed": 9, "sweep": {"seed": 4}})
    assert cfg.train.seed == 9
    assert cfg.sweep.seed == 4
    assert cfg.trigger.loop.seed == cfg.trigger_size.loop.seed == 9


def test_overrides_merge_into_the_config_file(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps({"experiment": "overhead", "seed": 1, "overhead": {"flips": 4, "domain": "dnn"}}))
    cfg = load_experiment_config(str(path), {"seed": 2, "overhead": {"domain": "snn", "counter_modulus": 50}})
    assert cfg.seed == 2
    assert (cfg.overhead.flips, cfg.overhead.domain, cfg.overhead.counter_modulus) == (4, "snn", 50)


def test_unknown_keys_and_missing_seed_are_rejected():
    with pytest.raises(ValidationError):
        load_experiment_config(None, {"experiment": "overhead", "seed": 0, "overhaed": {}})
    with pytest.raises(ValidationError):
        load_experiment_config(None, {"experiment": "overhead"})


def test_config_hash_tracks_every_value():
    a = load_experiment_config(None, {"experiment": "overhead", "seed": 0}).document()
    b = load_experiment_config(None, {"experiment": "overhead", "seed": 1}).document()
    assert config_hash(a) == config_hash(dict(reversed(list(a.items()))))
    assert config_hash(a) != config_hash(b)


# ---------------- Runs ----------------

def test_overhead_run_writes_report_and_provenance(tmp_path):
    summary = _run(tmp_path, experiment="overhead", overhead={"flips": 30, "domain": "snn", "counter_modulus": 50})
    report = _json(tmp_path / "overhead.json")
    assert report["total"] == 1628
    assert report["config_hash"] == summary.config_hash
    provenance = _json(tmp_path / "provenance.json")
    assert provenance["experiment"] == "overhead" and provenance["seed"] == 0
    assert str(tmp_path / "overhead.json") in provenance["outputs"]
    assert summary.outputs[-1] == str(tmp_path / "provenance.json")


def test_module_errors_name_the_experiment(tmp_path):
    with pytest.raises(ExperimentError, match="^overhead: "):
        _run(tmp_path, experiment="overhead", overhead={"domain": "snn"})
    with pytest.raises(ExperimentError, match="^quantize: "):
        _run(tmp_path, experiment="quantize", data_root=str(tmp_path))


def test_mnist_pipeline(tmp_path, mnist_root):
    root = str(mnist_root)
    common = {"data_root": root, "test_limit": 10}

    _run(tmp_path, experiment="train", arch="mlp", train={"epochs": 1, "batch_size": 32}, **common)
    model = tmp_path / "model.bin"
    digest, rows = read_csv(tmp_path / "train.csv")
    assert len(rows) == 1 and len(digest) == 64

    _run(tmp_path, experiment="quantize", net=str(model), **common)
    qmodel = tmp_path / "qmodel.bin"
    assert 0.0 <= _json(tmp_path / "quantize.json")["quantized_accuracy"] <= 1.0

    sweep = {"probabilities": [0.0, 0.01, 0.1], "iterations": 2}
    first = _run(tmp_path, experiment="sweep", net=str(qmodel), sweep=sweep, **common)
    first_bytes = (tmp_path / "sweep.csv").read_bytes()
    assert first_bytes.startswith(b"# config_hash=" + first.config_hash.encode())
    _, rows = read_csv(tmp_path / "sweep.csv")
    assert len(rows) == 6 and {r["bits_flipped"] for r in rows[:2]} == {"0"}
    _run(tmp_path, experiment="sweep", net=str(qmodel), sweep=sweep, **common)
    assert (tmp_path / "sweep.csv").read_bytes() == first_bytes

    _run(tmp_path, experiment="search", net=str(qmodel), search={"max_flips": 2, "attack_batch": 10}, **common)
    trace = _json(tmp_path / "trace.json")
    assert len(trace["flips"]) == 2 and len(trace["accuracy"]) == 3
    _, rows = read_csv(tmp_path / "trace.csv")
    assert [r["flips"] for r in rows] == ["0", "1", "2"]

    _run(tmp_path, experiment="trigger", net=str(qmodel), trigger={"loop": {"epochs": 3}})
    trigger = tmp_path / "trigger.bin"
    assert _json(tmp_path / "trigger.json")["S"] >= 0.0

    _run(tmp_path, experiment="trigger-eval", net=str(qmodel), trigger_path=str(trigger), **common)
    _, rows = read_csv(tmp_path / "exceed.csv")
    assert int(rows[0]["dim"]) == 10
    assert float(rows[0]["max_perturbation"]) <= 1.0

    _run(
        tmp_path, experiment="trojan", net=str(qmodel), trigger_path=str(trigger),
        faults_path=str(tmp_path / "trace.json"), **common,
    )
    report = _json(tmp_path / "report.json")
    assert report["flips"] == 2 and report["dim"] == 10 and report["detector"] == "analog"
    assert report["stealth_identical"] is True

    _run(
        tmp_path, experiment="snn", net=str(qmodel),
        snn={"calibration": 10, "eval_images": 8, "lif": {"timesteps": 20}}, **common,
    )
    _, rows = read_csv(tmp_path / "snn.csv")
    assert len(rows) == 8
    assert 0.0 <= _json(tmp_path / "snn.json")["label_agreement"] <= 1.0


def test_trigger_size_sweep(tmp_path, mnist_root):
    _run(tmp_path, experiment="train", arch="mlp", data_root=str(mnist_root), train={"epochs": 0})
    _run(
        tmp_path, experiment="trigger-size", net=str(tmp_path / "model.bin"), data_root=str(mnist_root),
        test_limit=5, trigger_size={"sides": [3, 5], "loop": {"epochs": 2}},
    )
    _, rows = read_csv(tmp_path / "trigger_size.csv")
    assert [int(r["mask_area"]) for r in rows] == [9, 25]
    assert (tmp_path / "trigger_size" / "side_5.bin").is_file()
