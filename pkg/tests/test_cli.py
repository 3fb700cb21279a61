import json
import os

import numpy as np
import pytest

from fieldcomp import simulator
from fieldcomp.cli import build_parser, main
from fieldcomp.config import ToolConfig, load_config
from fieldcomp.errors import ConfigError

FAST_ANN = {"epochs": 200}


def _config(tmp_path, **sections):
    data = {"train": {"ann": FAST_ANN}}
    data.update(sections)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(data))
    return str(path)


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.is_file()}


@pytest.fixture(scope="module")
def runs_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("runs")
    assert main(["generate", "--seed", "3", "--out", str(d)]) == 0
    return d


def test_generate_defaults(runs_dir, capsys):
    csvs = sorted(runs_dir.glob("run*.csv"))
    assert len(csvs) == 7
    runs = [r for f in csvs for r in simulator.read_runs(f)]
    assert 134 <= sum(len(r) for r in runs) <= 140
    assert all(r.truth is not None for r in runs)
    assert all(simulator.metadata_path(f).exists() for f in csvs)


def test_generate_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["generate", "--seed", "5", "--runs", "3", "--out", str(a)]) == 0
    assert main(["generate", "--seed", "5", "--runs", "3", "--out", str(b)]) == 0
    assert _files(a) == _files(b)
    c = tmp_path / "c"
    main(["generate", "--seed", "6", "--runs", "3", "--out", str(c)])
    assert _files(a) != _files(c)


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_generate_unwritable_exit_code(tmp_path):
    locked = tmp_path / "locked"
    locked.mkdir()
    locked.chmod(0o500)
    try:
        assert main(["generate", "--out", str(locked / "sub")]) == 3
    finally:
        locked.chmod(0o700)


def test_generate_output_is_a_file_exit_code(tmp_path, capsys):
    blocker = tmp_path / "blocker"
    blocker.write_text("x")
    assert main(["generate", "--out", str(blocker / "sub")]) == 3
    assert "IoError" in capsys.readouterr().err


def test_train_pca_and_predict(runs_dir, tmp_path, capsys):
    out = tmp_path / "m"
    assert main(["train", "--method", "pca", "--out", str(out), str(runs_dir)]) == 0
    model = json.loads((out / "pca_model.json").read_text())
    assert model["kind"] == "pca"
    meas = tmp_path / "three.csv"
    run = simulator.read_runs(runs_dir / "run000.csv")[0]
    first = [next(p for p in run.points if p.beam_id == b) for b in (1, 2, 3)]
    meas.write_text(simulator.run_to_csv(simulator.CompensationRun("m", first)))
    capsys.readouterr()
    assert main(["predict", "--model", str(out / "pca_model.json"), str(meas)]) == 0
    vec = np.array(capsys.readouterr().out.split(), dtype=float)
    assert vec.shape == (3,) and np.all(np.isfinite(vec))


@pytest.mark.parametrize("method", ["ann9", "ann4"])
def test_train_ann_writes_model_and_loss(runs_dir, tmp_path, method):
    out = tmp_path / method
    cfg = _config(tmp_path)
    assert main(["train", "--method", method, "--config", cfg, "--out", str(out), str(runs_dir)]) == 0
    model = json.loads((out / f"{method}_model.json").read_text())
    assert model["layer_sizes"][0] == (9 if method == "ann9" else 4)
    loss = (out / f"{method}_loss.csv").read_text().splitlines()
    assert loss[0] == "epoch,loss" and len(loss) == 201


def test_train_is_byte_identical(runs_dir, tmp_path):
    cfg = _config(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["train", "--method", "ann4", "--config", cfg, "--out", str(d), str(runs_dir)]) == 0
    assert _files(a) == _files(b)


def test_train_without_truth_is_rejected(runs_dir, tmp_path, capsys):
    bare = tmp_path / "bare.csv"
    bare.write_text((runs_dir / "run000.csv").read_text())
    assert main(["train", "--method", "pca", "--out", str(tmp_path), str(bare)]) == 2
    assert "no truth" in capsys.readouterr().err


def test_predict_planes(runs_dir, capsys):
    assert main(["predict", "--model", "planes", str(runs_dir / "run000.csv")]) == 0
    vec = np.array(capsys.readouterr().out.split(), dtype=float)
    truth = simulator.read_runs(runs_dir / "run000.csv")[0].truth
    assert np.linalg.norm(vec - truth) < 1000


def test_predict_planes_two_points_exit_code(tmp_path, runs_dir, capsys):
    run = simulator.read_runs(runs_dir / "run000.csv")[0]
    meas = tmp_path / "two.csv"
    meas.write_text(simulator.run_to_csv(simulator.CompensationRun("m", run.points[:2])))
    assert main(["predict", "--model", "planes", str(meas)]) == 2
    assert "error" in capsys.readouterr().err


def test_predict_ann9_wrong_point_count(runs_dir, tmp_path, capsys):
    out = tmp_path / "m"
    main(["train", "--method", "ann9", "--config", _config(tmp_path), "--out", str(out), str(runs_dir)])
    assert main(["predict", "--model", str(out / "ann9_model.json"), str(runs_dir / "run000.csv")]) == 2
    assert "EncodingMismatch" in capsys.readouterr().err


def test_predict_bad_csv_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("run_id,beam_id,px,py,pz\nr,1,0,0,zero\n")
    assert main(["predict", "--model", "planes", str(bad)]) == 2
    assert "bad.csv:2" in capsys.readouterr().err


def test_missing_model_file(tmp_path, runs_dir):
    assert main(["predict", "--model", str(tmp_path / "none.json"), str(runs_dir / "run000.csv")]) == 3


def _small_benchmark(tmp_path):
    return _config(tmp_path, benchmark={"methods": ["grid@24", "planes@9", "planes@24", "pca@3", "ann4@1"],
                                        "n_trials": 5, "n_scenarios": 2, "ann": FAST_ANN})


def test_benchmark_outputs_are_byte_identical(tmp_path, capsys):
    cfg = _small_benchmark(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["benchmark", "--config", cfg, "--seed", "2", "--out", str(d)]) == 0
    files = _files(a)
    assert set(files) == {"benchmark.csv", "benchmark_detail.csv", "scaling.png", "spread.png"}
    assert files == _files(b)
    header = files["benchmark.csv"].decode().splitlines()[0]
    assert header == "method,n_measurements,amortized_training_measurements,sigma,containment_68,n_trials,seed"
    assert "grid search counts 3 measurements" in capsys.readouterr().out


def test_benchmark_workers_do_not_change_output(tmp_path):
    cfg = _small_benchmark(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["benchmark", "--config", cfg, "--out", str(a)]) == 0
    assert main(["benchmark", "--config", cfg, "--out", str(b), "--workers", "2"]) == 0
    assert _files(a)["benchmark.csv"] == _files(b)["benchmark.csv"]


def test_benchmark_unknown_method(tmp_path, capsys):
    cfg = _config(tmp_path, benchmark={"methods": ["magic@3"]})
    assert main(["benchmark", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "ConfigError" in capsys.readouterr().err


def test_default_benchmark_covers_all_methods():
    methods = {m for m, _ in ToolConfig().benchmark.parsed_methods()}
    labels = set(ToolConfig().benchmark.methods)
    assert methods == {"grid", "planes", "pca", "ann9", "ann4"}
    assert {"planes@9", "planes@24", "pca@3", "ann9@3", "ann4@1"} <= labels


@pytest.mark.parametrize("command", ["generate", "train", "predict", "benchmark"])
def test_help_lists_flags(command, capsys):
    with pytest.raises(SystemExit) as exc:
        build_parser().parse_args([command, "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for flag in ("--config", "--seed", "--out"):
        assert flag in text


def test_unknown_config_key_rejected(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"scenario": {"noise": 3}}))
    assert main(["generate", "--config", str(path), "--out", str(tmp_path)]) == 2
    assert "noise" in capsys.readouterr().err
    with pytest.raises(ConfigError):
        ToolConfig.from_dict({"bogus": 1})


def test_config_round_trip(tmp_path):
    cfg = ToolConfig()
    cfg.seed = 9
    cfg.benchmark.n_trials = 17
    path = tmp_path / "cfg.json"
    path.write_text(cfg.dumps())
    assert load_config(str(path)) == cfg
    assert load_config(None) == ToolConfig()


def test_generate_respects_scenario_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"scenario": {"noise_sigma": 0.0}}))
    out = tmp_path / "o"
    assert main(["generate", "--config", str(path), "--runs", "1", "--out", str(out)]) == 0
    run = simulator.read_runs(out / "run000.csv")[0]
    for b in (1, 2, 3):
        pts = run.beam_points(b)
        assert len(pts) >= 6
    assert run.noise_sigma == 0.0
