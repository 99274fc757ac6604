import csv
import json

import numpy as np
import pytest

from ddpinn import cli, config, io
from ddpinn.diffcore import MlpParameters

TINY = {"preset": "msd-100-desk",
        "training": {"epochs": 3, "batches": 2, "n_collo": 200, "n_data": 0}}


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture()
def tiny(tmp_path):
    p = tmp_path / "tiny.json"
    p.write_text(json.dumps(TINY))
    return p


def _train(tmp_path, cfg, name, *extra):
    code = cli.main(["train", str(cfg), "--out-dir", str(tmp_path), "--name", name, *extra])
    return code, tmp_path / name


def test_train_writes_outputs(tmp_path, tiny):
    code, out = _train(tmp_path, tiny, "run")
    assert code == 0
    for f in ("checkpoint.json", "train_log.csv", "timing.csv", "manifest.json"):
        assert (out / f).is_file()
    log = _rows(out / "train_log.csv")
    assert len(log) == 3 and tuple(log[0]) == cli.LOG_COLUMNS
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 0 and len(man["config_sha256"]) == 64


def test_train_preset_epoch_override(tmp_path):
    code, out = _train(tmp_path, "msd-100-desk", "p", "--epochs", "0")
    assert code == 0 and (out / "checkpoint.json").is_file()


def test_malformed_json_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"model": {"f": 100,}}')
    code, _ = _train(tmp_path, bad, "x")
    assert code == 2
    assert "line 1" in capsys.readouterr().err


def test_unknown_key_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"preset": "msd-100-desk", "training": {"epoch": 3}}))
    code, _ = _train(tmp_path, bad, "x")
    assert code == 2
    err = capsys.readouterr().err
    assert "training" in err and "epoch" in err


def test_unknown_preset_exits_2(tmp_path):
    assert _train(tmp_path, "msd-7", "x")[0] == 2


def test_training_csvs_deterministic(tmp_path, tiny):
    _, a = _train(tmp_path, tiny, "a")
    _, b = _train(tmp_path, tiny, "b")
    assert (a / "train_log.csv").read_bytes() == (b / "train_log.csv").read_bytes()
    ca, cb = (json.loads((d / "checkpoint.json").read_text()) for d in (a, b))
    assert ca["model"] == cb["model"]


def test_seed_changes_log(tmp_path, tiny):
    _, a = _train(tmp_path, tiny, "a")
    _, b = _train(tmp_path, tiny, "b", "--seed", "1")
    assert (a / "train_log.csv").read_bytes() != (b / "train_log.csv").read_bytes()


def test_oracle_evaluate(tmp_path, tiny):
    code = cli.main(["evaluate", str(tiny), "--oracle", "--out-dir", str(tmp_path), "--name", "o",
                     "--latency-steps", "20"])
    assert code == 0
    m = _rows(tmp_path / "o" / "metrics.csv")[0]
    assert float(m["scaled_mse"]) < 1e-10 and m["diverged"] == "0"
    traj = _rows(tmp_path / "o" / "trajectory.csv")
    assert len(traj) == int(m["n_steps"]) + 1 and "q_hat" in traj[0]
    assert (tmp_path / "o" / "latency.csv").is_file()


def test_evaluate_horizon_beyond_signal_exits_2(tmp_path, tiny):
    code = cli.main(["evaluate", str(tiny), "--oracle", "--horizon", "5", "--out-dir", str(tmp_path)])
    assert code == 2


def test_evaluate_flags_divergence_with_exit_0(tmp_path, tiny):
    run_cfg = config.load(str(tiny))
    from ddpinn.train import build_model
    model = build_model(run_cfg.train_config(0), run_cfg.box())
    model = model.with_net(MlpParameters.from_arrays(model.net.layer_sizes,
                                                     [a * 40 for a in model.net.arrays]))
    ck = tmp_path / "wild.json"
    io.save_checkpoint(ck, model, run_cfg.to_dict(), {})
    code = cli.main(["evaluate", str(ck), "--out-dir", str(tmp_path), "--name", "w",
                     "--latency-steps", "20"])
    assert code == 0
    m = _rows(tmp_path / "w" / "metrics.csv")[0]
    assert m["diverged"] == "1" and int(m["divergence_step"]) >= 1


def test_evaluate_trained_checkpoint(tmp_path, tiny):
    _, run = _train(tmp_path, tiny, "r")
    code = cli.main(["evaluate", str(run / "checkpoint.json"), "--out-dir", str(tmp_path),
                     "--name", "e", "--latency-steps", "20", "--horizon", "0.2"])
    assert code == 0
    assert _rows(tmp_path / "e" / "metrics.csv")[0]["n_steps"] == "20"


def test_benchmark_schema(tmp_path, tiny):
    code = cli.main(["benchmark", str(tiny), str(tiny), "--epochs", "3", "--latency-steps", "20",
                     "--out-dir", str(tmp_path), "--name", "b"])
    assert code == 0
    rows = _rows(tmp_path / "b" / "benchmark.csv")
    assert tuple(rows[0]) == cli.BENCHMARK_COLUMNS and len(rows) == 2
    assert float(rows[0]["time_ratio"]) == 1.0
    assert 0.5 < float(rows[1]["time_ratio"]) < 2.0
    assert rows[0]["final_val_phys"] == rows[1]["final_val_phys"]
    assert len(_rows(tmp_path / "b" / "benchmark_curves.csv")) == 3


def test_benchmark_requires_equal_collocation(tmp_path, tiny):
    other = tmp_path / "other.json"
    other.write_text(json.dumps({**TINY, "training": {**TINY["training"], "n_collo": 300}}))
    assert cli.main(["benchmark", str(tiny), str(other), "--out-dir", str(tmp_path)]) == 2


def test_simulate_rows(tmp_path):
    out = tmp_path / "s.csv"
    assert cli.main(["simulate", "msd", "--duration", "0.01", "--step", "0.001", "--output", str(out)]) == 0
    rows = _rows(out)
    assert len(rows) == 11 and list(rows[0]) == ["t", "q", "qd", "u"]


def test_simulate_equilibrium_is_constant(tmp_path):
    out = tmp_path / "s.csv"
    cli.main(["simulate", "chain", "--duration", "0.05", "--output", str(out)])
    rows = _rows(out)
    assert all(r == {**rows[0], "t": r["t"]} for r in rows)


def test_simulate_chirp_reproducible(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        cli.main(["simulate", "msd", "--signal", "chirp", "--duration", "0.2", "--output", str(p)])
    assert a.read_bytes() == b.read_bytes()


def test_simulate_bad_x0(tmp_path):
    assert cli.main(["simulate", "msd", "--x0", "1,2,3", "--output", str(tmp_path / "x.csv")]) == 2


def test_checkpoint_round_trip(tmp_path, tiny):
    _, run = _train(tmp_path, tiny, "r")
    model, doc = io.load_checkpoint(run / "checkpoint.json")
    io.save_checkpoint(tmp_path / "again.json", model, doc["config"], doc.get("summary", {}))
    model2, _ = io.load_checkpoint(tmp_path / "again.json")
    rng = np.random.default_rng(0)
    box = model.box
    x0 = rng.uniform(box.x_low, box.x_high, (1000, box.m))
    knots = rng.uniform(box.u_low, box.u_high, (1000, model.n_knots, box.p))
    t = rng.uniform(0, model.T_s, 1000)
    np.testing.assert_array_equal(model.predict(x0, knots, t), model2.predict(x0, knots, t))


def test_out_dir_from_environment(tmp_path, tiny, monkeypatch):
    monkeypatch.setenv("DDPINN_OUT_DIR", str(tmp_path / "env"))
    assert cli.main(["train", str(tiny), "--name", "e"]) == 0
    assert (tmp_path / "env" / "e" / "train_log.csv").is_file()
