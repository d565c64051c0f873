import json

import numpy as np
import pytest

from smartpur.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from smartpur.datagen import TransitionDataset


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({
        "datagen": {"n_samples": 3000, "n_train": 3000, "n_test": 3000, "n_trials": 3000},
        "output": {"dir": str(tmp_path / "out")},
    }))
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_gen_dataset_reports_balance(tmp_path, small_config, capsys):
    out = tmp_path / "d.csv"
    code, text, _ = run(capsys, "gen-dataset", "--config", small_config, "--out", out)
    assert code == EXIT_OK
    assert "wrote 3000 rows" in text and "invalid_fraction=" in text
    frac = float(text.split("invalid_fraction=")[1].split()[0])
    assert frac == pytest.approx((1 - 702 / 1500) ** 2, abs=0.02)
    assert len(TransitionDataset.from_csv(out)) == 3000


def test_gen_dataset_default_invalid_fraction(tmp_path, capsys):
    code, text, _ = run(capsys, "gen-dataset", "--out", tmp_path / "d.csv")
    assert code == EXIT_OK
    frac = float(text.split("invalid_fraction=")[1].split()[0])
    assert frac == pytest.approx(0.283, abs=0.01)


def test_gen_dataset_empty_and_deterministic(tmp_path, capsys):
    cfg = tmp_path / "zero.json"
    cfg.write_text(json.dumps({"datagen": {"n_samples": 0}}))
    code, _, _ = run(capsys, "gen-dataset", "--config", cfg, "--out", tmp_path / "z.csv")
    assert code == EXIT_OK
    assert (tmp_path / "z.csv").read_text().count("\n") == 1

    for name in ("a.csv", "b.csv"):
        run(capsys, "gen-dataset", "--seed", 3, "--out", tmp_path / name, "--history-len", 2)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_config_errors_exit_two(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"datagen": {"n_sample": 10}}))
    code, _, err = run(capsys, "gen-dataset", "--config", bad, "--out", tmp_path / "x.csv")
    assert code == EXIT_CONFIG
    assert "datagen.n_sample" in err
    code, _, _ = run(capsys, "evaluate", "--config", tmp_path / "missing.json")
    assert code == EXIT_CONFIG


def test_train_and_reload(tmp_path, small_config, capsys):
    data = tmp_path / "d.csv"
    run(capsys, "gen-dataset", "--config", small_config, "--out", data)
    model = tmp_path / "ada.json"
    code, text, _ = run(capsys, "train", "--config", small_config, "--dataset", data, "--validator", "adaboost",
                        "--model-out", model)
    assert code == EXIT_OK and "rounds:" in text and "training accuracy" in text

    from smartpur.validation import load_validator
    ds = TransitionDataset.from_csv(data)
    v = load_validator(model)
    X = ds.validator_features(v.cfg, v.k_train, 3.9)
    acc = float(np.mean(v.decide(X) == ds.label_valid))
    assert f"{100 * acc:.2f}%" in text


def test_train_separable_toy_reaches_full_accuracy(tmp_path, capsys):
    # alternating rows split cleanly on delta_p
    from smartpur.datagen import BASE_COLUMNS
    rows = []
    for i in range(40):
        valid = i % 2 == 0
        d_prev = 100.0 + i
        d_curr = d_prev + (100.0 if valid else 1000.0)
        rp, rc = -60.0, -60.0 - (5.0 if valid else 25.0)
        rows.append([d_prev, d_curr, 10.0, 0, 1 if valid else 3, rp, rc, rp - rc, int(valid)])
    path = tmp_path / "toy.csv"
    path.write_text(",".join(BASE_COLUMNS) + "\n" + "\n".join(",".join(repr(v) if isinstance(v, float) else str(v)
                                                                        for v in r) for r in rows) + "\n")
    code, text, _ = run(capsys, "train", "--dataset", path, "--validator", "adaboost", "--model-out",
                        tmp_path / "m.json")
    assert code == EXIT_OK
    assert "training accuracy: 100.00%" in text


def test_train_predictor_reports_mse(tmp_path, small_config, capsys):
    data = tmp_path / "d.csv"
    run(capsys, "gen-dataset", "--config", small_config, "--out", data)
    code, text, _ = run(capsys, "train", "--config", small_config, "--dataset", data, "--predictor", "l2boost",
                        "--model-out", tmp_path / "p.json")
    assert code == EXIT_OK
    assert "non_increasing=True" in text


def test_train_single_class_fails(tmp_path, capsys):
    cfg = tmp_path / "tiny.json"
    cfg.write_text(json.dumps({"cell": {"r_cell_m": 702.0}, "sweep": {"radii_m": []},
                               "datagen": {"n_samples": 200}}))
    data = tmp_path / "one.csv"
    assert run(capsys, "gen-dataset", "--config", cfg, "--out", data)[0] == EXIT_OK
    code, _, err = run(capsys, "train", "--config", cfg, "--dataset", data, "--validator", "svm",
                       "--model-out", tmp_path / "m.json")
    assert code == EXIT_DATA
    assert "single class" in err


def test_train_missing_dataset(tmp_path, capsys):
    code, _, _ = run(capsys, "train", "--dataset", tmp_path / "none.csv", "--validator", "svm")
    assert code == EXIT_DATA


def test_evaluate_writes_reports(tmp_path, small_config, capsys):
    out = tmp_path / "rep"
    code, text, _ = run(capsys, "evaluate", "--config", small_config, "--out-dir", out,
                        "--validator", "enhanced,svm", "--predictor", "equation")
    assert code == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    assert set(report["cells"][0]["validators"]) == {"enhanced", "svm"}
    assert (out / "report.csv").exists()
    assert "p_TN=" in text


def test_evaluate_missing_model_fails(tmp_path, small_config, capsys):
    code, _, err = run(capsys, "evaluate", "--config", small_config, "--validator", tmp_path / "gone.json")
    assert code == EXIT_DATA and "not found" in err


def test_evaluate_with_trained_model_file(tmp_path, small_config, capsys):
    data = tmp_path / "d.csv"
    run(capsys, "gen-dataset", "--config", small_config, "--out", data)
    model = tmp_path / "p.json"
    run(capsys, "train", "--config", small_config, "--dataset", data, "--predictor", "l2boost", "--model-out", model)
    code, text, _ = run(capsys, "evaluate", "--config", small_config, "--out-dir", tmp_path / "r",
                        "--predictor", model, "--validator", "legacy")
    assert code == EXIT_OK
    report = json.loads((tmp_path / "r" / "report.json").read_text())
    assert set(report["cells"][0]["predictors"]) == {"file"}


def test_table3_check_command(tmp_path, capsys):
    code, text, _ = run(capsys, "table3-check", "--out-dir", tmp_path)
    assert code == EXIT_OK
    assert text.count("PASS") == 9
    assert len(json.loads((tmp_path / "table3_check.json").read_text())) == 9


def test_evaluate_bundled_table3(tmp_path, capsys):
    code, text, _ = run(capsys, "evaluate", "--config", "table3-check", "--out-dir", tmp_path)
    assert code == EXIT_OK and text.count("PASS") == 9


def test_sweep_defaults_to_radius_sweep(tmp_path, capsys, small_config):
    code, text, _ = run(capsys, "sweep", "--config", small_config, "--radii", 1500, 2500, "--out-dir", tmp_path,
                        "--validator", "enhanced", "--predictor", "equation")
    assert code == EXIT_OK
    assert "r_cell=1500" in text and "r_cell=2500" in text


def test_log_level_from_environment(monkeypatch, tmp_path, capsys, small_config):
    monkeypatch.setenv("SMARTPUR_LOG", "INFO")
    import logging
    logging.getLogger().handlers.clear()
    code, _, err = run(capsys, "evaluate", "--config", small_config, "--out-dir", tmp_path,
                       "--validator", "legacy", "--predictor", "equation")
    assert code == EXIT_OK
    assert "radius 1500 m" in err
    logging.getLogger().handlers.clear()
