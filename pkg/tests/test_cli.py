import json
import subprocess
import sys

import pytest

from lindlearn import cli


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_gen_dataset_byte_identical(tmp_path, capsys):
    cfg = tmp_path / "small.json"
    cfg.write_text(json.dumps({"n_bs": 2, "n_ts": 5, "t_final": 2.0}))
    dirs = []
    for name in ("a", "b"):
        d = tmp_path / name
        code, _, _ = run(["gen-dataset", "--preset", "spin32-tdep", "--seed", "7", "--config", str(cfg),
                          "--out", str(d)], capsys)
        assert code == 0
        dirs.append(d)
    for f in ("dataset.json", "table.csv", "model.json", "manifest.json"):
        assert (dirs[0] / f).read_bytes() == (dirs[1] / f).read_bytes()
    man = json.loads((dirs[0] / "manifest.json").read_text())
    assert man["command"] == "gen-dataset" and man["config"]["seed"] == 7
    assert "version" in man


def test_spectrum_demo(capsys):
    code, out, _ = run(["spectrum", "--demo", "qubit-dephasing", "--gamma", "0.3"], capsys)
    assert code == 0
    vals = dict(line.split(" = ") for line in out.strip().splitlines())
    assert abs(float(vals["Delta1"]) - 0.6) < 1e-10
    assert abs(float(vals["t_dc"]) - 1 / 0.6) < 1e-9


def test_reproduce_fig5_closed_form(tmp_path, capsys):
    code, out, _ = run(["reproduce", "fig5", "--kind", "MSE", "--closed-form-only", "--out", str(tmp_path)], capsys)
    assert code == 0
    optima = json.loads((tmp_path / "optima.json").read_text())
    assert abs(optima["MSE"] - 1.70) <= 0.05
    assert "argmax t_N (MSE)" in out
    assert (tmp_path / "eta_closed_form.csv").exists()
    assert not (tmp_path / "FAILED").exists()


def test_gen_model_and_train(tmp_path, capsys):
    cfg = tmp_path / "small.json"
    cfg.write_text(json.dumps({"n_bs": 1, "n_ts": 6, "t_final": 3.0}))
    d = tmp_path / "data"
    assert run(["gen-dataset", "--preset", "spin32-tdep", "--seed", "3", "--config", str(cfg),
                "--out", str(d)], capsys)[0] == 0
    out = tmp_path / "fit"
    code, stdout, _ = run(["train", "--dataset", str(d / "dataset.json"), "--epochs", "5", "--n-ini", "2",
                           "--out", str(out)], capsys)
    assert code == 0
    summary = json.loads(stdout)
    assert summary["status"] == ["ok", "ok"]
    for f in ("log.csv", "report.json", "model_learned.json", "predictions.csv", "summary.json", "manifest.json"):
        assert (out / f).exists(), f
    m = tmp_path / "m.json"
    assert run(["gen-model", "--family", "chain5", "--seed", "1", "--out", str(m)], capsys)[0] == 0
    assert len(json.loads(m.read_text())["hamiltonian_terms"]) == 60


def test_efficiency_command(tmp_path, capsys):
    code, out, _ = run(["efficiency", "--out", str(tmp_path)], capsys)
    assert code == 0
    res = json.loads((tmp_path / "efficiency.json").read_text())
    assert abs(res["argmax_t_N_over_t_dc"]["MAE"] - 1.79) <= 0.05


def test_output_env_default(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path))
    assert run(["efficiency", "--kind", "MAE"], capsys)[0] == 0
    assert (tmp_path / "efficiency" / "efficiency.json").exists()


@pytest.mark.parametrize("argv", [
    ["bogus"],
    ["gen-dataset"],
    ["gen-dataset", "--preset", "no-such"],
    ["train", "--dataset", "/nonexistent/d.json"],
    ["spectrum"],
])
def test_usage_errors_exit_1(argv, capsys, monkeypatch, tmp_path):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path))
    try:
        code = cli.main(argv)
    except SystemExit as exc:
        code = exc.code
    assert code == 1
    assert capsys.readouterr().err


def test_numeric_failure_exit_2(tmp_path, capsys):
    cfg = tmp_path / "small.json"
    cfg.write_text(json.dumps({"n_bs": 1, "n_ts": 4, "t_final": 2.0}))
    d = tmp_path / "data"
    run(["gen-dataset", "--preset", "spin32-tdep", "--config", str(cfg), "--out", str(d)], capsys)
    code, _, _ = run(["train", "--dataset", str(d / "dataset.json"), "--optimizer", "gd", "--lr", "1e9",
                      "--epochs", "3", "--no-early-stop", "--out", str(tmp_path / "fit")], capsys)
    assert code == 2


def test_reproduce_failure_marker(tmp_path, capsys):
    code, _, _ = run(["reproduce", "fig2", "--optimizer", "gd", "--lr", "1e9", "--epochs", "2",
                      "--n-ini", "1", "--out", str(tmp_path)], capsys)
    assert code == 2
    assert (tmp_path / "FAILED").exists()
    assert (tmp_path / "spin32-tdep" / "dataset.json").exists()


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "lindlearn.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "lindlearn" in out.stdout
