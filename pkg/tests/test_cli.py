import csv
import json

import pytest

from sketchlaw.cli import EXIT_CONFIG, EXIT_OK, load_config_file, main


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(
        "# tiny experiment\n"
        "d = 128\n"
        "a = 2.0\n"
        "M_grid = 4, 8, 16\n"
        "N_grid = 16, 32\n"
        "trials = 2\n"
        "sigma2 = 1.0\n"
        "gamma0 = 0.1\n"
    )
    return path


def test_config_parsing(config_file):
    values = load_config_file(config_file)
    assert values["d"] == 128
    assert values["M_grid"] == [4, 8, 16]
    assert values["a"] == 2.0


def test_config_rejects_unknown_key(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("frobnicate = 3\n")
    assert main(["simulate", "--config", str(path), "--seed", "1"]) == EXIT_CONFIG


def test_simulate_and_fit_flow(config_file, tmp_path, capsys):
    out = tmp_path / "run"
    code = main([
        "simulate", "--config", str(config_file), "--seed", "42",
        "--out", str(out), "--trials=3",
    ])
    assert code == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["records"] == 3 * 2 * 3
    assert (out / "records.csv").exists()
    assert (out / "manifest.json").exists()
    assert (out / "aggregate.csv").exists()

    # fitting this tiny grid is under-determined but must run end to end
    code = main(["fit", "--records", str(out / "records.csv"),
                 "--sigma2", "1.0", "--out", str(out / "fit.json")])
    assert code == EXIT_OK
    fit = json.loads((out / "fit.json").read_text())
    assert fit["n_points"] == 6 and fit["converged"]


def test_simulate_requires_seed(config_file):
    with pytest.raises(SystemExit) as err:
        main(["simulate", "--config", str(config_file)])
    assert err.value.code == 2  # argparse maps missing required args to 2


def test_simulate_missing_keys(tmp_path):
    path = tmp_path / "partial.cfg"
    path.write_text("d = 64\n")
    assert main(["simulate", "--config", str(path), "--seed", "3"]) == EXIT_CONFIG


def test_theory_subcommand(capsys):
    code = main(["theory", "--regime", "power_law", "--a", "1.5",
                 "--M", "64", "--N", "1024", "--gamma", "0.1"])
    assert code == EXIT_OK
    record = json.loads(capsys.readouterr().out)
    assert record["exponents"] == [0.5, 1.0 - 1.0 / 1.5]
    assert record["gamma_mode"] == "fixed"


def test_theory_tuned_mode(capsys):
    code = main(["theory", "--regime", "source", "--a", "2.0", "--b", "2.5",
                 "--M", "4096", "--N", "65536", "--gamma-mode", "tuned"])
    assert code == EXIT_OK
    record = json.loads(capsys.readouterr().out)
    assert record["stepsize_rule"]["kind"] == "value"


def test_theory_non_matching_is_config_error():
    assert main(["theory", "--regime", "source", "--a", "1.5", "--b", "3.0",
                 "--M", "8", "--N", "64", "--gamma-mode", "tuned"]) == EXIT_CONFIG


def test_spectra_check_csv(tmp_path, capsys):
    out = tmp_path / "conc.csv"
    code = main(["spectra-check", "--kind", "power_law", "--a", "2.0",
                 "--d", "256", "--M", "16", "--seed", "5",
                 "--out", str(out)])
    assert code == EXIT_OK
    with open(out, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["j", "eigenvalue", "predicted", "ratio"]
    assert len(rows) == 17


def test_plot_subcommand(config_file, tmp_path, capsys):
    out = tmp_path / "run"
    main(["simulate", "--config", str(config_file), "--seed", "9",
          "--out", str(out)])
    capsys.readouterr()
    code = main(["plot", "--records", str(out / "records.csv"),
                 "--out-dir", str(tmp_path / "plots")])
    assert code == EXIT_OK
    written = json.loads(capsys.readouterr().out)["written"]
    assert len(written) == 2
    assert all(p.endswith(".svg") for p in written)
