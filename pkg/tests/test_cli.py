import json
import subprocess
import sys

import numpy as np
import pandas as pd
import pytest

from poisim.analysis import SAMPLE_COLUMNS
from poisim.cli import load_config, main
from poisim.runner import desk_profile, full_scale_profile
from poisim.scenario import ExperimentConfig, PopulationSpec


@pytest.fixture
def tiny_config_file(tmp_path):
    cfg = ExperimentConfig(poi_setups=[{"n": 4, "spacing": 2.0}, {"n": 4, "spacing": 7.33}],
                           n_stopping=[1], t_stopping_min=[0.25], replicates=1,
                           population=PopulationSpec(total=6, infectors=1, dwell=60.0))
    path = tmp_path / "tiny.json"
    cfg.dump(path)
    return path


def test_profiles_match_code():
    assert load_config("desk") == desk_profile()
    assert load_config("full") == full_scale_profile()


def test_run_explicit(tmp_path, capsys):
    out = tmp_path / "r"
    rc = main(["run", "--n-pois", "4", "--agents", "5", "--infectors", "1", "--dwell", "1",
               "--n-stopping", "1", "--t-stopping", "0.2", "--seed", "3", "--trajectories",
               "--voronoi", "--out", str(out)])
    assert rc == 0
    row = json.loads((out / "result.json").read_text())
    assert row["n_agents"] == 5 and row["seed"] == 3
    assert (out / "trajectories.csv").exists() and (out / "voronoi.csv").exists()
    assert json.loads(capsys.readouterr().out)["seed"] == 3


def test_run_grid_selection(tmp_path, tiny_config_file):
    out = tmp_path / "g"
    assert main(["run", "--config", str(tiny_config_file), "--scenario-id", "1", "--out", str(out)]) == 0
    row = json.loads((out / "result.json").read_text())
    assert row["scenario_id"] == 1 and row["d_crowding"] == 1


def test_batch_report_analyze(tmp_path, tiny_config_file, monkeypatch):
    monkeypatch.setenv("POISIM_OUTPUT_ROOT", str(tmp_path / "root"))
    assert main(["batch", str(tiny_config_file), "--quiet"]) == 0
    batch = tmp_path / "root" / "batch"
    sample = pd.read_csv(batch / "sample_table.csv")
    assert len(sample) == 2
    assert main(["report", str(batch), "--out", str(tmp_path / "rep")]) == 0
    pd.testing.assert_frame_equal(pd.read_csv(tmp_path / "rep" / "sample_table.csv"), sample)

    # analysis needs variation in every column; use a synthetic table
    rng = np.random.default_rng(0)
    n = 120
    t = pd.DataFrame(rng.random((n, len(SAMPLE_COLUMNS))), columns=SAMPLE_COLUMNS)
    t["t_total_stop"] = t.n_stopping * t.t_stopping
    t.to_csv(tmp_path / "s.csv", index=False)
    out = tmp_path / "an"
    assert main(["analyze", str(tmp_path / "s.csv"), "--resamples", "100", "--refutations", "5",
                 "--out", str(out)]) == 0
    eff = pd.read_csv(out / "effects.csv")
    assert set(eff.model) == {"Model A", "Model B"}
    assert {"ci_low", "ci_high", "p_value", "decision"} <= set(eff.columns)
    assert len(pd.read_csv(out / "ate.csv")) == 2
    assert "Model A" in (out / "report.txt").read_text()
    fits = pd.read_csv(out / "fit_indices.csv")
    assert {"chi2", "df", "gfi", "cfi", "rmsea"} <= set(fits.columns)


def test_bad_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"replicates": 1, "colour": "red"}))
    assert main(["batch", str(bad)]) == 2
    assert "colour" in capsys.readouterr().err


def test_missing_table(tmp_path):
    assert main(["analyze", str(tmp_path / "none.csv")]) == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "poisim.cli", "--version"], capture_output=True,
                         text=True, check=True)
    assert out.stdout.startswith("poisim ")
