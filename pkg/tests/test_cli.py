"""Tests for the command-line surface."""

import json
import logging

import pandas as pd
import pytest

from groundwave.channel import CalibrationResult
from groundwave.cli import EXIT_CALIBRATION, EXIT_OK, EXIT_USAGE, main


@pytest.fixture(scope="module")
def calibration_file(tmp_path_factory):
    """Calibration report fitted on the bundled configuration."""
    out = tmp_path_factory.mktemp("calibration")
    assert main(["calibrate", "--out", str(out)]) == EXIT_OK
    return out / "calibration.json"


def _write_config(tmp_path, document: dict):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(document))
    return str(path)


def test_calibrate_bundled_config(calibration_file):
    """The measured rows are all reproduced within 1 dB."""
    report = CalibrationResult.model_validate_json(calibration_file.read_text())
    assert report.passed
    assert all(abs(r.residual_db) <= 1.0 for r in report.residuals)


def test_calibrate_is_repeatable(calibration_file, tmp_path):
    """Two calibrations write byte-identical reports."""
    assert main(["calibrate", "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "calibration.json").read_bytes() == calibration_file.read_bytes()


def test_calibrate_contradictory_targets(tmp_path):
    """Rows 10 dB apart for one surface fail the 3 dB bound but still leave a report."""
    rows = [
        {"surface": "outdoor-concrete", "tilt_deg": 20, "d_br_m": 2, "rss_gr_dbm": -64.0},
        {"surface": "outdoor-concrete", "tilt_deg": 20, "d_br_m": 3, "rss_gr_dbm": -74.0},
    ]
    config = _write_config(tmp_path, {"calibration": {"rows": rows}})
    assert main(["calibrate", config, "--out", str(tmp_path / "out")]) == EXIT_CALIBRATION
    assert (tmp_path / "out" / "calibration.json").exists()


def test_unreadable_config(tmp_path):
    """Missing files and unknown keys exit with a usage error."""
    assert main(["calibrate", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == (
        EXIT_USAGE
    )
    bad = tmp_path / "bad.json"
    bad.write_text('{"site": {"height_m": 3}}')
    assert main(["run", str(bad), "--out", str(tmp_path)]) == EXIT_USAGE


def test_unknown_policy_is_usage_error(tmp_path):
    """Argparse rejects a policy it does not know."""
    with pytest.raises(SystemExit) as excinfo:
        main(["run", "--policy", "beamspy", "--out", str(tmp_path)])
    assert excinfo.value.code == EXIT_USAGE


def test_invalid_horizon_is_usage_error(calibration_file, tmp_path):
    """A zero horizon, or one too short for any blockage, is rejected as a usage error."""
    for horizon in ("0", "0.2"):
        argv = ["run", "--horizon-s", horizon, "--calibration", str(calibration_file)]
        assert main(argv + ["--out", str(tmp_path)]) == EXIT_USAGE
    assert not (tmp_path / "metrics.csv").exists()


def test_run_without_calibration_names_the_fix(tmp_path, caplog):
    """Without a report the error tells the user to calibrate."""
    with caplog.at_level(logging.ERROR):
        code = main(["run", "--out", str(tmp_path), "--horizon-s", "1"])
    assert code == EXIT_CALIBRATION
    assert "groundwave calibrate" in caplog.text


def test_run_writes_outputs(calibration_file, tmp_path, capsys):
    """A ten-second run writes every output file."""
    code = main(
        [
            "run",
            "--policy",
            "gr",
            "--horizon-s",
            "10",
            "--calibration",
            str(calibration_file),
            "--out",
            str(tmp_path),
            "--export-events",
        ]
    )
    assert code == EXIT_OK
    assert "policy=gr" in capsys.readouterr().out
    metrics = pd.read_csv(tmp_path / "metrics.csv")
    assert metrics.loc[0, "policy"] == "gr"
    assert metrics.loc[0, "measurements_per_discovery"] == 3
    trace = pd.read_csv(tmp_path / "trace.csv")
    assert list(trace.columns) == ["time_ms", "rss_dbm", "mode"]
    assert len(trace) == 1000
    assert (tmp_path / "transitions.log").read_text().startswith("0.0\tIA")
    assert (tmp_path / "events.json").exists()


def test_run_is_byte_identical(calibration_file, tmp_path):
    """Five runs with one seed write the same CSVs."""
    outputs = []
    for attempt in range(5):
        out = tmp_path / f"run{attempt}"
        argv = ["run", "--seed", "9", "--horizon-s", "15", "--out", str(out)]
        assert main(argv + ["--calibration", str(calibration_file)]) == EXIT_OK
        outputs.append(((out / "metrics.csv").read_bytes(), (out / "trace.csv").read_bytes()))
    assert all(o == outputs[0] for o in outputs)


def test_compare_measurement_counts(calibration_file, tmp_path):
    """Three probes for ground reflection, a 25-beam scan for the exhaustive policy."""
    argv = ["compare", "--horizon-s", "20", "--calibration", str(calibration_file)]
    assert main(argv + ["--out", str(tmp_path)]) == EXIT_OK
    table = pd.read_csv(tmp_path / "compare.csv").set_index("policy")
    assert list(table.index) == ["gr", "exhaustive", "scan-model", "handover"]
    assert table.loc["gr", "measurements"] == 3
    assert table.loc["exhaustive", "measurements"] == 25
    assert table.loc["scan-model", "measurements"] == 25


def test_compare_without_blockage(calibration_file, tmp_path):
    """No pedestrians, no outage for any policy."""
    config = _write_config(tmp_path, {"blockage": {"rate_per_s": 0.0}})
    argv = ["compare", config, "--horizon-s", "5", "--calibration", str(calibration_file)]
    assert main(argv + ["--out", str(tmp_path / "out")]) == EXIT_OK
    table = pd.read_csv(tmp_path / "out" / "compare.csv")
    assert (table["outage_ms"] == 0).all()


def test_compare_flags_missing_elevation_rows(calibration_file, tmp_path):
    """A single-row receiver cannot discover the bounce and says so."""
    config = _write_config(tmp_path, {"antenna": {"rx_elevation_rows_deg": [0.0]}})
    argv = ["compare", config, "--horizon-s", "5", "--calibration", str(calibration_file)]
    assert main(argv + ["--out", str(tmp_path / "out")]) == EXIT_OK
    table = pd.read_csv(tmp_path / "out" / "compare.csv").set_index("policy")
    assert table.loc["gr", "note"] == "GRD impossible"


def test_sweep_over_tilts(calibration_file, tmp_path, capsys):
    """One metrics row per configured tilt."""
    argv = ["sweep", "--horizon-s", "5", "--calibration", str(calibration_file)]
    assert main(argv + ["--out", str(tmp_path)]) == EXIT_OK
    table = pd.read_csv(tmp_path / "sweep.csv")
    assert len(table) == 3
    assert "tilt_deg=10" in capsys.readouterr().out


def test_sweep_is_byte_identical(calibration_file, tmp_path):
    """Grid points finish in any order but land in sweep.csv in grid order."""
    outputs = []
    for attempt in range(2):
        out = tmp_path / f"sweep{attempt}"
        argv = ["sweep", "--horizon-s", "5", "--calibration", str(calibration_file)]
        assert main(argv + ["--out", str(out)]) == EXIT_OK
        outputs.append((out / "sweep.csv").read_bytes())
    assert outputs[0] == outputs[1]
    table = pd.read_csv(tmp_path / "sweep0" / "sweep.csv")
    assert list(table["seed"])[0] == 42
