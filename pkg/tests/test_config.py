"""Tests for configuration module."""

import pytest
from pydantic import ValidationError

from groundwave.baselines import PolicyKind
from groundwave.channel import SurfaceKind
from groundwave.config import Config, Settings, dump_config, load_config, parse_config
from groundwave.errors import ConfigError

ENV_VARS = ["GROUNDWAVE_LOG", "GROUNDWAVE_OUT_DIR"]


def test_settings_default_values(monkeypatch):
    """Test that settings load with default values."""
    for var in ENV_VARS:
        monkeypatch.delenv(var, raising=False)

    settings = Settings(_env_file=None)

    assert settings.log == "INFO"
    assert settings.out_dir == "out"


def test_settings_from_environment(monkeypatch):
    """GROUNDWAVE_LOG is case-insensitive."""
    monkeypatch.setenv("GROUNDWAVE_LOG", "debug")
    monkeypatch.setenv("GROUNDWAVE_OUT_DIR", "/tmp/runs")

    settings = Settings(_env_file=None)

    assert settings.log == "DEBUG"
    assert settings.out_dir == "/tmp/runs"


def test_settings_reject_unknown_level(monkeypatch):
    """A log level logging does not know is rejected."""
    monkeypatch.setenv("GROUNDWAVE_LOG", "chatty")
    with pytest.raises(ValidationError):
        Settings(_env_file=None)


def test_bundled_config_matches_defaults():
    """The shipped document spells out the testbed defaults."""
    config = load_config()
    assert config == Config()
    assert config.site.h_tx_m == 2.5
    assert config.site.tilt_deg == 20.0
    assert config.antenna.n_beams == 25
    assert config.simulation.policy is PolicyKind.GROUND_REFLECTION
    assert len(config.calibration.rows) == 18


def test_config_round_trip():
    """A dumped config parses back to the same config."""
    config = load_config()
    assert parse_config(dump_config(config)) == config


def test_missing_keys_filled():
    """Partial documents take the testbed defaults for the rest."""
    config = parse_config('{"site": {"tilt_deg": 10}}')
    assert config.site.tilt_deg == 10.0
    assert config.site.h_tx_m == 2.5
    assert config.link.noise_floor_dbm == -78.0


def test_unknown_keys_rejected():
    """Typos, unknown sections and malformed JSON are config errors."""
    with pytest.raises(ConfigError):
        parse_config('{"site": {"height": 3}}')
    with pytest.raises(ConfigError):
        parse_config('{"radar": {}}')
    with pytest.raises(ConfigError):
        parse_config("not json")


def test_rows_parsed_from_comma_string():
    """Elevation rows and tilts may be given as comma-separated strings."""
    config = parse_config('{"antenna": {"rx_elevation_rows_deg": "0, -30, 30"}}')
    assert config.antenna.rx_elevation_rows_deg == (0.0, -30.0, 30.0)
    sweep = parse_config('{"sweep": {"tilt_deg": "0,20"}}')
    assert sweep.sweep.tilt_deg == (0.0, 20.0)


def test_load_config_missing_file(tmp_path):
    """A missing config file is a config error."""
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.json")


def test_scenario_from_config():
    """The scenario tilts the transmit codebook and converts seconds to ms."""
    scenario = parse_config('{"simulation": {"surface": "outdoor-gravel"}}').scenario()
    assert scenario.tx_codebook.elevation_rows == (-20.0,)
    assert scenario.rx_codebook.elevation_rows == (0.0, -30.0, 30.0)
    assert scenario.horizon == 60_000.0
    assert scenario.surface.name is SurfaceKind.OUTDOOR_GRAVEL
    assert scenario.nlos_penalty_db == 10.0
    assert scenario.budget.system_loss is None


def test_scenario_replays_event_file(tmp_path):
    """An events file replaces the generated blockages."""
    events = tmp_path / "events.json"
    events.write_text(
        '[{"start": 500.0, "duration": 150.0, "blocker": {"distance_from_rx": 2.0}}]'
    )
    config = parse_config(f'{{"blockage": {{"events_file": "{events}"}}}}')
    scenario = config.scenario()
    assert len(scenario.events) == 1
    assert scenario.events[0].start == 500.0
