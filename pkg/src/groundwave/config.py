"""Process settings and the scenario configuration document."""

import json
import logging
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .antenna import Codebook, build_codebook, load_codebook, tilt_codebook
from .baselines import AccessModel, PolicyKind
from .blockage import load_events
from .channel import (
    MEASURED_GR_ROWS,
    CalibrationResult,
    CalibrationTargets,
    GrTarget,
    LinkBudget,
    SurfaceKind,
    SurfaceProfile,
)
from .errors import ConfigError
from .geometry import Blocker, SiteGeometry
from .protocol import ProtocolSettings
from .simcore import Scenario

logger = logging.getLogger(__name__)

BUNDLED_CONFIG = Path(__file__).parent / "data" / "testbed.json"


class Settings(BaseSettings):
    """Process-level settings read from GROUNDWAVE_* environment variables."""

    model_config = SettingsConfigDict(
        env_prefix="GROUNDWAVE_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    log: str = Field(default="INFO", description="Log level name")
    out_dir: str = Field(default="out", description="Default output directory")

    @field_validator("log", mode="after")
    @classmethod
    def normalize_level(cls, v: str) -> str:
        """Accept log levels in any case."""
        level = v.strip().upper()
        if level not in logging.getLevelNamesMapping():
            raise ValueError(f"unknown log level {v!r}")
        return level


def _parse_floats(v: Any) -> Any:
    """Accept "0,-30,30" wherever a list of angles is expected."""
    if isinstance(v, str):
        return [float(x.strip()) for x in v.split(",") if x.strip()]
    return v


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SiteSection(_Section):
    h_tx_m: float = 2.5
    h_rx_m: float = 1.0
    d_tr_m: float = 6.0
    tilt_deg: float = 20.0


class AntennaSection(_Section):
    n_beams: int = Field(default=25, gt=0)
    sector_deg: float = 120.0
    az_beamwidth_deg: float = 18.0
    el_beamwidth_deg: float = 60.0
    peak_gain_db: float = 17.0
    tx_elevation_rows_deg: tuple[float, ...] = (0.0,)
    rx_elevation_rows_deg: tuple[float, ...] = (0.0, -30.0, 30.0)
    tx_codebook_file: str | None = None
    rx_codebook_file: str | None = None

    @field_validator("tx_elevation_rows_deg", "rx_elevation_rows_deg", mode="before")
    @classmethod
    def parse_rows(cls, v: Any) -> Any:
        return _parse_floats(v)


class LinkSection(_Section):
    tx_power_dbm: float = 20.0
    noise_floor_dbm: float = -78.0
    carrier_ghz: float = 60.0
    bandwidth_ghz: float = 2.0
    system_loss_db: float | None = None
    noise_sigma_db: float = Field(default=0.5, ge=0)


class BlockageSection(_Section):
    rate_per_s: float = Field(default=0.2, ge=0)
    duration_min_ms: float = 100.0
    duration_max_ms: float = 300.0
    pedestrian_height_m: float = 1.78
    pedestrian_width_m: float = 0.5
    pedestrian_clearance_m: float = 0.8
    events_file: str | None = None


class ProtocolSection(_Section):
    detection_margin_db: float = 3.0
    rbo_timer_ms: float = 100.0
    reentry_hysteresis_db: float = 3.0
    alignment_drop_db: float = 3.0
    peak_smoothing: float = 0.1


class AccessSection(_Section):
    n_sweep_beams: int = 64
    sweep_period_ms: float = 20.0
    attach_overhead_ms: float = 500.0


class NlosSection(_Section):
    enabled: bool = True
    penalty_db: float = 10.0
    azimuth_deg: float = 30.0


class SimulationSection(_Section):
    policy: PolicyKind = PolicyKind.GROUND_REFLECTION
    surface: SurfaceKind = SurfaceKind.OUTDOOR_CONCRETE
    horizon_s: float = Field(default=60.0, gt=0)
    probe_interval_ms: float = Field(default=10.0, gt=0)
    seed: int = 42
    rx_azimuth_drift_deg_per_s: float = 0.0


class CalibrationSection(_Section):
    rss_los_dbm: float = -60.0
    reference_tilt_deg: float = 0.0
    max_residual_db: float = 3.0
    inline: bool = Field(default=False, description="Calibrate before every run")
    rows: tuple[GrTarget, ...] = MEASURED_GR_ROWS


class SweepSection(_Section):
    tilt_deg: tuple[float, ...] = (0.0, 10.0, 20.0)

    @field_validator("tilt_deg", mode="before")
    @classmethod
    def parse_tilts(cls, v: Any) -> Any:
        return _parse_floats(v)


class Config(_Section):
    """The scenario document; every section falls back to the measured testbed."""

    site: SiteSection = SiteSection()
    antenna: AntennaSection = AntennaSection()
    link: LinkSection = LinkSection()
    blockage: BlockageSection = BlockageSection()
    protocol: ProtocolSection = ProtocolSection()
    access: AccessSection = AccessSection()
    nlos: NlosSection = NlosSection()
    simulation: SimulationSection = SimulationSection()
    calibration: CalibrationSection = CalibrationSection()
    sweep: SweepSection = SweepSection()

    def site_geometry(self) -> SiteGeometry:
        """Site geometry from the site section."""
        s = self.site
        return SiteGeometry(h_tx=s.h_tx_m, h_rx=s.h_rx_m, d_tr=s.d_tr_m, tilt_tx=s.tilt_deg)

    def _codebook(self, rows: tuple[float, ...], path: str | None) -> Codebook:
        if path is not None:
            return load_codebook(Path(path).read_text())
        a = self.antenna
        return build_codebook(
            n_az=a.n_beams,
            sector=a.sector_deg,
            az_bw=a.az_beamwidth_deg,
            el_rows=rows,
            el_bw=a.el_beamwidth_deg,
            peak_gain=a.peak_gain_db,
        )

    def tx_codebook(self) -> Codebook:
        """Untilted transmitter codebook."""
        return self._codebook(self.antenna.tx_elevation_rows_deg, self.antenna.tx_codebook_file)

    def rx_codebook(self) -> Codebook:
        """Receiver codebook with every configured elevation row."""
        return self._codebook(self.antenna.rx_elevation_rows_deg, self.antenna.rx_codebook_file)

    def link_budget(self) -> LinkBudget:
        """Link budget; the system loss stays unset unless configured."""
        k = self.link
        return LinkBudget(
            tx_power=k.tx_power_dbm,
            system_loss=k.system_loss_db,
            noise_floor=k.noise_floor_dbm,
            carrier_frequency=k.carrier_ghz,
            bandwidth=k.bandwidth_ghz,
        )

    def pedestrian(self) -> Blocker:
        """Body template the blockage generator places on the link."""
        b = self.blockage
        return Blocker(
            height=b.pedestrian_height_m,
            width=b.pedestrian_width_m,
            clearance=b.pedestrian_clearance_m,
        )

    def calibration_targets(self) -> CalibrationTargets:
        """Measured rows the calibration fits."""
        c = self.calibration
        return CalibrationTargets(
            rss_los_dbm=c.rss_los_dbm,
            reference_tilt_deg=c.reference_tilt_deg,
            gr_rows=c.rows,
            max_residual_db=c.max_residual_db,
        )

    def scenario(self, calibration: CalibrationResult | None = None) -> Scenario:
        """Assemble a simulation scenario, replaying the events file when one is set."""
        geom = self.site_geometry()
        events = None
        if self.blockage.events_file is not None:
            events = tuple(load_events(Path(self.blockage.events_file).read_text()))
        p, a, sim = self.protocol, self.access, self.simulation
        return Scenario(
            geom=geom,
            surface=SurfaceProfile(name=sim.surface),
            budget=self.link_budget(),
            calibration=calibration,
            tx_codebook=tilt_codebook(self.tx_codebook(), geom.tilt_tx),
            rx_codebook=self.rx_codebook(),
            blockage_rate=self.blockage.rate_per_s,
            duration_range=(self.blockage.duration_min_ms, self.blockage.duration_max_ms),
            pedestrian=self.pedestrian(),
            events=events,
            policy=sim.policy,
            access=AccessModel(
                n_sweep_beams=a.n_sweep_beams,
                sweep_period=a.sweep_period_ms,
                attach_overhead=a.attach_overhead_ms,
            ),
            protocol=ProtocolSettings(
                detection_margin_db=p.detection_margin_db,
                rbo_timer_ms=p.rbo_timer_ms,
                reentry_hysteresis_db=p.reentry_hysteresis_db,
                alignment_drop_db=p.alignment_drop_db,
                peak_smoothing=p.peak_smoothing,
            ),
            nlos_penalty_db=self.nlos.penalty_db if self.nlos.enabled else None,
            nlos_azimuth_deg=self.nlos.azimuth_deg,
            noise_sigma_db=self.link.noise_sigma_db,
            rx_azimuth_drift_deg_per_s=sim.rx_azimuth_drift_deg_per_s,
            horizon=sim.horizon_s * 1000.0,
            probe_interval=sim.probe_interval_ms,
            seed=sim.seed,
        )


def parse_config(text: str) -> Config:
    """
    Validate a JSON config document.

    Args:
        text: JSON with any subset of the config sections.

    Returns:
        The config with defaults filled in for missing keys.
    """
    try:
        return Config.model_validate(json.loads(text))
    except (json.JSONDecodeError, ValidationError) as e:
        raise ConfigError(f"invalid configuration: {e}") from e


def load_config(path: Path | str | None = None) -> Config:
    """Read a config document; None loads the bundled testbed defaults."""
    path = Path(path) if path is not None else BUNDLED_CONFIG
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    logger.debug(f"Loaded config from {path}")
    return parse_config(text)


def dump_config(config: Config) -> str:
    """Serialize a config back to a JSON document ``parse_config`` accepts."""
    return config.model_dump_json(indent=2)


settings = Settings()
