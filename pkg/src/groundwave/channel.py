"""Link budget: RSS for a beam pair over a ray path, calibration, noisy measurement."""

import logging
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .antenna import Beam, Codebook, best_beam, gain, tilt_codebook
from .blockage import PEDESTRIAN
from .errors import CalibrationError, CalibrationMissingError
from .geometry import (
    Blocker,
    PathKind,
    RayPath,
    SiteGeometry,
    ground_reflection_path,
    is_blocked,
    los_path,
)

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0


class SurfaceKind(str, Enum):
    INDOOR_CONCRETE_TILE = "indoor-concrete-tile"
    OUTDOOR_CONCRETE = "outdoor-concrete"
    OUTDOOR_GRAVEL = "outdoor-gravel"

    @property
    def outdoor(self) -> bool:
        """Whether the surface was measured outdoors."""
        return self is not SurfaceKind.INDOOR_CONCRETE_TILE


class SurfaceProfile(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: SurfaceKind
    reflection_loss: float = Field(default=0.0, ge=0, description="Effective specular loss (dB)")


class LinkBudget(BaseModel):
    """Radio constants. ``system_loss`` stays None until calibrated."""

    model_config = ConfigDict(frozen=True)

    tx_power: float = Field(default=20.0, description="dBm")
    system_loss: float | None = Field(default=None, description="dB")
    noise_floor: float = Field(default=-78.0, description="dBm")
    carrier_frequency: float = Field(default=60.0, gt=0, description="GHz")
    bandwidth: float = Field(default=2.0, gt=0, description="GHz")

    @property
    def delay_resolution_ns(self) -> float:
        """Smallest excess delay the receiver can tell apart."""
        return 1.0 / self.bandwidth


class LinkSample(BaseModel):
    """One RSS report for a (Tx beam, Rx beam) pair."""

    model_config = ConfigDict(frozen=True)

    time: float
    tx_beam: int
    rx_beam: int
    rss: float
    blocked_los: bool = False
    path: PathKind | None = None
    excess_delay_ns: float = 0.0


def fspl(distance: float, frequency: float) -> float:
    """Free-space path loss in dB for meters and GHz."""
    if distance <= 0 or frequency <= 0:
        raise ValueError(f"distance and frequency must be positive, got {distance}, {frequency}")
    return float(
        20 * np.log10(distance)
        + 20 * np.log10(frequency * 1e9)
        + 20 * np.log10(4 * np.pi / SPEED_OF_LIGHT)
    )


def synthetic_nlos_path(
    geom: SiteGeometry, penalty: float = 10.0, azimuth: float = 30.0
) -> RayPath:
    """A side-scattered path pinned ``penalty`` dB below the LoS for aligned beams.

    Its length is that of a bounce off a wall parallel to the LoS, so the
    arrival is late like any scattered path; ``extra_loss`` absorbs the rest
    of the penalty.
    """
    los = los_path(geom)
    lateral = geom.d_tr * float(np.tan(np.radians(abs(azimuth))))
    length = float(np.hypot(los.length, lateral))
    spreading = fspl(length, 1.0) - fspl(los.length, 1.0)
    return RayPath(
        kind=PathKind.NLOS,
        length=length,
        departure_elevation=los.departure_elevation,
        arrival_elevation=los.arrival_elevation,
        arrival_azimuth=azimuth,
        extra_loss=max(penalty - spreading, 0.0),
    )


def rss(
    budget: LinkBudget,
    geom: SiteGeometry,
    surface: SurfaceProfile,
    tx_beam: Beam,
    rx_beam: Beam,
    path: RayPath,
    blockers: list[Blocker] | tuple[Blocker, ...] = (),
) -> float:
    """
    Noiseless received power over one path.

    Args:
        budget: Calibrated link budget.
        geom: Site the path runs through.
        surface: Ground the reflected path bounces off.
        tx_beam: Transmit beam, already tilted.
        rx_beam: Receive beam.
        path: The ray carrying the signal.
        blockers: Bodies that may cut the path.

    Returns:
        RSS in dBm, never below the noise floor; exactly the floor when blocked.
    """
    if budget.system_loss is None:
        raise CalibrationMissingError("link budget has no system loss; run calibration first")
    if any(is_blocked(geom, path, b) for b in blockers):
        return budget.noise_floor
    level = (
        budget.tx_power
        + gain(tx_beam, path.departure_azimuth, path.departure_elevation)
        + gain(rx_beam, path.arrival_azimuth, path.arrival_elevation)
        - fspl(path.length, budget.carrier_frequency)
        - budget.system_loss
        - path.extra_loss
    )
    if path.kind is PathKind.GROUND_REFLECTION:
        level -= surface.reflection_loss
    return max(level, budget.noise_floor)


def captured_path(rx_beam: Beam, paths: list[RayPath]) -> RayPath:
    """The path a narrow receive beam locks onto: highest receive gain, first listed on ties."""
    gains = [gain(rx_beam, p.arrival_azimuth, p.arrival_elevation) for p in paths]
    return paths[int(np.argmax(gains))]


def measure(
    budget: LinkBudget,
    geom: SiteGeometry,
    surface: SurfaceProfile,
    tx_beam: Beam,
    rx_beam: Beam,
    blockers: list[Blocker] | tuple[Blocker, ...],
    noise_sigma: float,
    rng: np.random.Generator,
    paths: list[RayPath] | None = None,
    time: float = 0.0,
) -> LinkSample:
    """Noisy RSS report on the path the receive beam captures."""
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    if paths is None:
        paths = [los_path(geom), ground_reflection_path(geom)]
    los = next((p for p in paths if p.kind is PathKind.LOS), None) or los_path(geom)
    path = captured_path(rx_beam, paths)

    level = rss(budget, geom, surface, tx_beam, rx_beam, path, blockers)
    heard = level > budget.noise_floor
    if noise_sigma > 0:
        level += float(rng.normal(0.0, noise_sigma))
    delay = (path.length - los.length) / SPEED_OF_LIGHT * 1e9 if heard else 0.0
    return LinkSample(
        time=time,
        tx_beam=tx_beam.index,
        rx_beam=rx_beam.index,
        rss=max(level, budget.noise_floor),
        blocked_los=any(is_blocked(geom, los, b) for b in blockers),
        path=path.kind if heard else None,
        excess_delay_ns=max(delay, 0.0),
    )


class GrTarget(BaseModel):
    """One measured ground-reflection row."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    surface: SurfaceKind
    tilt_deg: float = Field(ge=0, lt=90)
    d_br_m: float = Field(ge=0)
    rss_gr_dbm: float


# (surface, tilt deg, D_BR m, RSS_GR dBm), each averaged over 100 measurements
_MEASURED_GR = (
    (SurfaceKind.INDOOR_CONCRETE_TILE, 0, 2, -65.7),
    (SurfaceKind.INDOOR_CONCRETE_TILE, 0, 3, -66.0),
    (SurfaceKind.INDOOR_CONCRETE_TILE, 10, 2, -64.5),
    (SurfaceKind.INDOOR_CONCRETE_TILE, 10, 3, -64.45),
    (SurfaceKind.INDOOR_CONCRETE_TILE, 20, 2, -64.4),
    (SurfaceKind.INDOOR_CONCRETE_TILE, 20, 3, -64.3),
    (SurfaceKind.OUTDOOR_CONCRETE, 0, 2, -66.0),
    (SurfaceKind.OUTDOOR_CONCRETE, 0, 3, -66.0),
    (SurfaceKind.OUTDOOR_CONCRETE, 10, 2, -64.7),
    (SurfaceKind.OUTDOOR_CONCRETE, 10, 3, -64.5),
    (SurfaceKind.OUTDOOR_CONCRETE, 20, 2, -64.1),
    (SurfaceKind.OUTDOOR_CONCRETE, 20, 3, -64.0),
    (SurfaceKind.OUTDOOR_GRAVEL, 0, 2, -66.1),
    (SurfaceKind.OUTDOOR_GRAVEL, 0, 3, -65.9),
    (SurfaceKind.OUTDOOR_GRAVEL, 10, 2, -64.8),
    (SurfaceKind.OUTDOOR_GRAVEL, 10, 3, -64.4),
    (SurfaceKind.OUTDOOR_GRAVEL, 20, 2, -64.4),
    (SurfaceKind.OUTDOOR_GRAVEL, 20, 3, -64.3),
)

MEASURED_GR_ROWS: tuple[GrTarget, ...] = tuple(
    GrTarget(surface=surface, tilt_deg=tilt, d_br_m=d_br, rss_gr_dbm=value)
    for surface, tilt, d_br, value in _MEASURED_GR
)


class CalibrationTargets(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    rss_los_dbm: float = -60.0
    reference_tilt_deg: float = Field(default=0.0, ge=0, lt=90)
    gr_rows: tuple[GrTarget, ...] = MEASURED_GR_ROWS
    max_residual_db: float = Field(default=3.0, gt=0)


class RowResidual(BaseModel):
    model_config = ConfigDict(frozen=True)

    surface: SurfaceKind
    tilt_deg: float
    d_br_m: float
    target_dbm: float
    predicted_dbm: float
    residual_db: float


class CalibrationResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    system_loss: float
    reflection_loss: dict[SurfaceKind, float]
    residuals: tuple[RowResidual, ...]
    max_abs_residual_db: float
    max_residual_db: float

    @property
    def passed(self) -> bool:
        """Whether every row came back within the residual bound."""
        return self.max_abs_residual_db <= self.max_residual_db

    def surface(self, kind: SurfaceKind) -> SurfaceProfile:
        """Profile carrying the fitted reflection loss of kind."""
        if kind not in self.reflection_loss:
            raise CalibrationMissingError(f"no calibration for surface {kind.value}")
        return SurfaceProfile(name=kind, reflection_loss=self.reflection_loss[kind])

    def apply(self, budget: LinkBudget) -> LinkBudget:
        """Copy of budget with the fitted system loss."""
        return budget.model_copy(update={"system_loss": self.system_loss})


def _row_prediction(
    budget: LinkBudget,
    geom: SiteGeometry,
    surface: SurfaceProfile,
    tx_codebook: Codebook,
    rx_codebook: Codebook,
    row: GrTarget,
    pedestrian: Blocker,
) -> float:
    tilted = geom.model_copy(update={"tilt_tx": row.tilt_deg})
    tx_cb = tilt_codebook(tx_codebook, row.tilt_deg)
    los = los_path(tilted)
    path = ground_reflection_path(tilted)
    tx_beam = best_beam(tx_cb, los.departure_azimuth, los.departure_elevation)
    rx_beam = best_beam(rx_codebook, path.arrival_azimuth, path.arrival_elevation)
    blocker = pedestrian.model_copy(update={"distance_from_rx": row.d_br_m})
    return rss(budget, tilted, surface, tx_beam, rx_beam, path, [blocker])


def calibrate(
    budget: LinkBudget,
    geom: SiteGeometry,
    targets: CalibrationTargets,
    tx_codebook: Codebook,
    rx_codebook: Codebook,
    pedestrian: Blocker = PEDESTRIAN,
    strict: bool = True,
) -> CalibrationResult:
    """Fit the system loss to the LoS anchor and one reflection loss per surface.

    ``tx_codebook`` is the untilted transmitter codebook; each row is evaluated
    with the codebook tilted by that row's tilt and the pedestrian standing at
    the row's D_BR. The reflection loss is the median of the per-row deficits,
    which minimises the mean absolute error.
    """
    if not targets.gr_rows:
        raise CalibrationError("calibration needs at least one ground-reflection row")

    reference = geom.model_copy(update={"tilt_tx": targets.reference_tilt_deg})
    los = los_path(reference)
    tx_cb = tilt_codebook(tx_codebook, targets.reference_tilt_deg)
    tx_beam = best_beam(tx_cb, los.departure_azimuth, los.departure_elevation)
    rx_beam = best_beam(rx_codebook, los.arrival_azimuth, los.arrival_elevation)
    unfloored = budget.model_copy(update={"system_loss": 0.0, "noise_floor": -np.inf})
    any_surface = SurfaceProfile(name=SurfaceKind.OUTDOOR_CONCRETE)
    system_loss = (
        rss(unfloored, reference, any_surface, tx_beam, rx_beam, los) - targets.rss_los_dbm
    )
    calibrated = budget.model_copy(update={"system_loss": system_loss})
    calibrated_unfloored = calibrated.model_copy(update={"noise_floor": -np.inf})

    reflection_loss: dict[SurfaceKind, float] = {}
    for kind in dict.fromkeys(row.surface for row in targets.gr_rows):
        rows = [row for row in targets.gr_rows if row.surface is kind]
        mirror = SurfaceProfile(name=kind)
        deficits = [
            _row_prediction(
                calibrated_unfloored, geom, mirror, tx_codebook, rx_codebook, row, pedestrian
            )
            - row.rss_gr_dbm
            for row in rows
        ]
        reflection_loss[kind] = max(float(np.median(deficits)), 0.0)

    residuals = []
    for row in targets.gr_rows:
        surface = SurfaceProfile(name=row.surface, reflection_loss=reflection_loss[row.surface])
        predicted = _row_prediction(
            calibrated, geom, surface, tx_codebook, rx_codebook, row, pedestrian
        )
        residuals.append(
            RowResidual(
                surface=row.surface,
                tilt_deg=row.tilt_deg,
                d_br_m=row.d_br_m,
                target_dbm=row.rss_gr_dbm,
                predicted_dbm=predicted,
                residual_db=predicted - row.rss_gr_dbm,
            )
        )

    result = CalibrationResult(
        system_loss=system_loss,
        reflection_loss=reflection_loss,
        residuals=tuple(residuals),
        max_abs_residual_db=max(abs(r.residual_db) for r in residuals),
        max_residual_db=targets.max_residual_db,
    )
    logger.info(
        f"Calibrated system loss {system_loss:.3f} dB, reflection losses "
        f"{ {k.value: round(v, 3) for k, v in reflection_loss.items()} }, "
        f"worst residual {result.max_abs_residual_db:.3f} dB"
    )
    if strict and not result.passed:
        logger.error(f"Calibration residual exceeds {targets.max_residual_db} dB")
        raise CalibrationError(
            f"residual {result.max_abs_residual_db:.2f} dB exceeds {targets.max_residual_db} dB",
            result=result,
        )
    return result
