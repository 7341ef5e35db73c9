"""Ray geometry for an elevated transmitter facing a handset across flat ground.

Distances are meters, angles are degrees at the API boundary. Elevation is
positive above the horizontal. Stations along the Tx-Rx line are measured from
the receiver, reflection points from the transmitter.
"""

import logging
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import InvalidGeometryError

logger = logging.getLogger(__name__)


class SiteGeometry(BaseModel):
    """Heights, separation and downward tilt of the transmitter."""

    model_config = ConfigDict(frozen=True)

    h_tx: float = Field(default=2.5, gt=0, description="Transmitter array height (m)")
    h_rx: float = Field(default=1.0, gt=0, description="Receiver array height (m)")
    d_tr: float = Field(default=6.0, gt=0, description="Horizontal Tx-Rx separation (m)")
    tilt_tx: float = Field(default=0.0, ge=0, lt=90, description="Downward Tx tilt (deg)")

    @model_validator(mode="after")
    def check_heights(self) -> "SiteGeometry":
        if self.h_tx <= self.h_rx:
            raise ValueError(f"h_tx ({self.h_tx}) must exceed h_rx ({self.h_rx})")
        return self


class Blocker(BaseModel):
    """A pedestrian standing on the Tx-Rx line.

    The body occludes the vertical band ``[clearance, height]`` over ``width``
    centered ``azimuth_offset`` meters off the LoS vertical plane.
    """

    model_config = ConfigDict(frozen=True)

    height: float = Field(default=1.78, gt=0)
    distance_from_rx: float = Field(default=0.0, ge=0)
    azimuth_offset: float = 0.0
    width: float = Field(default=0.5, gt=0)
    clearance: float = Field(default=0.0, ge=0)

    @model_validator(mode="after")
    def check_clearance(self) -> "Blocker":
        if self.clearance >= self.height:
            raise ValueError("clearance must be below the blocker height")
        return self


class PathKind(str, Enum):
    LOS = "los"
    GROUND_REFLECTION = "ground_reflection"
    NLOS = "nlos"


class RayPath(BaseModel):
    """A propagation path with its end-point angles."""

    model_config = ConfigDict(frozen=True)

    kind: PathKind
    length: float = Field(gt=0)
    departure_elevation: float
    arrival_elevation: float
    departure_azimuth: float = 0.0
    arrival_azimuth: float = 0.0
    reflection_point: float | None = None
    extra_loss: float = Field(default=0.0, ge=0)


def _require_elevated(geom: SiteGeometry) -> None:
    if geom.h_tx <= geom.h_rx:
        raise InvalidGeometryError(
            f"transmitter ({geom.h_tx} m) must sit above receiver ({geom.h_rx} m)"
        )


def blocker_reach(geom: SiteGeometry, h_b: float) -> float:
    """Farthest blocker station (from Rx) at which a blocker of height ``h_b`` cuts the LoS."""
    _require_elevated(geom)
    if h_b <= geom.h_rx:
        return 0.0
    if h_b >= geom.h_tx:
        return geom.d_tr
    return geom.d_tr * (h_b - geom.h_rx) / (geom.h_tx - geom.h_rx)


def los_path(geom: SiteGeometry) -> RayPath:
    """Straight ray from the transmitter down to the receiver."""
    rise = geom.h_tx - geom.h_rx
    elevation = float(np.degrees(np.arctan2(rise, geom.d_tr)))
    return RayPath(
        kind=PathKind.LOS,
        length=float(np.hypot(geom.d_tr, rise)),
        departure_elevation=-elevation,
        arrival_elevation=elevation,
    )


def ground_reflection_path(geom: SiteGeometry) -> RayPath:
    """Specular ground bounce built from the transmitter's image below z = 0."""
    total = geom.h_tx + geom.h_rx
    elevation = float(np.degrees(np.arctan2(total, geom.d_tr)))
    return RayPath(
        kind=PathKind.GROUND_REFLECTION,
        length=float(np.hypot(geom.d_tr, total)),
        departure_elevation=-elevation,
        arrival_elevation=-elevation,
        reflection_point=geom.d_tr * geom.h_tx / total,
    )


def ray_height(geom: SiteGeometry, path: RayPath, station: float) -> float | None:
    """Height of ``path`` above ground at ``station`` meters from the receiver.

    Returns None outside the Tx-Rx span or for paths that leave the LoS plane.
    """
    if station < 0 or station > geom.d_tr:
        return None
    if path.kind is PathKind.LOS:
        return geom.h_rx + (geom.h_tx - geom.h_rx) * station / geom.d_tr
    if path.kind is PathKind.GROUND_REFLECTION:
        bounce = path.reflection_point
        if bounce is None:
            bounce = geom.d_tr * geom.h_tx / (geom.h_tx + geom.h_rx)
        rx_leg = geom.d_tr - bounce
        if station <= rx_leg:
            # Rx leg coincides with the straight line to the transmitter image
            return geom.h_rx * (1.0 - station / rx_leg)
        return geom.h_tx * (station - rx_leg) / bounce
    return None


def is_blocked(geom: SiteGeometry, path: RayPath, blocker: Blocker) -> bool:
    """
    Whether a blocker's body intersects a ray.

    Args:
        geom: Site the ray runs through.
        path: LoS or ground-reflected ray; other paths are never blocked.
        blocker: Body band and its offset from the LoS plane.

    Returns:
        True when the blocker straddles the ray's vertical plane and the ray
        height at the blocker's station lies inside the occluded band.
    """
    if abs(blocker.azimuth_offset) > blocker.width / 2:
        return False
    height = ray_height(geom, path, blocker.distance_from_rx)
    if height is None:
        return False
    return blocker.clearance <= height <= blocker.height
