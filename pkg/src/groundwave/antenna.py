"""Parametric phased-array beams and steering codebooks."""

import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, model_validator

logger = logging.getLogger(__name__)

# Gaussian main lobe: -12 (delta/bw)^2 puts the half-power point at bw/2
MAIN_LOBE_COEFF = 12.0
SIDE_LOBE_FLOOR_DB = 20.0
ANGLE_TOLERANCE = 1e-9


class Beam(BaseModel):
    """One steering choice: boresight, half-power beamwidths and peak gain."""

    model_config = ConfigDict(frozen=True)

    index: int = Field(ge=0)
    azimuth: float
    elevation: float
    az_beamwidth: float = Field(gt=0, le=360)
    el_beamwidth: float = Field(gt=0, le=180)
    peak_gain: float = Field(ge=0)


class Codebook(BaseModel):
    """Beams ordered row by row: one row per elevation, azimuth ascending."""

    model_config = ConfigDict(frozen=True)

    beams: tuple[Beam, ...]
    sector_start: float
    sector_end: float
    elevation_rows: tuple[float, ...]

    @model_validator(mode="after")
    def check_layout(self) -> "Codebook":
        """Beams are numbered by position, lie in the sector and never repeat a direction."""
        if not self.beams:
            raise ValueError("codebook has no beams")
        for position, beam in enumerate(self.beams):
            if beam.index != position:
                raise ValueError(f"beam at position {position} carries index {beam.index}")
            if not (
                self.sector_start - ANGLE_TOLERANCE
                <= beam.azimuth
                <= self.sector_end + ANGLE_TOLERANCE
            ):
                raise ValueError(f"beam {beam.index} azimuth {beam.azimuth} outside sector")
        pairs = {(round(b.azimuth, 9), round(b.elevation, 9)) for b in self.beams}
        if len(pairs) != len(self.beams):
            raise ValueError("duplicate (azimuth, elevation) pair in codebook")
        return self

    def __len__(self) -> int:
        """Number of beams."""
        return len(self.beams)

    def __getitem__(self, index: int) -> Beam:
        """Beam by codebook index."""
        return self.beams[index]

    def __contains__(self, beam: object) -> bool:
        """True for a beam stored at its own index."""
        return (
            isinstance(beam, Beam)
            and 0 <= beam.index < len(self.beams)
            and self.beams[beam.index] == beam
        )


_codebook_adapter = TypeAdapter(Codebook)


def build_codebook(
    n_az: int = 25,
    sector: float = 120.0,
    az_bw: float = 18.0,
    el_rows: list[float] | tuple[float, ...] = (0.0,),
    el_bw: float = 60.0,
    peak_gain: float = 17.0,
    center: float = 0.0,
) -> Codebook:
    """Uniform azimuth grid (spacing sector/n_az, centered) repeated for each elevation row."""
    if n_az < 1:
        raise ValueError(f"n_az must be at least 1, got {n_az}")
    if sector <= 0 or az_bw <= 0 or el_bw <= 0:
        raise ValueError("sector and beamwidths must be positive")
    if not el_rows:
        raise ValueError("at least one elevation row is required")

    spacing = sector / n_az
    start = center - sector / 2
    azimuths = start + spacing * (np.arange(n_az) + 0.5)
    beams = []
    for elevation in el_rows:
        for azimuth in azimuths:
            beams.append(
                Beam(
                    index=len(beams),
                    azimuth=float(azimuth),
                    elevation=float(elevation),
                    az_beamwidth=az_bw,
                    el_beamwidth=el_bw,
                    peak_gain=peak_gain,
                )
            )
    logger.debug(f"Built codebook: {n_az} x {len(el_rows)} beams, spacing {spacing:.2f} deg")
    return Codebook(
        beams=tuple(beams),
        sector_start=start,
        sector_end=start + sector,
        elevation_rows=tuple(float(e) for e in el_rows),
    )


def tilt_codebook(cb: Codebook, tilt: float) -> Codebook:
    """Rotate every beam ``tilt`` degrees downward, as a physically tilted array."""
    beams = tuple(b.model_copy(update={"elevation": b.elevation - tilt}) for b in cb.beams)
    return cb.model_copy(
        update={"beams": beams, "elevation_rows": tuple(e - tilt for e in cb.elevation_rows)}
    )


def wrap_angle(delta: float) -> float:
    """Wrap an angle difference into (-180, 180]."""
    wrapped = (delta + 180.0) % 360.0 - 180.0
    return 180.0 if wrapped == -180.0 else wrapped


def gain(beam: Beam, toward_azimuth: float, toward_elevation: float) -> float:
    """
    Gain in dBi toward a direction.

    Args:
        beam: The beam whose pattern is evaluated.
        toward_azimuth: Direction azimuth in degrees.
        toward_elevation: Direction elevation in degrees.

    Returns:
        Peak gain less a Gaussian main-lobe rolloff, floored at the side lobes.
    """
    d_az = wrap_angle(toward_azimuth - beam.azimuth)
    d_el = wrap_angle(toward_elevation - beam.elevation)
    rolloff = MAIN_LOBE_COEFF * ((d_az / beam.az_beamwidth) ** 2 + (d_el / beam.el_beamwidth) ** 2)
    return beam.peak_gain - min(rolloff, SIDE_LOBE_FLOOR_DB)


def best_beam(cb: Codebook, toward_azimuth: float, toward_elevation: float) -> Beam:
    """Highest-gain beam toward a direction; lowest index wins ties."""
    gains = [gain(b, toward_azimuth, toward_elevation) for b in cb.beams]
    return cb.beams[int(np.argmax(gains))]


def _same_azimuth(a: Beam, b: Beam) -> bool:
    return abs(wrap_angle(a.azimuth - b.azimuth)) <= ANGLE_TOLERANCE


def elevation_neighbors(cb: Codebook, beam: Beam, window: float) -> list[Beam]:
    """Beams on ``beam``'s azimuth within ``window`` degrees in elevation, nearest first.

    Equal distances put the downward neighbor first.
    """
    neighbors = [
        b
        for b in cb.beams
        if b.index != beam.index
        and _same_azimuth(b, beam)
        and abs(b.elevation - beam.elevation) <= window + ANGLE_TOLERANCE
    ]
    return sorted(
        neighbors,
        key=lambda b: (round(abs(b.elevation - beam.elevation), 9), b.elevation > beam.elevation),
    )


def azimuth_neighbors(cb: Codebook, beam: Beam) -> list[Beam]:
    """Immediate left and right neighbors in ``beam``'s elevation row."""
    row = elevation_row(cb, beam.elevation)
    position = next(i for i, b in enumerate(row) if b.index == beam.index)
    return [row[i] for i in (position - 1, position + 1) if 0 <= i < len(row)]


def elevation_row(cb: Codebook, elevation: float) -> list[Beam]:
    """Beams of one elevation row, azimuth ascending."""
    row = [b for b in cb.beams if abs(b.elevation - elevation) <= ANGLE_TOLERANCE]
    return sorted(row, key=lambda b: b.azimuth)


def dump_codebook(cb: Codebook) -> str:
    """Serialize a codebook to JSON."""
    return cb.model_dump_json(indent=2)


def load_codebook(text: str) -> Codebook:
    """Read a codebook written by dump_codebook."""
    return _codebook_adapter.validate_json(text)
