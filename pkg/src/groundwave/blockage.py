"""Pedestrian blockage events on the simulation timeline."""

import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter

from .geometry import Blocker, SiteGeometry, blocker_reach

logger = logging.getLogger(__name__)

# Adult pedestrian; the body occludes nothing below the gap between the legs
PEDESTRIAN = Blocker(height=1.78, width=0.5, clearance=0.8)
DEFAULT_DURATION_RANGE = (100.0, 300.0)
DEFAULT_RATE = 0.2
MIN_STANDOFF = 0.5


class BlockageEvent(BaseModel):
    """A blocker standing still for ``duration`` ms from ``start``."""

    model_config = ConfigDict(frozen=True)

    start: float = Field(ge=0)
    duration: float = Field(gt=0)
    blocker: Blocker

    @property
    def end(self) -> float:
        """Time the blocker leaves, in ms."""
        return self.start + self.duration

    def active(self, t: float) -> bool:
        """Whether the blocker stands in the link at t."""
        return self.start <= t < self.end


_events_adapter = TypeAdapter(list[BlockageEvent])


def generate_events(
    horizon: float,
    rate: float,
    duration_range: tuple[float, float],
    geom: SiteGeometry,
    rng: np.random.Generator,
    pedestrian: Blocker = PEDESTRIAN,
    min_standoff: float = MIN_STANDOFF,
) -> list[BlockageEvent]:
    """
    Poisson arrivals at ``rate`` per second over ``horizon`` ms.

    Every blocker stands within reach of the LoS, so each event blocks it.

    Args:
        horizon: Simulated time in ms; no event starts at or after it.
        rate: Mean arrivals per second.
        duration_range: Uniform duration bounds in ms, within the horizon.
        geom: Site whose LoS the blockers cut.
        rng: Stream the arrivals, durations and stations are drawn from.
        pedestrian: Body template copied to each station.
        min_standoff: Closest station to the receiver in m.

    Returns:
        Events ordered by start time.
    """
    if rate < 0:
        raise ValueError(f"rate must be non-negative, got {rate}")
    low, high = duration_range
    if not (0 < low <= high <= horizon):
        raise ValueError(f"duration range {duration_range} must lie within (0, {horizon}]")
    if rate == 0:
        return []

    reach = blocker_reach(geom, pedestrian.height)
    near = min(min_standoff, reach)
    mean_gap_ms = 1000.0 / rate
    events = []
    t = float(rng.exponential(mean_gap_ms))
    while t < horizon:
        # reach - U[0, span) lands in (near, reach]
        distance = reach - float(rng.uniform(0.0, reach - near)) if reach > near else reach
        events.append(
            BlockageEvent(
                start=t,
                duration=float(rng.uniform(low, high)),
                blocker=pedestrian.model_copy(update={"distance_from_rx": distance}),
            )
        )
        t += float(rng.exponential(mean_gap_ms))

    logger.debug(f"Generated {len(events)} blockage events over {horizon:.0f} ms")
    return events


def active_blockers(events: list[BlockageEvent], t: float) -> list[Blocker]:
    """
    Blockers standing in the link at time ``t``.

    Args:
        events: Blockage events, in any order.
        t: Simulation time in ms.

    Returns:
        The blocker of every event active at ``t``, in event order.
    """
    return [e.blocker for e in events if e.active(t)]


def dump_events(events: list[BlockageEvent]) -> str:
    """Serialize events to the JSON accepted by ``load_events``."""
    return _events_adapter.dump_json(events, indent=2).decode()


def load_events(text: str) -> list[BlockageEvent]:
    """Read events written by dump_events."""
    return _events_adapter.validate_json(text)
