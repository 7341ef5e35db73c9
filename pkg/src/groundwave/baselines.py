"""Comparator recovery policies sharing the protocol's action interface.

Each policy decides how the fallback beam gets into the B_GR slot:

- ``gr``: ground-reflection discovery inside the state machine (3 probes).
- ``exhaustive``: scan the whole serving row after every alignment.
- ``scan-model``: scan once, then rely on an offline model (count only).
- ``handover``: keep no fallback, re-acquire through initial access.
"""

import logging
from collections.abc import Callable, Sequence
from enum import Enum

from pydantic import BaseModel, ConfigDict, Field

from .antenna import Beam, Codebook, elevation_row
from .blockage import BlockageEvent
from .channel import LinkSample
from .protocol import Action, Mode, ProtocolSettings, ProtocolState, store_backup

logger = logging.getLogger(__name__)


class PolicyKind(str, Enum):
    GROUND_REFLECTION = "gr"
    EXHAUSTIVE_SCAN = "exhaustive"
    SCAN_PLUS_MODEL = "scan-model"
    HANDOVER = "handover"

    @property
    def complexity(self) -> str:
        """Discovery cost as the comparison table words it."""
        return _COMPLEXITY[self]


_COMPLEXITY = {
    PolicyKind.GROUND_REFLECTION: "Three measurements",
    PolicyKind.EXHAUSTIVE_SCAN: "Exhaustive Search",
    PolicyKind.SCAN_PLUS_MODEL: "Search followed by offline model creation",
    PolicyKind.HANDOVER: "Initial access sweep",
}


class AccessModel(BaseModel):
    """Initial-access sweep used to re-acquire a link after handover."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_sweep_beams: int = Field(default=64, gt=0)
    sweep_period: float = Field(default=20.0, gt=0, description="ms per swept beam")
    attach_overhead: float = Field(default=500.0, ge=0, description="ms")


class PolicyReport(BaseModel):
    """One row of the policy comparison table."""

    model_config = ConfigDict(frozen=True)

    policy: PolicyKind
    measurements_used: int = Field(ge=0)
    outage_ms: float = Field(ge=0)
    recovered_rss: float | None = None
    grd_impossible: bool = False

    @property
    def complexity(self) -> str:
        """Complexity label of the policy behind this row."""
        return self.policy.complexity


def worst_case_discovery_latency(m: AccessModel) -> float:
    """Time to sweep every initial-access beam once, in ms."""
    return m.n_sweep_beams * m.sweep_period


def handover_outage(
    m: AccessModel, blockage: BlockageEvent, detection_ms: float = 10.0
) -> float:
    """
    Outage of a handover recovery; it does not end when the blocker leaves.

    Args:
        m: The initial-access sweep that re-acquires the link.
        blockage: The event that triggered the handover.
        detection_ms: Time to notice the blockage, capped by its duration.

    Returns:
        Outage in ms from blockage onset to a re-attached link.
    """
    if detection_ms < 0:
        raise ValueError("detection time must be non-negative")
    detection = min(blockage.duration, detection_ms)
    return detection + worst_case_discovery_latency(m) + m.attach_overhead


def exhaustive_scan(
    cb: Codebook | Sequence[Beam], measure_fn: Callable[[Beam], float]
) -> tuple[Beam, int]:
    """
    Measure every beam once and keep the strongest.

    Args:
        cb: A codebook, or a slice of one such as a single elevation row.
        measure_fn: RSS in dBm heard on a beam.

    Returns:
        The strongest beam (first in order on ties) and the number of
        measurements spent, which is always the number of beams.
    """
    beams = cb.beams if isinstance(cb, Codebook) else tuple(cb)
    if not beams:
        raise ValueError("cannot scan an empty codebook")
    best, best_rss = beams[0], float("-inf")
    for beam in beams:
        value = measure_fn(beam)
        if value > best_rss:
            best, best_rss = beam, value
    return best, len(beams)


def select_backup(
    samples: list[LinkSample], serving: int, delay_resolution_ns: float, noise_floor: float
) -> LinkSample | None:
    """Strongest late arrival heard above the floor, skipping the serving beam."""
    reflected = [
        s
        for s in samples
        if s.rx_beam != serving
        and s.excess_delay_ns >= delay_resolution_ns
        and s.rss > noise_floor
    ]
    if not reflected:
        return None
    return max(reflected, key=lambda s: (s.rss, -s.rx_beam))


class Policy:
    """Base policy: fallback discovery lives in the state machine."""

    kind = PolicyKind.GROUND_REFLECTION
    ground_discovery = True

    def __init__(self, access: AccessModel | None = None):
        """Bind the initial-access model used when the link must be re-acquired."""
        self.access = access or AccessModel()

    def protocol_settings(self, base: ProtocolSettings) -> ProtocolSettings:
        """Protocol settings with ground discovery switched to this policy's choice."""
        return base.model_copy(update={"ground_discovery": self.ground_discovery})

    def needs_refresh(self, state: ProtocolState) -> bool:
        """Whether refresh should run after this tick."""
        return False

    def refresh(
        self,
        state: ProtocolState,
        cb: Codebook,
        probe: Callable[[Beam], LinkSample],
        settings: ProtocolSettings,
    ) -> tuple[ProtocolState, list[Action], int]:
        return state, [], 0

    def _scan_row(self, state, cb, probe, settings):
        """Scan the serving row and keep the strongest late arrival as the fallback."""
        serving = cb[state.serving_rx_beam]
        row = elevation_row(cb, serving.elevation)
        heard: dict[int, LinkSample] = {}

        def reflected_rss(beam: Beam) -> float:
            sample = probe(beam)
            late = select_backup(
                [sample], serving.index, settings.delay_resolution_ns, settings.noise_floor
            )
            if late is None:
                return float("-inf")
            heard[beam.index] = late
            return late.rss

        best, count = exhaustive_scan(row, reflected_rss)
        backup = heard.get(best.index)
        if backup is None:
            logger.warning(f"{self.kind.value}: scan of {count} beams found no reflected path")
            return state.model_copy(update={"refresh_due": False}), [], count
        new_state, actions = store_backup(state, best, backup.rss)
        logger.debug(
            f"{self.kind.value}: backup beam {best.index} at {backup.rss:.2f} dBm "
            f"after {count} measurements"
        )
        return new_state, actions, count


class GroundReflectionPolicy(Policy):
    pass


class ExhaustiveScanPolicy(Policy):
    kind = PolicyKind.EXHAUSTIVE_SCAN
    ground_discovery = False

    def needs_refresh(self, state):
        return state.mode is Mode.NOP and state.refresh_due

    def refresh(self, state, cb, probe, settings):
        return self._scan_row(state, cb, probe, settings)


class ScanPlusModelPolicy(ExhaustiveScanPolicy):
    """Scans once; later refreshes come from the offline model at no cost."""

    kind = PolicyKind.SCAN_PLUS_MODEL

    def refresh(self, state, cb, probe, settings):
        if state.gr_beam is not None:
            return state.model_copy(update={"refresh_due": False}), [], 0
        return self._scan_row(state, cb, probe, settings)


class HandoverPolicy(Policy):
    kind = PolicyKind.HANDOVER
    ground_discovery = False

    def needs_refresh(self, state):
        return state.mode is Mode.NOP and state.refresh_due

    def refresh(self, state, cb, probe, settings):
        return state.model_copy(update={"refresh_due": False}), [], 0


_POLICIES = {
    PolicyKind.GROUND_REFLECTION: GroundReflectionPolicy,
    PolicyKind.EXHAUSTIVE_SCAN: ExhaustiveScanPolicy,
    PolicyKind.SCAN_PLUS_MODEL: ScanPlusModelPolicy,
    PolicyKind.HANDOVER: HandoverPolicy,
}


def make_policy(kind: PolicyKind | str, access: AccessModel | None = None) -> Policy:
    """Instantiate the policy named by kind."""
    return _POLICIES[PolicyKind(kind)](access)
