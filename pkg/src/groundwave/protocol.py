"""Blockage-recovery state machine: IA, NOp, BA, GRD and RBO.

``step`` is a pure transition function. Time only reaches it through Timer
events and sample timestamps, and every piece of memory lives in
``ProtocolState``, so a recorded event sequence always replays identically.
"""

import logging
from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .antenna import Beam, Codebook, azimuth_neighbors, elevation_neighbors, wrap_angle
from .channel import LinkSample
from .errors import ProtocolCorruptionError
from .geometry import SiteGeometry

logger = logging.getLogger(__name__)

GRD_PROBE_BUDGET = 3


class Mode(str, Enum):
    IA = "IA"
    NOP = "NOp"
    BA = "BA"
    GRD = "GRD"
    RBO = "RBO"


class EventKind(str, Enum):
    RSS_SAMPLE = "RssSample"
    BLOCKAGE_DETECTED = "BlockageDetected"
    TIMER = "Timer"
    ALIGNMENT_NEEDED = "AlignmentNeeded"
    LOS_RESTORED = "LosRestored"


class ActionKind(str, Enum):
    SWITCH_RX_BEAM = "SwitchRxBeam"
    PROBE_BEAM = "ProbeBeam"
    PROBE_LOS = "ProbeLoS"
    STORE_GR_BEAM = "StoreGrBeam"
    REQUEST_INITIAL_ACCESS = "RequestInitialAccess"
    NONE = "None"


class ProtocolEvent(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: EventKind
    sample: LinkSample | None = None
    elapsed: float | None = None

    @model_validator(mode="after")
    def check_payload(self) -> "ProtocolEvent":
        if (self.sample is not None) != (self.kind is EventKind.RSS_SAMPLE):
            raise ValueError("only RssSample events carry a sample")
        if (self.elapsed is not None) != (self.kind is EventKind.TIMER):
            raise ValueError("only Timer events carry elapsed time")
        return self

    @classmethod
    def rss_sample(cls, sample: LinkSample) -> "ProtocolEvent":
        """Event carrying one RSS report."""
        return cls(kind=EventKind.RSS_SAMPLE, sample=sample)

    @classmethod
    def timer(cls, elapsed: float) -> "ProtocolEvent":
        """Event carrying the ms elapsed since the last tick."""
        return cls(kind=EventKind.TIMER, elapsed=elapsed)

    @classmethod
    def of(cls, kind: EventKind) -> "ProtocolEvent":
        """Event without a payload."""
        return cls(kind=kind)

    def __str__(self) -> str:
        if self.sample is not None:
            return f"{self.kind.value}(beam={self.sample.rx_beam},rss={self.sample.rss:.2f})"
        if self.elapsed is not None:
            return f"{self.kind.value}({self.elapsed:g})"
        return self.kind.value


class Action(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: ActionKind
    beam: Beam | None = None

    @model_validator(mode="after")
    def check_beam(self) -> "Action":
        needs_beam = self.kind in (
            ActionKind.SWITCH_RX_BEAM,
            ActionKind.PROBE_BEAM,
            ActionKind.STORE_GR_BEAM,
        )
        if needs_beam != (self.beam is not None):
            raise ValueError(f"{self.kind.value} beam payload mismatch")
        return self

    def __str__(self) -> str:
        return f"{self.kind.value}({self.beam.index})" if self.beam else self.kind.value


NO_ACTION = Action(kind=ActionKind.NONE)


class ProtocolSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    noise_floor: float = -78.0
    detection_margin_db: float = Field(default=3.0, ge=0)
    rbo_timer_ms: float = Field(default=100.0, gt=0)
    reentry_hysteresis_db: float = Field(default=3.0, ge=0)
    alignment_drop_db: float = Field(default=3.0, gt=0)
    tx_el_beamwidth_deg: float = Field(default=60.0, gt=0)
    delay_resolution_ns: float = Field(default=0.5, gt=0)
    peak_smoothing: float = Field(default=0.1, gt=0, le=1)
    ground_discovery: bool = True

    @property
    def blockage_threshold(self) -> float:
        """RSS at or below which the serving link counts as blocked."""
        return self.noise_floor + self.detection_margin_db


class ProtocolState(BaseModel):
    """FSM memory. Beam references are indices into the receive codebook."""

    model_config = ConfigDict(frozen=True)

    mode: Mode = Mode.IA
    serving_rx_beam: int | None = None
    serving_tx_beam: int | None = None
    gr_beam: int | None = None
    gr_rss: float | None = None
    grd_progress: tuple[LinkSample, ...] = ()
    ba_progress: tuple[LinkSample, ...] = ()
    refresh_due: bool = False
    grd_impossible: bool = False
    rbo_timer: float = 0.0
    awaiting_los: bool = False
    smoothed_rss: float | None = None
    peak_rss: float | None = None

    @model_validator(mode="after")
    def check_invariants(self) -> "ProtocolState":
        problems = self.violations()
        if problems:
            raise ValueError("; ".join(problems))
        return self

    def violations(self) -> list[str]:
        """Every broken state invariant, empty for a consistent state."""
        problems = []
        if self.mode is Mode.RBO and self.gr_beam is None:
            problems.append("RBO without a stored ground-reflection beam")
        if self.grd_progress and self.mode is not Mode.GRD:
            problems.append("GRD progress outside GRD")
        if len(self.grd_progress) > GRD_PROBE_BUDGET:
            problems.append("GRD progress exceeds the probe budget")
        if self.ba_progress and self.mode is not Mode.BA:
            problems.append("BA progress outside BA")
        if self.mode is not Mode.IA and self.serving_rx_beam is None:
            problems.append(f"{self.mode.value} without a serving beam")
        return problems

    @property
    def active_rx_beam(self) -> int | None:
        """The receive beam carrying traffic right now."""
        return self.gr_beam if self.mode is Mode.RBO else self.serving_rx_beam


def grd_window(tilt_tx: float, el_beamwidth_tx: float) -> float:
    """Elevation offset of B_GR from B_RL: transmitter tilt plus half its elevation beamwidth."""
    if tilt_tx < 0 or el_beamwidth_tx < 0:
        raise ValueError("tilt and beamwidth must be non-negative")
    return tilt_tx + el_beamwidth_tx / 2


def detect_blockage(recent: list[LinkSample], margin: float, noise_floor: float = -78.0) -> bool:
    """Whether the newest report sits within margin dB of the noise floor."""
    if not recent:
        raise ValueError("detect_blockage needs at least one sample")
    return recent[-1].rss <= noise_floor + margin


def needs_alignment(state: ProtocolState, sample: LinkSample, settings: ProtocolSettings) -> bool:
    """Serving RSS sagged below its running peak without looking like a blockage."""
    if state.mode is not Mode.NOP or state.peak_rss is None:
        return False
    if sample.rx_beam != state.serving_rx_beam:
        return False
    return settings.blockage_threshold < sample.rss <= state.peak_rss - settings.alignment_drop_db


def store_backup(
    state: ProtocolState, beam: Beam, rss: float
) -> tuple[ProtocolState, list[Action]]:
    """
    Record an externally discovered fallback beam in the B_GR slot.

    Args:
        state: Current receiver state.
        beam: The fallback beam a policy scan picked.
        rss: RSS heard on that beam in dBm.

    Returns:
        The updated state and the StoreGrBeam action.
    """
    new_state = state.model_copy(
        update={"gr_beam": beam.index, "gr_rss": rss, "refresh_due": False}
    )
    return new_state, [Action(kind=ActionKind.STORE_GR_BEAM, beam=beam)]


def _beam(cb: Codebook, index: int | None) -> Beam:
    if index is None or not 0 <= index < len(cb):
        raise ProtocolCorruptionError(f"beam reference {index} is not in the codebook")
    return cb[index]


def _track(state: ProtocolState, rss: float, settings: ProtocolSettings) -> dict:
    if state.smoothed_rss is None:
        smoothed = rss
    else:
        alpha = settings.peak_smoothing
        smoothed = (1 - alpha) * state.smoothed_rss + alpha * rss
    peak = smoothed if state.peak_rss is None else max(state.peak_rss, smoothed)
    return {"smoothed_rss": smoothed, "peak_rss": peak}


def _grd_candidates(
    state: ProtocolState, cb: Codebook, geom: SiteGeometry, settings: ProtocolSettings
) -> list[Beam]:
    serving = _beam(cb, state.serving_rx_beam)
    window = grd_window(geom.tilt_tx, settings.tx_el_beamwidth_deg)
    neighbors = elevation_neighbors(cb, serving, window)
    down = next((b for b in neighbors if b.elevation < serving.elevation), None)
    up = next((b for b in neighbors if b.elevation > serving.elevation), None)
    return [b for b in (down, up) if b is not None]


def _grd_winner(
    samples: tuple[LinkSample, ...], settings: ProtocolSettings
) -> LinkSample | None:
    """Strongest late arrival among the GRD probes, or None when nothing was reflected."""
    reflected = [s for s in samples if s.excess_delay_ns >= settings.delay_resolution_ns]
    return max(reflected, key=lambda s: s.rss, default=None)


def _start_grd(state, cb, geom, settings):
    """Enter GRD with the first elevation neighbor, or flag that there is none."""
    candidates = _grd_candidates(state, cb, geom, settings)
    if not candidates:
        logger.warning(f"GRD impossible: beam {state.serving_rx_beam} has no elevation neighbor")
        return state.model_copy(update={"refresh_due": False, "grd_impossible": True}), []
    new_state = state.model_copy(
        update={"mode": Mode.GRD, "grd_progress": (), "refresh_due": False}
    )
    return new_state, [Action(kind=ActionKind.PROBE_BEAM, beam=candidates[0])]


def _on_blockage(state, cb, geom, settings):
    """Fall back to B_GR, or ask for initial access when none is stored."""
    cleared = {"grd_progress": (), "ba_progress": (), "awaiting_los": False}
    if state.gr_beam is not None:
        new_state = state.model_copy(
            update={**cleared, "mode": Mode.RBO, "rbo_timer": settings.rbo_timer_ms}
        )
        return new_state, [Action(kind=ActionKind.SWITCH_RX_BEAM, beam=_beam(cb, state.gr_beam))]
    logger.debug("Blockage with no stored fallback beam, requesting initial access")
    new_state = state.model_copy(update={**cleared, "mode": Mode.IA})
    return new_state, [Action(kind=ActionKind.REQUEST_INITIAL_ACCESS)]


def _ia_sample(state, event, cb, geom, settings):
    sample = event.sample
    beam = _beam(cb, sample.rx_beam)
    new_state = ProtocolState(
        mode=Mode.NOP,
        serving_rx_beam=beam.index,
        serving_tx_beam=sample.tx_beam,
        refresh_due=True,
        smoothed_rss=sample.rss,
        peak_rss=sample.rss,
    )
    return new_state, [Action(kind=ActionKind.SWITCH_RX_BEAM, beam=beam)]


def _nop_sample(state, event, cb, geom, settings):
    sample = event.sample
    if sample.rx_beam != state.serving_rx_beam:
        return state, []
    state = state.model_copy(update=_track(state, sample.rss, settings))
    if state.refresh_due and settings.ground_discovery:
        return _start_grd(state, cb, geom, settings)
    return state, []


def _nop_blockage(state, event, cb, geom, settings):
    return _on_blockage(state, cb, geom, settings)


def _nop_alignment(state, event, cb, geom, settings):
    candidates = azimuth_neighbors(cb, _beam(cb, state.serving_rx_beam))
    if not candidates:
        return state.model_copy(update={"refresh_due": True}), []
    new_state = state.model_copy(update={"mode": Mode.BA, "ba_progress": ()})
    return new_state, [Action(kind=ActionKind.PROBE_BEAM, beam=candidates[0])]


def _grd_sample(state, event, cb, geom, settings):
    """Collect the neighbor reports, then confirm the late arrival before storing it."""
    sample = event.sample
    candidates = _grd_candidates(state, cb, geom, settings)
    progress = state.grd_progress
    if len(progress) < len(candidates):
        expected = candidates[len(progress)]
    else:
        winner = _grd_winner(progress, settings)
        if winner is None:
            return state, []
        expected = _beam(cb, winner.rx_beam)
    if sample.rx_beam != expected.index:
        return state, []

    progress = progress + (sample,)
    if len(progress) < len(candidates):
        nxt = candidates[len(progress)]
        return state.model_copy(update={"grd_progress": progress}), [
            Action(kind=ActionKind.PROBE_BEAM, beam=nxt)
        ]
    if len(progress) == len(candidates):
        found = _grd_winner(progress, settings)
        if found is None:
            # Only the direct path leaked in; B_GR keeps its previous value
            logger.debug(f"GRD heard no reflection after {len(progress)} probes")
            return state.model_copy(update={"mode": Mode.NOP, "grd_progress": ()}), []
        winner = _beam(cb, found.rx_beam)
        return state.model_copy(update={"grd_progress": progress}), [
            Action(kind=ActionKind.PROBE_BEAM, beam=winner)
        ]

    new_state = state.model_copy(
        update={
            "mode": Mode.NOP,
            "grd_progress": (),
            "gr_beam": expected.index,
            "gr_rss": sample.rss,
            "grd_impossible": False,
        }
    )
    logger.debug(f"GRD stored beam {expected.index} at {sample.rss:.2f} dBm")
    return new_state, [Action(kind=ActionKind.STORE_GR_BEAM, beam=expected)]


def _beam_at(cb: Codebook, azimuth: float, elevation: float) -> Beam | None:
    return next(
        (
            b
            for b in cb.beams
            if abs(wrap_angle(b.azimuth - azimuth)) < 1e-9 and abs(b.elevation - elevation) < 1e-9
        ),
        None,
    )


def _ba_sample(state, event, cb, geom, settings):
    """Collect both azimuth neighbors and move to the strongest if it beats the serving beam."""
    sample = event.sample
    serving = _beam(cb, state.serving_rx_beam)
    candidates = azimuth_neighbors(cb, serving)
    progress = state.ba_progress
    if len(progress) >= len(candidates) or sample.rx_beam != candidates[len(progress)].index:
        return state, []

    progress = progress + (sample,)
    if len(progress) < len(candidates):
        return state.model_copy(update={"ba_progress": progress}), [
            Action(kind=ActionKind.PROBE_BEAM, beam=candidates[len(progress)])
        ]

    best = max(progress, key=lambda s: s.rss)
    update = {"mode": Mode.NOP, "ba_progress": (), "refresh_due": True}
    actions = []
    current = state.smoothed_rss if state.smoothed_rss is not None else settings.noise_floor
    if best.rss > current:
        chosen = _beam(cb, best.rx_beam)
        update.update(serving_rx_beam=chosen.index, smoothed_rss=best.rss, peak_rss=best.rss)
        if state.gr_beam is not None:
            # The reflection stays in the LoS azimuth; follow it until GRD refreshes
            old_gr = _beam(cb, state.gr_beam)
            moved = _beam_at(cb, chosen.azimuth, old_gr.elevation)
            update["gr_beam"] = moved.index if moved is not None else None
        actions.append(Action(kind=ActionKind.SWITCH_RX_BEAM, beam=chosen))
    else:
        update.update(peak_rss=state.smoothed_rss)
    return state.model_copy(update=update), actions


def _rbo_timer(state, event, cb, geom, settings):
    remaining = state.rbo_timer - event.elapsed
    if remaining > 1e-9:
        return state.model_copy(update={"rbo_timer": remaining}), []
    new_state = state.model_copy(
        update={"rbo_timer": settings.rbo_timer_ms, "awaiting_los": True}
    )
    return new_state, [Action(kind=ActionKind.PROBE_LOS)]


def _return_to_los(state, cb, rss: float | None):
    update = {"mode": Mode.NOP, "awaiting_los": False, "rbo_timer": 0.0}
    if rss is not None:
        update.update(smoothed_rss=rss, peak_rss=rss)
    beam = _beam(cb, state.serving_rx_beam)
    return state.model_copy(update=update), [Action(kind=ActionKind.SWITCH_RX_BEAM, beam=beam)]


def _rbo_sample(state, event, cb, geom, settings):
    sample = event.sample
    if not state.awaiting_los or sample.rx_beam != state.serving_rx_beam:
        return state, []
    reference = state.gr_rss if state.gr_rss is not None else settings.blockage_threshold
    if sample.rss >= reference + settings.reentry_hysteresis_db:
        return _return_to_los(state, cb, sample.rss)
    return state.model_copy(update={"awaiting_los": False}), []


def _rbo_restored(state, event, cb, geom, settings):
    return _return_to_los(state, cb, None)


_HANDLERS = {
    (Mode.IA, EventKind.RSS_SAMPLE): _ia_sample,
    (Mode.NOP, EventKind.RSS_SAMPLE): _nop_sample,
    (Mode.NOP, EventKind.BLOCKAGE_DETECTED): _nop_blockage,
    (Mode.NOP, EventKind.ALIGNMENT_NEEDED): _nop_alignment,
    (Mode.GRD, EventKind.RSS_SAMPLE): _grd_sample,
    (Mode.GRD, EventKind.BLOCKAGE_DETECTED): _nop_blockage,
    (Mode.BA, EventKind.RSS_SAMPLE): _ba_sample,
    (Mode.BA, EventKind.BLOCKAGE_DETECTED): _nop_blockage,
    (Mode.RBO, EventKind.TIMER): _rbo_timer,
    (Mode.RBO, EventKind.RSS_SAMPLE): _rbo_sample,
    (Mode.RBO, EventKind.LOS_RESTORED): _rbo_restored,
}


def step(
    state: ProtocolState,
    event: ProtocolEvent,
    cb: Codebook,
    geom: SiteGeometry,
    settings: ProtocolSettings | None = None,
) -> tuple[ProtocolState, list[Action]]:
    """Advance the state machine by one event.

    ``cb`` is the receive codebook. Pairs without a transition return the
    state unchanged with a single None action.
    """
    settings = settings or DEFAULT_SETTINGS
    if event.sample is not None:
        _beam(cb, event.sample.rx_beam)
    if state.mode is not Mode.IA:
        _beam(cb, state.serving_rx_beam)
    if state.gr_beam is not None:
        _beam(cb, state.gr_beam)

    handler = _HANDLERS.get((state.mode, event.kind))
    if handler is None:
        return state, [NO_ACTION]
    new_state, actions = handler(state, event, cb, geom, settings)
    if new_state.mode is not state.mode:
        logger.debug(f"{state.mode.value} --{event}--> {new_state.mode.value}")
    return new_state, actions or [NO_ACTION]


DEFAULT_SETTINGS = ProtocolSettings()


class Transition(BaseModel):
    """One line of a conformance trace."""

    model_config = ConfigDict(frozen=True)

    time: float
    before: Mode
    event: str
    after: Mode
    actions: tuple[str, ...]

    def __str__(self) -> str:
        return (
            f"{self.time:.1f}\t{self.before.value}\t{self.event}\t"
            f"{self.after.value}\t{','.join(self.actions)}"
        )
