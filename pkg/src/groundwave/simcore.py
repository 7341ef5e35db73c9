"""Deterministic tick-driven simulation binding channel, blockage and a recovery policy."""

import asyncio
import hashlib
import itertools
import logging
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .antenna import Beam, Codebook, best_beam, tilt_codebook
from .baselines import (
    AccessModel,
    Policy,
    PolicyKind,
    PolicyReport,
    make_policy,
    worst_case_discovery_latency,
)
from .blockage import (
    DEFAULT_DURATION_RANGE,
    DEFAULT_RATE,
    PEDESTRIAN,
    BlockageEvent,
    active_blockers,
    generate_events,
)
from .channel import (
    CalibrationResult,
    LinkBudget,
    LinkSample,
    SurfaceKind,
    SurfaceProfile,
    measure,
    synthetic_nlos_path,
)
from .errors import CalibrationMissingError, CodebookMismatchError, ConfigError, SweepError
from .geometry import Blocker, RayPath, SiteGeometry, ground_reflection_path, los_path
from .protocol import (
    Action,
    ActionKind,
    EventKind,
    Mode,
    ProtocolEvent,
    ProtocolSettings,
    ProtocolState,
    Transition,
    detect_blockage,
    needs_alignment,
    step,
)

logger = logging.getLogger(__name__)

METRIC_COLUMNS = [
    "policy",
    "seed",
    "horizon_ms",
    "total_outage_ms",
    "n_blockage_events",
    "n_events_survived",
    "measurements_total",
    "reentry_probes",
    "discovery_episodes",
    "measurements_per_discovery",
    "mean_rss_during_blockage",
    "mean_recovery_latency_ms",
    "max_recovery_latency_ms",
    "grd_impossible",
]
TRACE_COLUMNS = ["time_ms", "rss_dbm", "mode"]
COMPARE_COLUMNS = ["policy", "measurements", "outage_ms", "mean_rss_during_blockage", "note"]
FLOAT_FORMAT = "%.3f"


class Scenario(BaseModel):
    """Everything one run needs. ``tx_codebook`` is already tilted by ``geom.tilt_tx``."""

    model_config = ConfigDict(frozen=True)

    geom: SiteGeometry = SiteGeometry()
    surface: SurfaceProfile = SurfaceProfile(name=SurfaceKind.OUTDOOR_CONCRETE)
    budget: LinkBudget = LinkBudget()
    calibration: CalibrationResult | None = None
    tx_codebook: Codebook
    rx_codebook: Codebook
    blockage_rate: float = Field(default=DEFAULT_RATE, ge=0, description="events per second")
    duration_range: tuple[float, float] = DEFAULT_DURATION_RANGE
    pedestrian: Blocker = PEDESTRIAN
    events: tuple[BlockageEvent, ...] | None = None
    policy: PolicyKind = PolicyKind.GROUND_REFLECTION
    access: AccessModel = AccessModel()
    protocol: ProtocolSettings = ProtocolSettings()
    nlos_penalty_db: float | None = 10.0
    nlos_azimuth_deg: float = 30.0
    noise_sigma_db: float = Field(default=0.5, ge=0)
    rx_azimuth_drift_deg_per_s: float = 0.0
    horizon: float = Field(default=60_000.0, gt=0, description="ms")
    probe_interval: float = Field(default=10.0, gt=0, description="ms")
    seed: int = 42

    @model_validator(mode="after")
    def check_timing(self) -> "Scenario":
        if self.horizon < self.probe_interval:
            raise ValueError(
                f"horizon {self.horizon} ms is shorter than one probe interval "
                f"({self.probe_interval} ms)"
            )
        low, high = self.duration_range
        if not 0 < low <= high:
            raise ValueError(f"invalid duration range {self.duration_range}")
        if self.events is None and high > self.horizon:
            raise ValueError(
                f"blockages last up to {high} ms, longer than the {self.horizon} ms horizon"
            )
        return self


class TracePoint(NamedTuple):
    time_ms: float
    rss_dbm: float
    mode: str


class RunMetrics(BaseModel):
    model_config = ConfigDict(frozen=True)

    policy: PolicyKind
    seed: int
    horizon_ms: float
    total_outage_ms: float = Field(ge=0)
    n_blockage_events: int = Field(ge=0)
    n_events_survived: int = Field(ge=0)
    measurements_total: int = Field(ge=0)
    reentry_probes: int = Field(default=0, ge=0)
    discovery_measurements: tuple[int, ...] = ()
    mean_rss_during_blockage: float | None = None
    recovery_latency_ms: tuple[float, ...] = ()
    reentry_latency_ms: tuple[float, ...] = ()
    grd_impossible: bool = False
    rss_trace: tuple[TracePoint, ...] = ()
    transitions: tuple[Transition, ...] = ()

    @model_validator(mode="after")
    def check_accounting(self) -> "RunMetrics":
        if self.n_events_survived > self.n_blockage_events:
            raise ValueError("more events survived than occurred")
        if self.total_outage_ms > self.horizon_ms + 1e-9:
            raise ValueError("outage exceeds the horizon")
        return self

    def summary_row(self) -> dict[str, Any]:
        """One metrics.csv row."""
        latencies = self.recovery_latency_ms
        discoveries = self.discovery_measurements
        return {
            "policy": self.policy.value,
            "seed": self.seed,
            "horizon_ms": self.horizon_ms,
            "total_outage_ms": self.total_outage_ms,
            "n_blockage_events": self.n_blockage_events,
            "n_events_survived": self.n_events_survived,
            "measurements_total": self.measurements_total,
            "reentry_probes": self.reentry_probes,
            "discovery_episodes": len(discoveries),
            "measurements_per_discovery": discoveries[0] if discoveries else 0,
            "mean_rss_during_blockage": self.mean_rss_during_blockage,
            "mean_recovery_latency_ms": float(np.mean(latencies)) if latencies else 0.0,
            "max_recovery_latency_ms": max(latencies) if latencies else 0.0,
            "grd_impossible": self.grd_impossible,
        }

    def summary_line(self) -> str:
        """One-line summary printed after a run."""
        return (
            f"policy={self.policy.value} outage_ms={self.total_outage_ms:.0f} "
            f"measurements={self.measurements_total} "
            f"survived={self.n_events_survived}/{self.n_blockage_events}"
        )

    def report(self) -> PolicyReport:
        """Row of the policy comparison table."""
        discoveries = self.discovery_measurements
        return PolicyReport(
            policy=self.policy,
            measurements_used=discoveries[0] if discoveries else 0,
            outage_ms=self.total_outage_ms,
            recovered_rss=self.mean_rss_during_blockage,
            grd_impossible=self.grd_impossible,
        )


def derive_seed(base: int, index: int) -> int:
    """Seed for sweep point ``index``; point 0 keeps the base seed."""
    if index == 0:
        return base
    digest = hashlib.sha256(f"{base}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def check_scenario(scenario: Scenario) -> tuple[LinkBudget, SurfaceProfile]:
    """Resolve the calibrated budget and surface, or raise before any tick runs."""
    budget, surface = scenario.budget, scenario.surface
    if scenario.calibration is not None:
        budget = scenario.calibration.apply(budget)
        surface = scenario.calibration.surface(surface.name)
    if budget.system_loss is None:
        raise CalibrationMissingError(
            f"no calibration for surface {surface.name.value}; run `groundwave calibrate` first"
        )
    tilt = scenario.geom.tilt_tx
    if not any(abs(e + tilt) < 1e-9 for e in scenario.tx_codebook.elevation_rows):
        raise CodebookMismatchError(
            f"tx codebook rows {scenario.tx_codebook.elevation_rows} are not tilted by "
            f"{scenario.geom.tilt_tx} deg"
        )
    return budget, surface


def realize_events(scenario: Scenario) -> list[BlockageEvent]:
    """Blockage events of a run: the replayed trace, or draws from the blockage stream."""
    if scenario.events is not None:
        events = sorted(scenario.events, key=lambda e: e.start)
    else:
        blockage_seq, _ = np.random.SeedSequence(scenario.seed).spawn(2)
        try:
            events = generate_events(
                scenario.horizon,
                scenario.blockage_rate,
                scenario.duration_range,
                scenario.geom,
                np.random.default_rng(blockage_seq),
                scenario.pedestrian,
            )
        except ValueError as e:
            raise ConfigError(f"cannot draw blockage events: {e}") from e
    return [e for e in events if e.start < scenario.horizon]


class _Run:
    """Mutable bookkeeping for one run; discarded afterwards."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.budget, self.surface = check_scenario(scenario)
        self.policy: Policy = make_policy(scenario.policy, scenario.access)
        self.settings = self.policy.protocol_settings(
            scenario.protocol.model_copy(
                update={
                    "noise_floor": self.budget.noise_floor,
                    "delay_resolution_ns": self.budget.delay_resolution_ns,
                    "tx_el_beamwidth_deg": scenario.tx_codebook[0].el_beamwidth,
                }
            )
        )
        _, noise_seq = np.random.SeedSequence(scenario.seed).spawn(2)
        self.noise_rng = np.random.default_rng(noise_seq)
        self.events = realize_events(scenario)

        geom = scenario.geom
        self.base_paths = [los_path(geom), ground_reflection_path(geom)]
        if scenario.nlos_penalty_db is not None:
            self.base_paths.append(
                synthetic_nlos_path(geom, scenario.nlos_penalty_db, scenario.nlos_azimuth_deg)
            )
        los = self.base_paths[0]
        self.tx_beam = best_beam(
            scenario.tx_codebook, los.departure_azimuth, los.departure_elevation
        )

        self.state = ProtocolState()
        self.time = 0.0
        self.blockers: list[Blocker] = []
        self.paths = self.base_paths
        self.measurements = 0
        self.reentry_probes = 0
        self.discoveries: list[int] = []
        self.grd_count = 0
        self.reacquire_until: float | None = None
        self.rbo_entered: float | None = None
        self.reentry_latency: list[float] = []
        self.grd_impossible = False
        self.transitions: list[Transition] = []

    def paths_at(self, t: float) -> list[RayPath]:
        """Paths with the receiver's azimuth drift applied at t."""
        drift = self.scenario.rx_azimuth_drift_deg_per_s * t / 1000.0
        if drift == 0:
            return self.base_paths
        return [
            p.model_copy(update={"arrival_azimuth": p.arrival_azimuth + drift})
            for p in self.base_paths
        ]

    def probe(self, beam: Beam) -> LinkSample:
        """Measure beam against the current blockers and paths."""
        return measure(
            self.budget,
            self.scenario.geom,
            self.surface,
            self.tx_beam,
            beam,
            self.blockers,
            self.scenario.noise_sigma_db,
            self.noise_rng,
            self.paths,
            self.time,
        )

    def feed(self, event: ProtocolEvent) -> list[Action]:
        """Step the protocol and record transitions, discovery counts and RBO stays."""
        before = self.state
        self.state, actions = step(
            before, event, self.scenario.rx_codebook, self.scenario.geom, self.settings
        )
        if before.mode is not self.state.mode or actions[0].kind is not ActionKind.NONE:
            self.transitions.append(
                Transition(
                    time=self.time,
                    before=before.mode,
                    event=str(event),
                    after=self.state.mode,
                    actions=tuple(str(a) for a in actions),
                )
            )
        if before.mode is Mode.GRD and self.state.mode is not Mode.GRD and self.grd_count:
            self.discoveries.append(self.grd_count)
            self.grd_count = 0
        if before.mode is not Mode.RBO and self.state.mode is Mode.RBO:
            self.rbo_entered = self.time
        if before.mode is Mode.RBO and self.state.mode is not Mode.RBO:
            self.reentry_latency.append(self.time - self.rbo_entered)
        if self.state.grd_impossible:
            self.grd_impossible = True
        return actions

    def apply(self, actions: list[Action]) -> None:
        """Answer probes within the current tick until the machine goes quiet."""
        pending = list(actions)
        while pending:
            action = pending.pop(0)
            if action.kind is ActionKind.PROBE_BEAM:
                self.measurements += 1
                if self.state.mode is Mode.GRD:
                    self.grd_count += 1
                pending.extend(self.feed(ProtocolEvent.rss_sample(self.probe(action.beam))))
            elif action.kind is ActionKind.PROBE_LOS:
                self.reentry_probes += 1
                beam = self.scenario.rx_codebook[self.state.serving_rx_beam]
                pending.extend(self.feed(ProtocolEvent.rss_sample(self.probe(beam))))
            elif action.kind is ActionKind.REQUEST_INITIAL_ACCESS:
                access = self.scenario.access
                self.measurements += access.n_sweep_beams
                self.discoveries.append(access.n_sweep_beams)
                self.reacquire_until = (
                    self.time + worst_case_discovery_latency(access) + access.attach_overhead
                )
                logger.debug(f"Re-acquisition until {self.reacquire_until:.0f} ms")

    def attach(self) -> LinkSample:
        """Initial access onto the best beam toward the LoS."""
        los = self.paths[0]
        beam = best_beam(self.scenario.rx_codebook, los.arrival_azimuth, los.arrival_elevation)
        sample = self.probe(beam)
        self.apply(self.feed(ProtocolEvent.rss_sample(sample)))
        return sample

    def refresh(self) -> None:
        """Let the policy refresh the fallback beam when it asks to."""
        if not self.policy.needs_refresh(self.state):
            return
        self.state, actions, count = self.policy.refresh(
            self.state, self.scenario.rx_codebook, self.probe, self.settings
        )
        if count:
            self.measurements += count
            self.discoveries.append(count)
        self.apply(actions)

    def tick(self) -> float | None:
        """Advance one probe interval; returns the traffic RSS or None while re-acquiring."""
        if self.reacquire_until is not None:
            if self.time < self.reacquire_until:
                return None
            self.reacquire_until = None
            self.state = ProtocolState()
            sample = self.attach()
            self.refresh()
            return sample.rss
        if self.state.mode is Mode.IA:
            sample = self.attach()
            self.refresh()
            return sample.rss

        if self.state.mode is Mode.RBO:
            self.apply(self.feed(ProtocolEvent.timer(self.scenario.probe_interval)))

        sample = self.probe(self.scenario.rx_codebook[self.state.active_rx_beam])
        if self.state.mode is not Mode.RBO and detect_blockage(
            [sample], self.settings.detection_margin_db, self.settings.noise_floor
        ):
            self.apply(self.feed(ProtocolEvent.of(EventKind.BLOCKAGE_DETECTED)))
        elif needs_alignment(self.state, sample, self.settings):
            self.apply(self.feed(ProtocolEvent.of(EventKind.ALIGNMENT_NEEDED)))
        else:
            self.apply(self.feed(ProtocolEvent.rss_sample(sample)))
        self.refresh()
        return sample.rss


def run(scenario: Scenario) -> RunMetrics:
    """Simulate ``scenario`` tick by tick; identical scenarios give identical metrics."""
    r = _Run(scenario)
    interval = scenario.probe_interval
    threshold = r.settings.blockage_threshold
    n_ticks = int(scenario.horizon // interval)
    attributed = [0.0] * len(r.events)
    blockage_rss: list[float] = []
    trace: list[TracePoint] = []
    outage_ticks = 0
    latest = -1

    logger.info(
        f"Running {scenario.policy.value} over {scenario.horizon:.0f} ms with "
        f"{len(r.events)} blockage events (seed {scenario.seed})"
    )
    for k in range(n_ticks):
        t = k * interval
        r.time = t
        r.blockers = active_blockers(r.events, t)
        r.paths = r.paths_at(t)
        while latest + 1 < len(r.events) and r.events[latest + 1].start <= t:
            latest += 1

        level = r.tick()
        outage = level is None or level < threshold
        shown = r.budget.noise_floor if level is None else level
        if outage:
            outage_ticks += 1
            if latest >= 0:
                attributed[latest] += interval
        if r.blockers:
            blockage_rss.append(shown)
        trace.append(TracePoint(t, shown, "IA" if level is None else r.state.mode.value))

    survived = sum(1 for a in attributed if a <= interval + 1e-9)
    metrics = RunMetrics(
        policy=scenario.policy,
        seed=scenario.seed,
        horizon_ms=scenario.horizon,
        total_outage_ms=outage_ticks * interval,
        n_blockage_events=len(r.events),
        n_events_survived=survived,
        measurements_total=r.measurements,
        reentry_probes=r.reentry_probes,
        discovery_measurements=tuple(r.discoveries),
        mean_rss_during_blockage=float(np.mean(blockage_rss)) if blockage_rss else None,
        recovery_latency_ms=tuple(attributed),
        reentry_latency_ms=tuple(r.reentry_latency),
        grd_impossible=r.grd_impossible,
        rss_trace=tuple(trace),
        transitions=tuple(r.transitions),
    )
    logger.info(metrics.summary_line())
    return metrics


def with_params(base: Scenario, params: Mapping[str, Any]) -> Scenario:
    """Apply one sweep grid point to ``base``."""
    scenario = base
    for key, value in params.items():
        if key == "tilt_deg":
            geom = scenario.geom.model_copy(update={"tilt_tx": float(value)})
            tx = tilt_codebook(scenario.tx_codebook, float(value) - scenario.geom.tilt_tx)
            scenario = scenario.model_copy(update={"geom": geom, "tx_codebook": tx})
        elif key in ("h_tx_m", "h_rx_m", "d_tr_m"):
            field = key.removesuffix("_m")
            geom = SiteGeometry(**{**scenario.geom.model_dump(), field: float(value)})
            scenario = scenario.model_copy(update={"geom": geom})
        elif key == "surface":
            surface = scenario.surface.model_copy(update={"name": SurfaceKind(value)})
            scenario = scenario.model_copy(update={"surface": surface})
        elif key in _SCENARIO_KEYS:
            field, cast = _SCENARIO_KEYS[key]
            scenario = scenario.model_copy(update={field: cast(value)})
        else:
            raise ConfigError(f"cannot sweep over unknown parameter {key!r}")
    return Scenario.model_validate(scenario.model_dump())


_SCENARIO_KEYS = {
    "policy": ("policy", PolicyKind),
    "seed": ("seed", int),
    "horizon_ms": ("horizon", float),
    "probe_interval_ms": ("probe_interval", float),
    "blockage_rate_per_s": ("blockage_rate", float),
    "noise_sigma_db": ("noise_sigma_db", float),
    "rx_azimuth_drift_deg_per_s": ("rx_azimuth_drift_deg_per_s", float),
}


def sweep_grid(base: Scenario, vary: Mapping[str, Sequence[Any]]) -> list[Scenario]:
    """Cartesian grid in ``vary`` order with per-point seeds."""
    if not vary or any(len(values) == 0 for values in vary.values()):
        raise ValueError("sweep grid must name at least one parameter with values")
    keys = list(vary)
    scenarios = []
    for index, combo in enumerate(itertools.product(*(vary[k] for k in keys))):
        params = dict(zip(keys, combo))
        seeded = {"seed": derive_seed(base.seed, index), **params}
        scenarios.append(with_params(base, seeded))
    return scenarios


def _run_point(index: int, scenario: Scenario, params: dict[str, Any]) -> RunMetrics:
    try:
        return run(scenario)
    except Exception as e:
        logger.error(f"Sweep point {index} failed: {e}")
        raise SweepError(index, params, e) from e


def _grid_params(vary: Mapping[str, Sequence[Any]]) -> list[dict[str, Any]]:
    """Grid points in sweep_grid order, without their seeds."""
    keys = list(vary)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(vary[k] for k in keys))]


def sweep(
    base: Scenario, vary: Mapping[str, Sequence[Any]]
) -> list[tuple[Scenario, RunMetrics]]:
    """
    Run every grid point one after another.

    Args:
        base: Scenario the grid points start from.
        vary: Parameter names mapped to the values to try.

    Returns:
        (scenario, metrics) pairs in grid order.
    """
    scenarios = sweep_grid(base, vary)
    params = _grid_params(vary)
    return [(s, _run_point(i, s, p)) for i, (s, p) in enumerate(zip(scenarios, params))]


async def sweep_async(
    base: Scenario, vary: Mapping[str, Sequence[Any]]
) -> list[tuple[Scenario, RunMetrics]]:
    """Same results as ``sweep``, with grid points running in the default executor."""
    scenarios = sweep_grid(base, vary)
    params = _grid_params(vary)
    loop = asyncio.get_running_loop()
    results = await asyncio.gather(
        *(
            loop.run_in_executor(None, _run_point, i, s, p)
            for i, (s, p) in enumerate(zip(scenarios, params))
        )
    )
    return list(zip(scenarios, results))


def _write_frame(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def write_metrics_csv(metrics: Sequence[RunMetrics], path: Path) -> Path:
    """Write one summary row per run."""
    frame = pd.DataFrame([m.summary_row() for m in metrics], columns=METRIC_COLUMNS)
    return _write_frame(frame, path)


def write_trace_csv(metrics: RunMetrics, path: Path) -> Path:
    """Write the per-tick RSS and mode trace."""
    frame = pd.DataFrame(list(metrics.rss_trace), columns=TRACE_COLUMNS)
    return _write_frame(frame, path)


def write_transitions(metrics: RunMetrics, path: Path) -> Path:
    """Write the tab-separated transition log."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{t}\n" for t in metrics.transitions))
    return path


def compare_frame(metrics: Sequence[RunMetrics]) -> pd.DataFrame:
    """Policy comparison table, one row per run."""
    rows = []
    for m in metrics:
        report = m.report()
        rows.append(
            {
                "policy": report.policy.value,
                "measurements": report.measurements_used,
                "outage_ms": report.outage_ms,
                "mean_rss_during_blockage": report.recovered_rss,
                "note": "GRD impossible" if report.grd_impossible else report.complexity,
            }
        )
    return pd.DataFrame(rows, columns=COMPARE_COLUMNS)


def write_compare_csv(metrics: Sequence[RunMetrics], path: Path) -> Path:
    """Write the policy comparison table."""
    return _write_frame(compare_frame(metrics), path)
