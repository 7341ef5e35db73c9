"""Tests for comparator policies."""

import pytest
from pydantic import ValidationError

from groundwave.antenna import build_codebook, elevation_row
from groundwave.baselines import (
    AccessModel,
    ExhaustiveScanPolicy,
    HandoverPolicy,
    PolicyKind,
    PolicyReport,
    ScanPlusModelPolicy,
    exhaustive_scan,
    handover_outage,
    make_policy,
    select_backup,
    worst_case_discovery_latency,
)
from groundwave.blockage import BlockageEvent
from groundwave.channel import LinkSample
from groundwave.geometry import Blocker
from groundwave.protocol import DEFAULT_SETTINGS, ActionKind, Mode, ProtocolState


@pytest.fixture
def cb():
    return build_codebook()


def _event(duration: float) -> BlockageEvent:
    return BlockageEvent(start=0.0, duration=duration, blocker=Blocker(distance_from_rx=2.0))


def test_worst_case_discovery_latency():
    """64 beams every 20 ms take 1.28 s."""
    assert worst_case_discovery_latency(AccessModel()) == 1280.0
    assert worst_case_discovery_latency(AccessModel(n_sweep_beams=1)) == 20.0
    assert worst_case_discovery_latency(AccessModel(sweep_period=5.0)) == 320.0


def test_access_model_validation():
    """An access sweep needs at least one beam and a positive period."""
    with pytest.raises(ValidationError):
        AccessModel(n_sweep_beams=0)
    with pytest.raises(ValidationError):
        AccessModel(sweep_period=0.0)


def test_handover_outage():
    """Handover pays detection, the full sweep and the attach overhead."""
    assert handover_outage(AccessModel(), _event(200.0)) >= 1780.0
    assert handover_outage(AccessModel(), _event(200.0)) == pytest.approx(1790.0)
    degenerate = AccessModel(n_sweep_beams=1, attach_overhead=0.0)
    assert handover_outage(degenerate, _event(200.0)) == pytest.approx(30.0)
    assert handover_outage(degenerate, _event(5.0)) == pytest.approx(25.0)


def test_exhaustive_scan_counts_every_beam(cb):
    """Every beam is measured once, in index order; ties keep the first."""
    measured = []

    def measure_fn(beam):
        measured.append(beam.index)
        return -70.0

    beam, count = exhaustive_scan(cb, measure_fn)
    assert count == 25
    assert measured == list(range(25))
    assert beam.index == 0


def test_exhaustive_scan_single_beam():
    """A one-beam codebook costs one measurement."""
    single = build_codebook(n_az=1)
    beam, count = exhaustive_scan(single, lambda b: -60.0)
    assert beam == single[0]
    assert count == 1


def test_exhaustive_scan_over_one_row():
    """A single elevation row costs one measurement per beam in that row."""
    rx = build_codebook(el_rows=(0.0, -30.0, 30.0))
    row = elevation_row(rx, -30.0)
    measured = []

    def measure_fn(beam):
        measured.append(beam.index)
        return -60.0 if beam.index == 40 else -70.0

    beam, count = exhaustive_scan(row, measure_fn)
    assert count == 25
    assert measured == list(range(25, 50))
    assert beam.index == 40
    with pytest.raises(ValueError):
        exhaustive_scan([], measure_fn)


def test_exhaustive_scan_finds_unique_maximum(cb):
    """The single loudest beam wins wherever it sits."""
    field = {b.index: -80.0 + (b.index % 7) for b in cb.beams}
    field[17] = -50.0
    beam, _ = exhaustive_scan(cb, lambda b: field[b.index])
    assert beam.index == 17


def _sample(beam, rss, delay):
    return LinkSample(time=0.0, tx_beam=12, rx_beam=beam, rss=rss, excess_delay_ns=delay)


def test_select_backup_prefers_strongest_late_arrival():
    """Direct-path and floor readings never qualify as a fallback."""
    samples = [
        _sample(12, -60.0, 0.0),
        _sample(13, -62.0, 0.0),
        _sample(18, -70.0, 3.0),
        _sample(19, -71.0, 3.0),
        _sample(20, -78.0, 0.0),
    ]
    assert select_backup(samples, 12, 0.5, -78.0).rx_beam == 18
    assert select_backup(samples[:2], 12, 0.5, -78.0) is None


def test_exhaustive_policy_scans_the_serving_row(cb):
    """A refresh measures all 25 beams and stores the late arrival."""
    state = ProtocolState(mode=Mode.NOP, serving_rx_beam=12, refresh_due=True)
    policy = ExhaustiveScanPolicy()
    assert policy.needs_refresh(state)

    def probe(beam):
        if beam.index == 18:
            return _sample(18, -70.0, 3.0)
        return _sample(beam.index, -60.0 if beam.index == 12 else -76.0, 0.0)

    new_state, actions, count = policy.refresh(state, cb, probe, DEFAULT_SETTINGS)
    assert count == 25
    assert new_state.gr_beam == 18
    assert new_state.gr_rss == -70.0
    assert not new_state.refresh_due
    assert [a.kind for a in actions] == [ActionKind.STORE_GR_BEAM]


def test_exhaustive_policy_without_late_arrival(cb):
    """A row that only hears the direct path leaves the fallback slot empty."""
    state = ProtocolState(mode=Mode.NOP, serving_rx_beam=12, refresh_due=True)
    new_state, actions, count = ExhaustiveScanPolicy().refresh(
        state, cb, lambda b: _sample(b.index, -60.0, 0.0), DEFAULT_SETTINGS
    )
    assert count == 25
    assert actions == []
    assert new_state.gr_beam is None
    assert not new_state.refresh_due


def test_scan_model_scans_once(cb):
    """After the first scan the offline model answers refreshes for free."""
    policy = ScanPlusModelPolicy()
    state = ProtocolState(
        mode=Mode.NOP, serving_rx_beam=12, refresh_due=True, gr_beam=18, gr_rss=-70.0
    )
    new_state, actions, count = policy.refresh(state, cb, lambda b: None, DEFAULT_SETTINGS)
    assert count == 0
    assert actions == []
    assert not new_state.refresh_due


def test_handover_policy_keeps_no_backup(cb):
    """Handover spends nothing up front and disables ground discovery."""
    policy = HandoverPolicy()
    state = ProtocolState(mode=Mode.NOP, serving_rx_beam=12, refresh_due=True)
    new_state, actions, count = policy.refresh(state, cb, lambda b: None, DEFAULT_SETTINGS)
    assert new_state.gr_beam is None
    assert count == 0
    assert not policy.protocol_settings(DEFAULT_SETTINGS).ground_discovery


def test_make_policy():
    """Policies are built from their kind or its string value."""
    assert make_policy("gr").protocol_settings(DEFAULT_SETTINGS).ground_discovery
    assert make_policy("handover").kind is PolicyKind.HANDOVER
    assert make_policy(PolicyKind.SCAN_PLUS_MODEL).access == AccessModel()
    with pytest.raises(ValueError):
        make_policy("beamspy")


def test_policy_report_labels():
    """Report rows carry the comparison-table wording."""
    report = PolicyReport(policy=PolicyKind.EXHAUSTIVE_SCAN, measurements_used=25, outage_ms=0.0)
    assert report.complexity == "Exhaustive Search"
    with pytest.raises(ValidationError):
        PolicyReport(policy=PolicyKind.HANDOVER, measurements_used=-1, outage_ms=0.0)
