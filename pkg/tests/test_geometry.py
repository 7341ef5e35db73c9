"""Tests for ray geometry."""

import numpy as np
import pytest
from pydantic import ValidationError

from groundwave.blockage import PEDESTRIAN
from groundwave.errors import InvalidGeometryError
from groundwave.geometry import (
    Blocker,
    PathKind,
    SiteGeometry,
    blocker_reach,
    ground_reflection_path,
    is_blocked,
    los_path,
    ray_height,
)


@pytest.fixture
def geom():
    """The measured testbed: 2.5 m transmitter, 1 m handset, 6 m apart."""
    return SiteGeometry()


def test_blocker_reach_matches_testbed(geom):
    """A 1.78 m pedestrian cuts the LoS up to 3.12 m from the handset."""
    assert blocker_reach(geom, 1.78) == pytest.approx(3.12, rel=1e-9)


def test_blocker_reach_clamps(geom):
    """Short blockers never reach the ray, tall ones block the whole span."""
    assert blocker_reach(geom, 0.9) == 0.0
    assert blocker_reach(geom, 1.0) == 0.0
    assert blocker_reach(geom, 2.5) == 6.0
    assert blocker_reach(geom, 4.0) == 6.0


def test_blocker_reach_rejects_level_link():
    """Equal heights are not an elevated transmitter."""
    level = SiteGeometry.model_construct(h_tx=1.0, h_rx=1.0, d_tr=6.0, tilt_tx=0.0)
    with pytest.raises(InvalidGeometryError):
        blocker_reach(level, 1.78)


def test_site_geometry_validation():
    """Construction enforces an elevated transmitter and a tilt below 90 degrees."""
    with pytest.raises(ValidationError):
        SiteGeometry(h_tx=1.0, h_rx=1.0)
    with pytest.raises(ValidationError):
        SiteGeometry(tilt_tx=90.0)
    with pytest.raises(ValidationError):
        SiteGeometry(d_tr=0.0)


def test_los_path(geom):
    """LoS rises from the handset at atan(1.5 / 6)."""
    path = los_path(geom)
    assert path.kind is PathKind.LOS
    assert path.length == pytest.approx(np.hypot(6.0, 1.5))
    assert path.arrival_elevation == pytest.approx(14.036, abs=1e-3)
    assert path.departure_elevation == pytest.approx(-path.arrival_elevation)


def test_ground_reflection_arrives_from_below(geom):
    """The image method puts the bounce 30.26 degrees below the handset horizon."""
    path = ground_reflection_path(geom)
    assert path.kind is PathKind.GROUND_REFLECTION
    assert abs(path.arrival_elevation) == pytest.approx(30.26, abs=0.01)
    assert path.arrival_elevation < 0
    assert path.length == pytest.approx(np.hypot(6.0, 3.5))
    assert path.reflection_point == pytest.approx(6.0 * 2.5 / 3.5)


def test_ground_reflection_is_tilt_independent():
    """Tilting the array changes gains, not the bounce geometry."""
    flat = ground_reflection_path(SiteGeometry(tilt_tx=0.0))
    tilted = ground_reflection_path(SiteGeometry(tilt_tx=20.0))
    assert flat == tilted


@pytest.mark.parametrize("h_tx, h_rx, d_tr", [(2.5, 1.0, 6.0), (3.0, 1.5, 10.0), (1.2, 1.0, 2.0)])
def test_ground_reflection_is_specular(h_tx, h_rx, d_tr):
    """Both legs leave the bounce point at the same grazing angle."""
    geom = SiteGeometry(h_tx=h_tx, h_rx=h_rx, d_tr=d_tr)
    gr = ground_reflection_path(geom)
    rx_leg = d_tr - gr.reflection_point
    assert h_rx / rx_leg == pytest.approx(h_tx / gr.reflection_point, abs=1e-9)
    # same slope read off the traced ray
    incoming = ray_height(geom, gr, d_tr) / gr.reflection_point
    outgoing = ray_height(geom, gr, 0.0) / rx_leg
    assert incoming == pytest.approx(outgoing, abs=1e-9)
    assert outgoing == pytest.approx(np.tan(np.radians(-gr.arrival_elevation)))


def test_ray_height_profiles(geom):
    """Heights along the LoS and the reflected ray."""
    los = los_path(geom)
    gr = ground_reflection_path(geom)
    assert ray_height(geom, los, 0.0) == pytest.approx(1.0)
    assert ray_height(geom, los, 6.0) == pytest.approx(2.5)
    assert ray_height(geom, los, 3.12) == pytest.approx(1.78)
    assert ray_height(geom, gr, 0.0) == pytest.approx(1.0)
    assert ray_height(geom, gr, 6.0 - gr.reflection_point) == pytest.approx(0.0)
    assert ray_height(geom, gr, 6.0) == pytest.approx(2.5)
    assert ray_height(geom, los, -0.1) is None
    assert ray_height(geom, los, 6.1) is None


def test_is_blocked_los(geom):
    """Blocking depends on station, height and lateral offset."""
    los = los_path(geom)
    assert is_blocked(geom, los, Blocker(distance_from_rx=2.0))
    assert not is_blocked(geom, los, Blocker(distance_from_rx=3.5))
    assert not is_blocked(geom, los, Blocker(distance_from_rx=2.0, azimuth_offset=0.3))
    assert is_blocked(geom, los, Blocker(distance_from_rx=2.0, azimuth_offset=0.25))


def test_blocked_iff_within_reach(geom):
    """For blockers taller than the handset, LoS blockage is exactly d <= reach."""
    rng = np.random.default_rng(7)
    los = los_path(geom)
    for h_b, d in zip(rng.uniform(1.0, 2.5, 1000), rng.uniform(0.0, 6.0, 1000)):
        blocker = Blocker(height=float(h_b), distance_from_rx=float(d))
        assert is_blocked(geom, los, blocker) == (d <= blocker_reach(geom, h_b))


def test_pedestrian_leaves_the_reflection_open(geom):
    """The pedestrian's leg gap passes the reflected ray at the measured stations."""
    gr = ground_reflection_path(geom)
    los = los_path(geom)
    for d in (0.5, 2.0, 3.0):
        blocker = PEDESTRIAN.model_copy(update={"distance_from_rx": d})
        assert is_blocked(geom, los, blocker)
        assert not is_blocked(geom, gr, blocker)
    assert is_blocked(geom, gr, PEDESTRIAN.model_copy(update={"distance_from_rx": 3.1}))


def test_solid_blocker_cuts_the_reflection(geom):
    """Without clearance a standing body always meets the bounce."""
    gr = ground_reflection_path(geom)
    assert is_blocked(geom, gr, Blocker(distance_from_rx=2.0))


def test_blocker_clearance_below_height():
    """The gap under a body must be lower than the body."""
    with pytest.raises(ValidationError):
        Blocker(height=1.0, clearance=1.0)
