from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from satqkd.geometry import (
    EARTH_RADIUS_M,
    OverpassGeometry,
    baseline_crossing_time,
    ground_track_offset,
    link_state,
    ogs_positions,
    sample_overpass,
    satellite_position,
)

R = EARTH_RADIUS_M


def test_ground_track_offset_zero_tilt():
    assert ground_track_offset(0.0, 45.0, R) == (0.0, 0.0)


def test_ground_track_offset_quarter_circle():
    d_xi, delta = ground_track_offset(90.0, 90.0, R)
    assert d_xi == pytest.approx(10007.543e3, rel=1e-6)
    assert delta == pytest.approx(d_xi)


def test_ground_track_offset_one_degree():
    d_xi, delta = ground_track_offset(1.0, 30.0, R)
    assert d_xi == pytest.approx(111.19e3, abs=10)
    assert delta == pytest.approx(222.39e3, abs=10)


def test_ground_track_offset_undefined_when_parallel():
    d_xi, delta = ground_track_offset(2.0, 0.0, R)
    assert d_xi > 0 and delta is None


def test_ground_track_offset_rejects_bad_radius():
    with pytest.raises(ValueError):
        ground_track_offset(1.0, 1.0, 0.0)


def test_satellite_at_t0_over_pole():
    g = OverpassGeometry()
    np.testing.assert_allclose(satellite_position(0.0, g), [0, 0, R + g.h], atol=1e-6)


def test_satellite_quarter_orbit():
    g = OverpassGeometry()
    t = (math.pi / 2) / g.angular_rate
    np.testing.assert_allclose(satellite_position(t, g), [0, -(R + g.h), 0], atol=1e-3)


def test_period_is_keplerian():
    g = OverpassGeometry(h=500e3)
    assert g.period == pytest.approx(2 * math.pi * math.sqrt((R + 500e3) ** 3 / 3.986004418e14))
    assert 5600 < g.period < 5700


@settings(max_examples=200, deadline=None)
@given(
    t=st.floats(-1e5, 1e5),
    phi=st.floats(-180, 180),
    xi=st.floats(-90, 90),
    h=st.floats(1e5, 4e7),
)
def test_norm_preserved(t, phi, xi, h):
    g = OverpassGeometry(h=h, phi=phi, xi=xi)
    r = satellite_position(t, g)
    assert np.linalg.norm(r) == pytest.approx(R + h, rel=1e-9)


def test_ogs_positions_coincident():
    a, b = ogs_positions(0.0, R)
    np.testing.assert_allclose(a, [0, 0, R])
    np.testing.assert_allclose(b, [0, 0, R])


@pytest.mark.parametrize("d, alpha_deg", [(500e3, 2.2486), (2000e3, 8.9946)])
def test_ogs_positions_colatitude_and_distance(d, alpha_deg):
    a, b = ogs_positions(d, R)
    colat = math.degrees(math.acos(a[2] / R))
    assert colat == pytest.approx(math.degrees(d / (2 * R)), abs=1e-9)
    # Quoted reference angles are rounded; d / 2R gives 2.2483 and 8.9932 deg.
    assert colat == pytest.approx(alpha_deg, abs=2e-3)
    # Great-circle distance from the central angle, computed independently.
    central = math.atan2(np.linalg.norm(np.cross(a, b)), np.dot(a, b))
    assert R * central == pytest.approx(d, rel=1e-12)


def test_ogs_positions_rejects_antipodal():
    with pytest.raises(ValueError):
        ogs_positions(math.pi * R, R)


def test_link_state_zenith():
    rng, el = link_state(np.array([0, 0, R + 500e3]), np.array([0, 0, R]))
    assert rng == pytest.approx(500e3)
    assert el == pytest.approx(90.0)


def test_link_state_geometric_horizon():
    h = 500e3
    ang = math.acos(R / (R + h))
    sat = (R + h) * np.array([0.0, math.sin(ang), math.cos(ang)])
    rng, el = link_state(sat, np.array([0.0, 0.0, R]))
    assert rng == pytest.approx(math.sqrt((R + h) ** 2 - R**2))
    assert rng == pytest.approx(2574e3, abs=1e3)
    assert el == pytest.approx(0.0, abs=1e-7)


def test_link_state_antipode_below_horizon():
    _, el = link_state(np.array([0, 0, -(R + 500e3)]), np.array([0, 0, R]))
    assert el < 0


def test_joint_visibility_window_reference_pass():
    prof = sample_overpass(OverpassGeometry(h=500e3, d=500e3))
    assert 250 <= prof.visible_duration <= 500
    assert np.all(prof.elev_a[prof.visible] >= 10) and np.all(prof.elev_b[prof.visible] >= 10)
    assert np.all(prof.range_a[prof.visible] > 0)


def test_visible_flag_matches_elevations():
    prof = sample_overpass(OverpassGeometry(d=1500e3, phi=20))
    expect = (prof.elev_a >= 10) & (prof.elev_b >= 10)
    np.testing.assert_array_equal(prof.visible, expect)


def test_large_tilt_removes_joint_visibility():
    prof = sample_overpass(OverpassGeometry(d=500e3, phi=90, xi=15))
    assert prof.n_visible == 0


def test_coincident_stations_share_elevation():
    prof = sample_overpass(OverpassGeometry(d=0.0, phi=0.0))
    np.testing.assert_allclose(prof.elev_a, prof.elev_b)


@pytest.mark.parametrize("phi", [0.0, 30.0, 75.0])
def test_mirror_symmetry(phi):
    g = OverpassGeometry(d=800e3, phi=phi, xi=0.0)
    assert baseline_crossing_time(g) == 0.0
    prof = sample_overpass(g)
    np.testing.assert_allclose(prof.times, -prof.times[::-1], atol=1e-9)
    np.testing.assert_allclose(prof.elev_a, prof.elev_b[::-1], atol=1e-9)


def test_elevation_decreases_with_separation_at_crossing():
    seps = np.linspace(0, 3000e3, 31)
    g0 = OverpassGeometry()
    sat = satellite_position(0.0, g0)
    elev = [link_state(sat, ogs_positions(d, R)[0])[1] for d in seps]
    assert np.all(np.diff(elev) < 0)


@settings(max_examples=30, deadline=None)
@given(lo=st.floats(0, 80), hi=st.floats(0, 80), phi=st.floats(0, 90), d=st.floats(0, 3e6))
def test_visibility_nesting(lo, hi, phi, d):
    lo, hi = min(lo, hi), max(lo, hi)
    a = sample_overpass(OverpassGeometry(d=d, phi=phi, theta_min=lo))
    b = sample_overpass(OverpassGeometry(d=d, phi=phi, theta_min=hi))
    assert not np.any(b.visible & ~a.visible)


def test_restrict_keeps_only_visible():
    prof = sample_overpass(OverpassGeometry(d=1000e3))
    sub = prof.restrict()
    assert len(sub) == prof.n_visible and sub.visible.all()


def test_z_offset_model_equalises_elevations():
    prof = sample_overpass(OverpassGeometry(d=1000e3, elevation_model="z-offset"))
    np.testing.assert_allclose(prof.elev_a, prof.elev_b)


@pytest.mark.parametrize("kw, word", [
    ({"h": -1.0}, "altitude"),
    ({"theta_min": 90.0}, "theta_min"),
    ({"d": -5.0}, "separation"),
    ({"elevation_model": "flat"}, "elevation_model"),
])
def test_invalid_geometry(kw, word):
    with pytest.raises(ValueError, match=word):
        OverpassGeometry(**kw)
