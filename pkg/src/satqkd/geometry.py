"""Circular-orbit overpass geometry for one satellite and two ground stations.

Frame: z is the Earth's polar axis; the two stations sit on the great circle
through the pole in the y-z plane, symmetric about the North Pole. ``phi``
rotates the orbit about z and ``xi`` tilts it about the y axis, so that
``phi = xi = 0`` is a polar orbit whose ground track runs through both stations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

EARTH_RADIUS_M = 6.371e6
MU_EARTH = 3.986004418e14
ELEVATION_MODELS = ("horizon", "z-offset")


@dataclass(frozen=True)
class OverpassGeometry:
    """Orbit and station configuration for a single pass.

    Attributes
    ----------
    h : float
        Orbital altitude in metres.
    d : float
        Great-circle separation of the two stations in metres.
    phi : float
        Angle between ground track and station baseline, degrees.
    xi : float
        Tilt of the orbital plane, degrees.
    theta_min : float
        Minimum usable elevation at both stations, degrees.
    elevation_model : str
        ``"horizon"`` uses the local-horizon elevation. ``"z-offset"`` uses
        ``sin(el) = (z_sat - z_ogs) / h``, clipped to [-1, 1], which gives both
        stations the same elevation; kept for comparison only.
    """

    h: float = 500e3
    d: float = 500e3
    phi: float = 0.0
    xi: float = 0.0
    theta_min: float = 10.0
    earth_radius: float = EARTH_RADIUS_M
    mu_earth: float = MU_EARTH
    bin_width: float = 1.0
    elevation_model: str = "horizon"

    def __post_init__(self) -> None:
        errors = self.violations()
        if errors:
            raise ValueError("; ".join(errors))

    def violations(self) -> list[str]:
        out = []
        if not self.h > 0:
            out.append(f"altitude must be > 0 m, got {self.h}")
        if not 0 <= self.d < math.pi * self.earth_radius:
            out.append(f"OGS separation must be in [0, pi*R), got {self.d}")
        if not 0 <= self.theta_min < 90:
            out.append(f"theta_min must be in [0, 90) deg, got {self.theta_min}")
        if not self.bin_width > 0:
            out.append(f"bin width must be > 0 s, got {self.bin_width}")
        if self.elevation_model not in ELEVATION_MODELS:
            out.append(f"elevation_model must be one of {ELEVATION_MODELS}, got {self.elevation_model!r}")
        if not self.earth_radius > 0:
            out.append(f"earth radius must be > 0 m, got {self.earth_radius}")
        return out

    @property
    def orbit_radius(self) -> float:
        return self.earth_radius + self.h

    @property
    def angular_rate(self) -> float:
        """Keplerian circular-orbit angular velocity, rad/s."""
        return math.sqrt(self.mu_earth / self.orbit_radius**3)

    @property
    def period(self) -> float:
        return 2 * math.pi / self.angular_rate

    @property
    def d_xi(self) -> float:
        return ground_track_offset(self.xi, self.phi, self.earth_radius)[0]

    @property
    def delta(self) -> float | None:
        """Baseline-midpoint offset; None where it is undefined (phi = 0, xi != 0)."""
        return ground_track_offset(self.xi, self.phi, self.earth_radius)[1]


@dataclass(frozen=True)
class LinkProfile:
    """Time-resolved slant ranges and elevations for both links."""

    times: np.ndarray
    range_a: np.ndarray
    range_b: np.ndarray
    elev_a: np.ndarray
    elev_b: np.ndarray
    visible: np.ndarray
    bin_width: float = 1.0
    geometry: OverpassGeometry | None = field(default=None, compare=False)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def n_visible(self) -> int:
        return int(np.count_nonzero(self.visible))

    @property
    def visible_duration(self) -> float:
        return self.n_visible * self.bin_width

    def restrict(self) -> "LinkProfile":
        """Return only the jointly visible bins."""
        v = self.visible
        return LinkProfile(
            self.times[v], self.range_a[v], self.range_b[v],
            self.elev_a[v], self.elev_b[v], self.visible[v],
            self.bin_width, self.geometry,
        )


def ground_track_offset(xi: float, phi: float, R: float = EARTH_RADIUS_M):
    """Polar shift of the ground track and its offset from the baseline midpoint.

    Returns ``(d_xi, delta)`` in metres. ``delta`` is None when ``sin(phi) == 0``
    and ``xi != 0``: the shifted track then never meets the baseline.
    """
    if not R > 0:
        raise ValueError(f"R must be positive, got {R}")
    d_xi = R * math.pi * xi / 180.0
    s = math.sin(math.radians(phi))
    if abs(s) < 1e-15:
        return d_xi, (0.0 if d_xi == 0 else None)
    return d_xi, abs(d_xi / s)


def satellite_position(t, geom: OverpassGeometry) -> np.ndarray:
    """Satellite position(s) in metres, shape ``(3,)`` or ``(3, len(t))``.

    Proper rotation ``Rz(-phi) @ Ry(xi)`` applied to the polar orbit
    ``(0, -sin wt, cos wt) * (R + h)``.
    """
    wt = geom.angular_rate * np.asarray(t, dtype=float)
    p, x = math.radians(geom.phi), math.radians(geom.xi)
    cp, sp, cx, sx = math.cos(p), math.sin(p), math.cos(x), math.sin(x)
    c, s = np.cos(wt), np.sin(wt)
    rr = geom.orbit_radius
    return np.array([
        rr * (c * cp * sx - sp * s),
        rr * (-c * sp * sx - cp * s),
        rr * c * cx,
    ])


def ogs_positions(d: float, R: float = EARTH_RADIUS_M) -> tuple[np.ndarray, np.ndarray]:
    """Station positions at colatitude ``d / (2R)`` either side of the North Pole."""
    if not 0 <= d < math.pi * R:
        raise ValueError(f"separation must lie in [0, pi*R), got {d}")
    alpha = d / (2 * R)
    a = np.array([0.0, R * math.sin(alpha), R * math.cos(alpha)])
    b = np.array([0.0, -R * math.sin(alpha), R * math.cos(alpha)])
    return a, b


def link_state(r_sat, r_ogs) -> tuple:
    """Slant range (m) and elevation (deg) of the satellite seen from a station.

    ``r_sat`` may be a single 3-vector or a ``(3, N)`` array.
    """
    r_ogs = np.asarray(r_ogs, dtype=float)
    los = np.asarray(r_sat, dtype=float) - (r_ogs if np.ndim(r_sat) == 1 else r_ogs[:, None])
    rng = np.sqrt(np.sum(los * los, axis=0))
    up = r_ogs / np.linalg.norm(r_ogs)
    sin_el = np.tensordot(up, los, axes=1) / rng
    elev = np.degrees(np.arcsin(np.clip(sin_el, -1.0, 1.0)))
    if np.ndim(rng) == 0:
        return float(rng), float(elev)
    return rng, elev


def baseline_crossing_time(geom: OverpassGeometry) -> float:
    """Time at which the ground track crosses the baseline great circle (x = 0).

    Falls back to 0 when the track runs parallel to the baseline plane.
    """
    p, x = math.radians(geom.phi), math.radians(geom.xi)
    num, den = math.sin(x) * math.cos(p), math.sin(p)
    if abs(den) < 1e-15:
        return 0.0
    return math.atan(num / den) / geom.angular_rate


def sample_overpass(geom: OverpassGeometry) -> LinkProfile:
    """Sample one orbit (+-half a period about the baseline crossing) at ``bin_width``."""
    t0 = baseline_crossing_time(geom)
    half = geom.period / 2
    n = int(math.floor(half / geom.bin_width))
    times = t0 + geom.bin_width * np.arange(-n, n + 1)
    r_sat = satellite_position(times, geom)
    a, b = ogs_positions(geom.d, geom.earth_radius)
    range_a, elev_a = link_state(r_sat, a)
    range_b, elev_b = link_state(r_sat, b)
    if geom.elevation_model == "z-offset":
        elev_a = np.degrees(np.arcsin(np.clip((r_sat[2] - a[2]) / geom.h, -1.0, 1.0)))
        elev_b = np.degrees(np.arcsin(np.clip((r_sat[2] - b[2]) / geom.h, -1.0, 1.0)))
    visible = (elev_a >= geom.theta_min) & (elev_b >= geom.theta_min)
    return LinkProfile(times, range_a, range_b, elev_a, elev_b, visible, geom.bin_width, geom)
