"""Per-link optical efficiency: diffraction, atmosphere and fixed intrinsic loss."""
from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import integrate, special
from scipy.interpolate import CubicSpline

from .geometry import LinkProfile

DEFAULT_ATMOSPHERE = "atmosphere_785nm_synthetic.csv"


@dataclass(frozen=True)
class OpticalSystem:
    """Transmitter/receiver optics for one downlink.

    ``beam_waist`` defaults to half the transmitter aperture. With
    ``aperture_as_radius`` the nominal aperture values bound the diffraction
    integrals as radii, which is the convention that lands the reference
    system near 9.3 dB at 500 km; set it False to treat them as diameters.
    """

    wavelength: float = 785e-9
    tx_diameter: float = 0.10
    rx_diameter: float = 0.70
    beam_waist: float | None = None
    intrinsic_loss_db: float = 12.0
    aperture_as_radius: bool = True

    def __post_init__(self) -> None:
        errors = self.violations()
        if errors:
            raise ValueError("; ".join(errors))

    def violations(self) -> list[str]:
        out = []
        for name in ("wavelength", "tx_diameter", "rx_diameter"):
            if not getattr(self, name) > 0:
                out.append(f"{name} must be > 0, got {getattr(self, name)}")
        if self.beam_waist is not None:
            if not self.beam_waist > 0:
                out.append(f"beam_waist must be > 0, got {self.beam_waist}")
            elif self.beam_waist > self.tx_diameter:
                out.append(f"beam_waist {self.beam_waist} exceeds tx_diameter {self.tx_diameter}")
        if not self.intrinsic_loss_db >= 0:
            out.append(f"intrinsic_loss_db must be >= 0, got {self.intrinsic_loss_db}")
        return out

    @property
    def waist(self) -> float:
        return self.tx_diameter / 2 if self.beam_waist is None else self.beam_waist

    @property
    def tx_radius(self) -> float:
        return self.tx_diameter if self.aperture_as_radius else self.tx_diameter / 2

    @property
    def rx_radius(self) -> float:
        return self.rx_diameter if self.aperture_as_radius else self.rx_diameter / 2


@dataclass(frozen=True)
class AtmosphereTable:
    """Elevation-dependent transmissivity for one wavelength and site."""

    elevation: np.ndarray
    transmissivity: np.ndarray
    wavelength_nm: float | None = None
    site: str = ""

    def __post_init__(self) -> None:
        el = np.asarray(self.elevation, dtype=float)
        tr = np.asarray(self.transmissivity, dtype=float)
        if el.ndim != 1 or el.shape != tr.shape or el.size < 2:
            raise ValueError("atmosphere table needs matching 1-D columns with >= 2 rows")
        if np.any(np.diff(el) <= 0):
            raise ValueError("elevation grid must be strictly increasing")
        if np.any((tr <= 0) | (tr > 1)):
            raise ValueError("transmissivity must lie in (0, 1]")
        if np.any(np.diff(tr) < 0):
            raise ValueError("transmissivity must be non-decreasing in elevation")
        if el[0] > 0 or el[-1] < 90:
            raise ValueError("elevation grid must cover [0, 90] degrees")
        object.__setattr__(self, "elevation", el)
        object.__setattr__(self, "transmissivity", tr)

    def __hash__(self) -> int:
        return hash((self.elevation.tobytes(), self.transmissivity.tobytes(), self.site))

    def __eq__(self, other) -> bool:
        if not isinstance(other, AtmosphereTable):
            return NotImplemented
        return (np.array_equal(self.elevation, other.elevation)
                and np.array_equal(self.transmissivity, other.transmissivity)
                and self.wavelength_nm == other.wavelength_nm and self.site == other.site)

    @classmethod
    def airmass(cls, zenith_transmissivity: float, step: float = 3.0, **kw) -> "AtmosphereTable":
        """Airmass-law table ``T(el) = Tz ** (1 / sin el)``; the 0 deg row uses sin(1 deg)."""
        el = np.arange(0.0, 90.0 + step / 2, step)
        s = np.maximum(np.sin(np.radians(el)), math.sin(math.radians(1.0)))
        return cls(el, zenith_transmissivity ** (1.0 / s), **kw)


@dataclass(frozen=True)
class LossProfile:
    """Per-bin linear efficiencies; zero outside the joint-visibility window."""

    eta_a: np.ndarray
    eta_b: np.ndarray

    @property
    def eta(self) -> np.ndarray:
        return self.eta_a * self.eta_b

    @staticmethod
    def _db(x: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return -10.0 * np.log10(x)

    @property
    def db_a(self) -> np.ndarray:
        return self._db(self.eta_a)

    @property
    def db_b(self) -> np.ndarray:
        return self._db(self.eta_b)

    @property
    def db(self) -> np.ndarray:
        return self.db_a + self.db_b


def read_table_csv(path, value_column: str) -> tuple[np.ndarray, np.ndarray]:
    """Read an ``elevation_deg,<value_column>`` CSV; ``#`` lines are comments."""
    path = Path(path)
    with path.open(newline="") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.DictReader(lines)
    if reader.fieldnames != ["elevation_deg", value_column]:
        raise ValueError(
            f"{path}: expected header 'elevation_deg,{value_column}', got {reader.fieldnames}"
        )
    el, val = [], []
    for lineno, row in enumerate(reader, start=2):
        try:
            el.append(float(row["elevation_deg"]))
            val.append(float(row[value_column]))
        except (TypeError, ValueError) as exc:
            raise ValueError(f"{path}: bad row {lineno}: {row}") from exc
    return np.array(el), np.array(val)


def data_path(name: str) -> Path:
    return Path(str(resources.files("satqkd") / "data" / name))


def load_atmosphere(path=None, wavelength_nm=None, site="") -> AtmosphereTable:
    """Load a transmissivity table; ``None`` gives the bundled synthetic default."""
    if path is None:
        path = data_path(DEFAULT_ATMOSPHERE)
        wavelength_nm = 785.0 if wavelength_nm is None else wavelength_nm
        site = site or "synthetic"
    el, tr = read_table_csv(path, "transmissivity")
    return AtmosphereTable(el, tr, wavelength_nm, site)


def atmospheric_loss(table: AtmosphereTable, elevation):
    """Atmospheric loss in dB, linear interpolation of transmissivity in elevation."""
    el = np.asarray(elevation, dtype=float)
    if np.any((el < 0) | (el > 90)) or np.any(np.isnan(el)):
        raise ValueError(f"elevation must lie in [0, 90] degrees, got {elevation}")
    tr = np.interp(el, table.elevation, table.transmissivity)
    out = -10.0 * np.log10(tr)
    return float(out) if out.ndim == 0 else out


# --- diffraction -------------------------------------------------------------
#
# Far-field amplitude of the truncated Gaussian depends on angle only, through
# G(q) = int_0^a exp(-r^2/w0^2) J0(q r) r dr with q = k * rho / z. The power
# inside a receiver of radius b at range z is 2 pi int_0^{k b / z} G(q)^2 q dq,
# and by Hankel-Parseval the same integral to infinity equals the transmitted
# power. The ratio is a function of Q = k b / z alone.


def _legendre(a: float, nodes: int):
    x, w = np.polynomial.legendre.leggauss(nodes)
    return 0.5 * a * (x + 1), 0.5 * a * w


def _far_field(q: float, r: np.ndarray, wr: np.ndarray) -> float:
    return float(np.dot(wr, special.j0(q * r)))


def _transmitted_power(a: float, w0: float) -> float:
    return 0.5 * math.pi * w0**2 * -math.expm1(-2 * a**2 / w0**2)


def _encircled_power(q_lo: float, q_hi: float, a: float, w0: float) -> float:
    nodes = max(96, int(2 * q_hi * a) + 64)
    r, w = _legendre(a, nodes)
    wr = w * np.exp(-(r / w0) ** 2) * r
    f = lambda q: 2 * math.pi * q * _far_field(q, r, wr) ** 2
    # Split at J0 zeros of the aperture edge so quad sees at most one lobe per piece.
    brk = np.arange(q_lo, q_hi, math.pi / a)[1:]
    edges = np.concatenate(([q_lo], brk, [q_hi]))
    return sum(
        integrate.quad(f, lo, hi, epsabs=0.0, epsrel=1e-10, limit=200)[0]
        for lo, hi in zip(edges[:-1], edges[1:])
    )


def collection_fraction(sys: OpticalSystem, range_m: float) -> float:
    """Fraction of transmitted power collected by the receiver at ``range_m``."""
    if not range_m > 0:
        raise ValueError(f"range must be positive, got {range_m}")
    k = 2 * math.pi / sys.wavelength
    q_max = k * sys.rx_radius / range_m
    a, w0 = sys.tx_radius, sys.waist
    return _encircled_power(0.0, q_max, a, w0) / _transmitted_power(a, w0)


def diffraction_loss(sys: OpticalSystem, range_m: float) -> float:
    """Diffraction loss in dB for the Fraunhofer far field of the truncated Gaussian."""
    frac = collection_fraction(sys, range_m)
    return max(0.0, -10.0 * math.log10(min(frac, 1.0)))


class DiffractionCache:
    """Log-range spline of diffraction loss for one optical system.

    Nodes are computed once with cumulative quadrature; between nodes a cubic
    spline in (log range, dB) is used. Outside the tabulated span the exact
    integral is evaluated.
    """

    def __init__(self, sys: OpticalSystem, r_min: float = 1e5, r_max: float = 2e7,
                 nodes: int = 121):
        self.sys = sys
        self.r_min, self.r_max = r_min, r_max
        k = 2 * math.pi / sys.wavelength
        ranges = np.geomspace(r_min, r_max, nodes)
        q = (k * sys.rx_radius / ranges)[::-1]
        a, w0 = sys.tx_radius, sys.waist
        pieces = [_encircled_power(0.0, q[0], a, w0)]
        pieces += [_encircled_power(lo, hi, a, w0) for lo, hi in zip(q[:-1], q[1:])]
        frac = np.cumsum(pieces) / _transmitted_power(a, w0)
        db = np.maximum(0.0, -10.0 * np.log10(np.minimum(frac, 1.0)))[::-1]
        self._spline = CubicSpline(np.log(ranges), db)

    def __call__(self, range_m) -> np.ndarray:
        r = np.asarray(range_m, dtype=float)
        inside = (r >= self.r_min) & (r <= self.r_max)
        out = np.empty_like(r)
        out[inside] = self._spline(np.log(r[inside]))
        for idx in zip(*np.nonzero(~inside)):
            out[idx] = diffraction_loss(self.sys, float(r[idx]))
        return out


@functools.lru_cache(maxsize=64)
def diffraction_cache(sys: OpticalSystem) -> DiffractionCache:
    return DiffractionCache(sys)


def link_efficiency(
    sys: OpticalSystem,
    table: AtmosphereTable,
    profile: LinkProfile,
    sys_b: OpticalSystem | None = None,
    table_b: AtmosphereTable | None = None,
    *,
    diffraction: bool = True,
    atmosphere: bool = True,
    extra_loss_db: float = 0.0,
) -> LossProfile:
    """Per-bin efficiencies of both links; link B reuses link A's optics/table by default.

    ``extra_loss_db`` is added to every visible bin of each link.
    """
    sys_b = sys if sys_b is None else sys_b
    table_b = table if table_b is None else table_b
    vis = profile.visible
    effs = []
    for s, tab, rng, el in ((sys, table, profile.range_a, profile.elev_a),
                            (sys_b, table_b, profile.range_b, profile.elev_b)):
        db = np.full(rng.shape, s.intrinsic_loss_db + extra_loss_db)
        if diffraction:
            db[vis] += diffraction_cache(s)(rng[vis])
        if atmosphere:
            db[vis] += atmospheric_loss(tab, np.clip(el[vis], 0.0, 90.0))
        eta = np.where(vis, 10.0 ** (-db / 10.0), 0.0)
        effs.append(eta)
    return LossProfile(effs[0], effs[1])
