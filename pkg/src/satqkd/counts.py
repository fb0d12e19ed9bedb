"""Coincidence and error statistics from link efficiencies and noise sources."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import LossProfile, data_path, read_table_csv

PLANCK = 6.62607015e-34
LIGHT_SPEED = 299792458.0
DEFAULT_RADIANCE = "radiance_night_synthetic.csv"


@dataclass(frozen=True)
class DetectorModel:
    """Receiver noise model, identical at both stations.

    ``fov`` is a solid angle in steradian and ``filter_bandwidth`` is in nm.
    ``background_scale`` multiplies the background click probability.
    """

    p_dc: float = 5e-7
    p_ap: float = 1e-3
    coincidence_window: float = 5e-9
    fov: float = 5e-8
    filter_bandwidth: float = 10.0
    background_scale: float = 1.0

    def __post_init__(self) -> None:
        errors = self.violations()
        if errors:
            raise ValueError("; ".join(errors))

    def violations(self) -> list[str]:
        out = []
        for name in ("p_dc", "p_ap"):
            if not 0 <= getattr(self, name) <= 1:
                out.append(f"{name} must lie in [0, 1], got {getattr(self, name)}")
        for name in ("coincidence_window", "fov", "filter_bandwidth"):
            if not getattr(self, name) > 0:
                out.append(f"{name} must be > 0, got {getattr(self, name)}")
        if not self.background_scale >= 0:
            out.append(f"background_scale must be >= 0, got {self.background_scale}")
        return out


@dataclass(frozen=True)
class SourceModel:
    pair_rate: float = 2e8
    qber_intrinsic: float = 0.001
    squeezing: float = 0.0

    def __post_init__(self) -> None:
        errors = self.violations()
        if errors:
            raise ValueError("; ".join(errors))

    def violations(self) -> list[str]:
        out = []
        if not self.pair_rate > 0:
            out.append(f"pair_rate must be > 0, got {self.pair_rate}")
        if not 0 <= self.qber_intrinsic < 0.5:
            out.append(f"qber_intrinsic must lie in [0, 0.5), got {self.qber_intrinsic}")
        if not self.squeezing >= 0:
            out.append(f"squeezing must be >= 0, got {self.squeezing}")
        return out


@dataclass(frozen=True)
class RadianceTable:
    """Sky radiance seen by a station, W cm^-2 sr^-1 nm^-1, versus elevation."""

    elevation: tuple
    radiance: tuple

    @classmethod
    def constant(cls, value: float) -> "RadianceTable":
        return cls((0.0, 90.0), (float(value), float(value)))

    @classmethod
    def load(cls, path=None) -> "RadianceTable":
        el, val = read_table_csv(path or data_path(DEFAULT_RADIANCE), "radiance_w_cm2_sr_nm")
        if np.any(np.diff(el) <= 0) or np.any(val < 0):
            raise ValueError("radiance table needs increasing elevations and radiance >= 0")
        return cls(tuple(el), tuple(val))

    def __call__(self, elevation):
        return np.interp(elevation, self.elevation, self.radiance)


@dataclass(frozen=True)
class CountsProfile:
    """Per-bin extraneous probabilities, coincidence and error rates.

    ``coincidences`` and ``errors`` are expected (unsifted) counts per bin.
    """

    p_ec_a: np.ndarray
    p_ec_b: np.ndarray
    D: np.ndarray
    e: np.ndarray
    pair_rate: float
    bin_width: float

    @property
    def coincidences(self) -> np.ndarray:
        return self.pair_rate * self.D * self.bin_width

    @property
    def errors(self) -> np.ndarray:
        return self.pair_rate * self.e * self.bin_width

    @property
    def qber(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.D > 0, self.e / np.where(self.D > 0, self.D, 1.0), 0.0)

    def __len__(self) -> int:
        return len(self.D)


def pair_number_probability(n, r: float):
    """Probability of ``n`` pairs from a two-mode squeezed vacuum with squeezing ``r``."""
    if r < 0:
        raise ValueError(f"squeezing must be >= 0, got {r}")
    n = np.asarray(n)
    if np.any(n < 0):
        raise ValueError("pair number must be >= 0")
    out = np.tanh(r) ** (2 * n) / np.cosh(r) ** 2
    return float(out) if out.ndim == 0 else out


def multi_pair_probability(r: float) -> float:
    """Probability of more than one pair, ``1 - P(0) - P(1)``."""
    # tanh^4(r) is the closed form of the geometric tail and avoids cancellation at small r.
    return float(np.tanh(r) ** 4)


def photon_energy(wavelength: float) -> float:
    return PLANCK * LIGHT_SPEED / wavelength


def background_click_prob(radiance, det: DetectorModel, rx_diameter: float, wavelength: float):
    """Background click probability per coincidence window, clamped to [0, 1].

    Receiver area is ``pi (rx_diameter / 2)^2`` converted to cm^2 to match the
    radiance units.
    """
    area_cm2 = math.pi * (rx_diameter / 2) ** 2 * 1e4
    p = (det.coincidence_window / photon_energy(wavelength)) * np.asarray(radiance, dtype=float) \
        * area_cm2 * det.fov * det.filter_bandwidth * det.background_scale
    out = np.clip(p, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def extraneous_prob(p_dc, p_bg):
    """Probability of at least one dark or background click."""
    return p_dc + p_bg - p_dc * p_bg


def coincidence_rate(eta_a, eta_b, p_ec_a, p_ec_b, p_ap):
    """Mean number of simultaneous clicks at both stations per emitted pair."""
    eta = eta_a * eta_b
    return (1 + p_ap**2) * (
        eta
        + eta_a * (1 - eta_b) * p_ec_b
        + eta_b * (1 - eta_a) * p_ec_a
        + (1 - eta) * p_ec_a * p_ec_b
    )


def error_rate(eta_a, eta_b, p_ec_a, p_ec_b, p_ap, qber_intrinsic, D):
    """Mean number of erroneous coincidences per emitted pair."""
    eta = eta_a * eta_b
    return (
        eta_a * (1 - eta_b) * (1 - p_ec_a) * p_ec_b
        + eta_b * (1 - eta_a) * (1 - p_ec_b) * p_ec_a
        + (1 - eta) * p_ec_a * p_ec_b
        + p_ap**2 * D / 2
        + qber_intrinsic * eta
    )


def build_counts(
    loss: LossProfile,
    det: DetectorModel,
    src: SourceModel,
    radiance_a=None,
    radiance_b=None,
    *,
    elev_a=None,
    elev_b=None,
    rx_diameter: tuple[float, float] = (0.70, 0.70),
    wavelength: tuple[float, float] = (785e-9, 785e-9),
    bin_width: float = 1.0,
) -> CountsProfile:
    """Per-bin counts for a pass.

    ``radiance_a``/``radiance_b`` are scalars or :class:`RadianceTable` objects;
    tables are evaluated at the per-bin elevations. Bins with zero efficiency
    on both links keep only extraneous coincidences.
    """
    p_ec = []
    for rad, el, rx, lam in ((radiance_a, elev_a, rx_diameter[0], wavelength[0]),
                             (radiance_b, elev_b, rx_diameter[1], wavelength[1])):
        if rad is None:
            rad = RadianceTable.load()
        if callable(rad):
            el = np.full(loss.eta_a.shape, 90.0) if el is None else np.clip(el, 0.0, 90.0)
            rad = rad(el)
        p_bg = background_click_prob(rad, det, rx, lam)
        p_ec.append(np.broadcast_to(extraneous_prob(det.p_dc, p_bg), loss.eta_a.shape).copy())
    D = coincidence_rate(loss.eta_a, loss.eta_b, p_ec[0], p_ec[1], det.p_ap)
    e = error_rate(loss.eta_a, loss.eta_b, p_ec[0], p_ec[1], det.p_ap, src.qber_intrinsic, D)
    e = np.minimum(e, D)
    return CountsProfile(p_ec[0], p_ec[1], D, e, src.pair_rate, bin_width)
