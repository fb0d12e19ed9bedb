"""System-level studies: single passes, parameter grids, key cutoff and annual yield."""
from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .channel import LossProfile, link_efficiency
from .config import Scenario
from .counts import CountsProfile, build_counts
from .finitekey import SklResult, SweepCurve, threshold_sweep
from .geometry import EARTH_RADIUS_M, LinkProfile, sample_overpass

log = logging.getLogger(__name__)

SECONDS_PER_YEAR = 365.25 * 86400.0
AXES = ("altitude_m", "ogs_separation_m", "phi_deg", "xi_deg", "delta_m", "background_scale")


def max_viewable_distance(h: float, R: float = EARTH_RADIUS_M) -> float:
    """Largest station separation with both stations able to see the satellite (theta_min = 0)."""
    if not h > 0:
        raise ValueError(f"altitude must be > 0, got {h}")
    return 2 * R * math.acos(R / (R + h))


@dataclass
class PassOutcome:
    """Every intermediate product of one simulated pass (visible bins only)."""

    skl: SklResult
    profile: LinkProfile
    loss: LossProfile
    counts: CountsProfile
    curve: SweepCurve | None


def loss_profile(sc: Scenario) -> tuple[LinkProfile, LossProfile]:
    """Full-orbit link profile and efficiencies; efficiencies are zero outside visibility."""
    prof = sample_overpass(sc.geometry)
    atm_a, atm_b = sc.atmosphere()
    return prof, link_efficiency(sc.optics_a, atm_a, prof, sc.optics_b, atm_b)


def simulate_pass(sc: Scenario, workers: int = 1) -> PassOutcome:
    prof = sample_overpass(sc.geometry).restrict()
    atm_a, atm_b = sc.atmosphere()
    loss = link_efficiency(sc.optics_a, atm_a, prof, sc.optics_b, atm_b)
    rad_a, rad_b = sc.radiance()
    counts = build_counts(
        loss, sc.detector, sc.source, rad_a, rad_b,
        elev_a=prof.elev_a, elev_b=prof.elev_b,
        rx_diameter=(sc.optics_a.rx_diameter, sc.optics_b.rx_diameter),
        wavelength=(sc.optics_a.wavelength, sc.optics_b.wavelength),
        bin_width=prof.bin_width,
    )
    if prof.n_visible == 0:
        return PassOutcome(SklResult(0), prof, loss, counts, None)
    best, curve = threshold_sweep(counts, sc.security, sc.n_thresholds, sc.threshold_model,
                                  workers)
    return PassOutcome(best, prof, loss, counts, curve)


def single_pass_skl(sc: Scenario, workers: int = 1) -> SklResult:
    return simulate_pass(sc, workers).skl


# --- grids -------------------------------------------------------------------


def xi_for_offset(delta_m: float, phi_deg: float, R: float = EARTH_RADIUS_M) -> float:
    """Tilt (deg) that puts the track ``delta_m`` from the baseline midpoint at angle ``phi``.

    At ``phi = 0`` no tilt reproduces a finite offset, so 0 is returned.
    """
    s = abs(math.sin(math.radians(phi_deg)))
    if s < 1e-15:
        return 0.0
    return math.degrees(delta_m * s / R)


@dataclass(frozen=True)
class SweepSpec:
    """Cartesian grid over scenario axes.

    Empty axes keep the base scenario value. ``delta_m`` and ``xi_deg`` are
    alternative ways to set the tilt; giving both is an error.
    """

    base: Scenario = field(default_factory=Scenario)
    altitude_m: tuple = ()
    ogs_separation_m: tuple = ()
    phi_deg: tuple = ()
    xi_deg: tuple = ()
    delta_m: tuple = ()
    background_scale: tuple = ()

    def __post_init__(self) -> None:
        if self.xi_deg and self.delta_m:
            raise ValueError("give either xi_deg or delta_m, not both")
        for name in AXES:
            vals = getattr(self, name)
            object.__setattr__(self, name, tuple(float(v) for v in vals))
            if any(not math.isfinite(v) for v in getattr(self, name)):
                raise ValueError(f"{name}: non-finite value")

    @property
    def axes(self) -> list[str]:
        return [a for a in AXES if getattr(self, a)]

    def cells(self) -> list[dict]:
        names = self.axes
        return [dict(zip(names, combo))
                for combo in itertools.product(*(getattr(self, a) for a in names))]

    def scenario(self, cell: dict) -> Scenario:
        values = {k: v for k, v in cell.items() if k != "delta_m"}
        if "delta_m" in cell:
            phi = cell.get("phi_deg", self.base.geometry.phi)
            values["xi_deg"] = xi_for_offset(cell["delta_m"], phi, self.base.geometry.earth_radius)
        return self.base.with_values(**values) if values else self.base


@dataclass(frozen=True)
class SweepRow:
    index: int
    cell: dict
    result: SklResult | None
    error: str = ""


def run_sweep(spec: SweepSpec, threads: int = 1) -> list[SweepRow]:
    """Evaluate every grid cell; failures are recorded per cell and the run continues.

    Rows come back in cell order regardless of ``threads``.
    """
    cells = spec.cells() or [{}]

    def job(item):
        idx, cell = item
        try:
            return SweepRow(idx, cell, single_pass_skl(spec.scenario(cell)))
        except Exception as exc:  # noqa: BLE001 - recorded in the output row
            log.warning("cell %d %s failed: %s", idx, cell, exc)
            return SweepRow(idx, cell, None, f"{type(exc).__name__}: {exc}")

    items = list(enumerate(cells))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(job, items))
    else:
        rows = [job(it) for it in items]
    return sorted(rows, key=lambda r: r.index)


def key_cutoff_distance(sc: Scenario, lo: float = 100e3, hi: float | None = None,
                        tol: float = 5e3) -> float:
    """Separation (m) at which the pass key first drops to zero, by bisection.

    Assumes the key is positive at ``lo`` and falls monotonically with
    separation. ``hi`` defaults to the largest valid separation.
    """
    R = sc.geometry.earth_radius
    if hi is None:
        hi = min(max_viewable_distance(sc.geometry.h, R), math.pi * R * 0.999)
    ell = lambda d: single_pass_skl(sc.with_values(ogs_separation_m=d)).ell
    if ell(lo) == 0:
        return lo
    if ell(hi) > 0:
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ell(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# --- annual ------------------------------------------------------------------


@dataclass(frozen=True)
class AnnualConfig:
    """Sampling of overpass geometries over a year.

    The symmetric polar placement maps ``gamma`` to ``phi = gamma`` with zero
    midpoint offset. Passes at ``gamma`` and ``gamma + 180`` are the same
    track flown in reverse, so ``n_gamma`` points over [0, 180] deg cover the
    circle. ``symmetric`` samples only [0, 90] and mirrors, valid when
    ``gamma`` and ``180 - gamma`` are mirror images. ``gamma_mask`` (callable on
    degrees) zeroes excluded geometries, e.g. daylight passes.
    """

    n_gamma: int = 181
    symmetric: bool = False
    gamma_mask: object = None

    def __post_init__(self) -> None:
        if self.n_gamma < 2:
            raise ValueError(f"n_gamma must be >= 2, got {self.n_gamma}")
        if self.symmetric and self.n_gamma % 2 == 0:
            raise ValueError("symmetric sampling needs an odd n_gamma so 90 deg is a node")


@dataclass(frozen=True)
class AnnualResult:
    bits: float
    gamma_deg: np.ndarray
    ell: np.ndarray
    orbits_per_year: float


def orbits_per_year(sc: Scenario) -> float:
    return SECONDS_PER_YEAR / sc.geometry.period


def annual_skl(cfg: AnnualConfig, sc: Scenario, skl_fn=None, threads: int = 1) -> AnnualResult:
    """Yearly key: ``N_orbit / (2 pi) * integral over gamma of SKL``, trapezoidal in gamma.

    ``skl_fn(gamma_deg) -> bits`` overrides the pass simulation.
    """
    gamma = np.linspace(0.0, 180.0, cfg.n_gamma)
    sample = gamma[gamma <= 90.0] if cfg.symmetric else gamma
    if skl_fn is None:
        skl_fn = lambda g: single_pass_skl(sc.with_values(phi_deg=float(g), xi_deg=0.0)).ell
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            vals = np.array(list(pool.map(skl_fn, sample)), dtype=float)
    else:
        vals = np.array([skl_fn(g) for g in sample], dtype=float)
    if cfg.symmetric:
        vals = np.concatenate([vals, vals[-2::-1]])
    if cfg.gamma_mask is not None:
        keep = np.array([bool(cfg.gamma_mask(g)) for g in gamma])
        vals = np.where(keep, vals, 0.0)
    n_orbit = orbits_per_year(sc)
    half = integrate.trapezoid(vals, np.radians(gamma))
    return AnnualResult(float(n_orbit / (2 * math.pi) * 2 * half), gamma, vals, n_orbit)
