"""Scenario files: sectioned key = value text with Table-1 reference defaults.

Every key is optional; a missing key takes the reference value and is logged
at INFO level. Unknown sections or keys are errors. Relative data paths are
resolved against the scenario file's directory, then ``$SATQKD_DATA_DIR``.
"""
from __future__ import annotations

import configparser
import hashlib
import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from .channel import AtmosphereTable, OpticalSystem, load_atmosphere
from .counts import DetectorModel, RadianceTable, SourceModel
from .finitekey import SecurityConfig
from .geometry import OverpassGeometry

log = logging.getLogger(__name__)

DATA_DIR_ENV = "SATQKD_DATA_DIR"
THRESHOLD_MODELS = ("weighted", "max")


class ConfigError(ValueError):
    """Scenario file could not be parsed or failed validation."""


# key -> (section, default, kind). Defaults reproduce the reference system.
KEYS: dict[str, tuple[str, object, str]] = {
    "altitude_m": ("geometry", 500e3, "float"),
    "ogs_separation_m": ("geometry", 500e3, "float"),
    "phi_deg": ("geometry", 0.0, "float"),
    "xi_deg": ("geometry", 0.0, "float"),
    "theta_min_deg": ("geometry", 10.0, "float"),
    "bin_width_s": ("geometry", 1.0, "float"),
    "elevation_model": ("geometry", "horizon", "str"),
    "wavelength_a_nm": ("channel", 785.0, "float"),
    "wavelength_b_nm": ("channel", 785.0, "float"),
    "tx_diameter_m": ("channel", 0.10, "float"),
    "rx_diameter_m": ("channel", 0.70, "float"),
    "beam_waist_m": ("channel", None, "optfloat"),
    "intrinsic_loss_db": ("channel", 12.0, "float"),
    "aperture_convention": ("channel", "radius", "str"),
    "atmosphere_table_path": ("channel", "", "path"),
    "atmosphere_table_path_b": ("channel", "", "path"),
    "pair_rate_hz": ("counts", 2e8, "float"),
    "qber_intrinsic": ("counts", 0.001, "float"),
    "p_dark": ("counts", 5e-7, "float"),
    "p_afterpulse": ("counts", 1e-3, "float"),
    "coincidence_window_s": ("counts", 5e-9, "float"),
    "fov_sr": ("counts", 5e-8, "float"),
    "filter_bandwidth_nm": ("counts", 10.0, "float"),
    "background_scale": ("counts", 1.0, "float"),
    "radiance_table_path_a": ("counts", "", "path"),
    "radiance_table_path_b": ("counts", "", "path"),
    "security_s": ("finitekey", 6.0, "float"),
    "ec_efficiency": ("finitekey", 1.19, "float"),
    "grid_n": ("finitekey", 64, "int"),
    "n_thresholds": ("finitekey", 32, "int"),
    "threshold_model": ("finitekey", "weighted", "str"),
}
SECTIONS = ("geometry", "channel", "counts", "finitekey")


@dataclass(frozen=True)
class Scenario:
    geometry: OverpassGeometry = field(default_factory=OverpassGeometry)
    optics_a: OpticalSystem = field(default_factory=OpticalSystem)
    optics_b: OpticalSystem = field(default_factory=OpticalSystem)
    detector: DetectorModel = field(default_factory=DetectorModel)
    source: SourceModel = field(default_factory=SourceModel)
    security: SecurityConfig = field(default_factory=SecurityConfig)
    n_thresholds: int = 32
    threshold_model: str = "weighted"
    atmosphere_path_a: str = ""
    atmosphere_path_b: str = ""
    radiance_path_a: str = ""
    radiance_path_b: str = ""

    def __post_init__(self) -> None:
        if self.threshold_model not in THRESHOLD_MODELS:
            raise ValueError(f"threshold_model must be one of {THRESHOLD_MODELS}")
        if self.n_thresholds < 1:
            raise ValueError(f"n_thresholds must be >= 1, got {self.n_thresholds}")

    def with_values(self, **values) -> "Scenario":
        """Copy with flat config keys overridden, e.g. ``ogs_separation_m=1e6``."""
        flat = to_flat(self)
        unknown = set(values) - set(KEYS)
        if unknown:
            raise ConfigError(f"unknown keys: {sorted(unknown)}")
        flat.update(values)
        return from_flat(flat)

    def atmosphere(self) -> tuple[AtmosphereTable, AtmosphereTable]:
        a = _atmosphere(self.atmosphere_path_a, self.optics_a)
        b = a if self.atmosphere_path_b in ("", self.atmosphere_path_a) and \
            self.optics_b.wavelength == self.optics_a.wavelength else \
            _atmosphere(self.atmosphere_path_b or self.atmosphere_path_a, self.optics_b)
        return a, b

    def radiance(self) -> tuple[RadianceTable, RadianceTable]:
        return (RadianceTable.load(self.radiance_path_a or None),
                RadianceTable.load(self.radiance_path_b or None))

    def digest(self) -> str:
        text = emit_scenario(self)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _atmosphere(path: str, optics: OpticalSystem) -> AtmosphereTable:
    return load_atmosphere(path or None, optics.wavelength * 1e9)


def default_data_dir() -> Path | None:
    env = os.environ.get(DATA_DIR_ENV)
    return Path(env) if env else None


def resolve_path(value: str, base: Path | None) -> str:
    if not value:
        return ""
    p = Path(value).expanduser()
    if p.is_absolute():
        candidates = [p]
    else:
        candidates = [c / p for c in (base, default_data_dir(), Path.cwd()) if c is not None]
    for c in candidates:
        if c.is_file():
            return str(c.resolve())
    raise ConfigError(f"data file not found: {value}")


def from_flat(v: dict) -> Scenario:
    """Build and validate a scenario from flat config keys; collects every violation."""
    errors = []

    def build(cls, **kw):
        try:
            obj = object.__new__(cls)
            for k, val in kw.items():
                object.__setattr__(obj, k, val)
            errors.extend(obj.violations())
            return obj
        except Exception as exc:  # pragma: no cover - defensive
            errors.append(str(exc))
            return None

    if v["aperture_convention"] not in ("radius", "diameter"):
        errors.append(f"aperture_convention must be 'radius' or 'diameter', "
                      f"got {v['aperture_convention']!r}")
    geom = build(OverpassGeometry, h=v["altitude_m"], d=v["ogs_separation_m"], phi=v["phi_deg"],
                 xi=v["xi_deg"], theta_min=v["theta_min_deg"],
                 earth_radius=OverpassGeometry.earth_radius, mu_earth=OverpassGeometry.mu_earth,
                 bin_width=v["bin_width_s"], elevation_model=v["elevation_model"])
    optics = [
        build(OpticalSystem, wavelength=v[key] * 1e-9, tx_diameter=v["tx_diameter_m"],
              rx_diameter=v["rx_diameter_m"], beam_waist=v["beam_waist_m"],
              intrinsic_loss_db=v["intrinsic_loss_db"],
              aperture_as_radius=v["aperture_convention"] == "radius")
        for key in ("wavelength_a_nm", "wavelength_b_nm")
    ]
    det = build(DetectorModel, p_dc=v["p_dark"], p_ap=v["p_afterpulse"],
                coincidence_window=v["coincidence_window_s"], fov=v["fov_sr"],
                filter_bandwidth=v["filter_bandwidth_nm"], background_scale=v["background_scale"])
    src = build(SourceModel, pair_rate=v["pair_rate_hz"], qber_intrinsic=v["qber_intrinsic"],
                squeezing=0.0)
    sec = build(SecurityConfig, s=v["security_s"], ec_efficiency=v["ec_efficiency"],
                grid_n=v["grid_n"], beta_min=SecurityConfig.beta_min)
    if v["threshold_model"] not in THRESHOLD_MODELS:
        errors.append(f"threshold_model must be one of {THRESHOLD_MODELS}, "
                      f"got {v['threshold_model']!r}")
    if not v["n_thresholds"] >= 1:
        errors.append(f"n_thresholds must be >= 1, got {v['n_thresholds']}")
    if errors:
        raise ConfigError("invalid scenario:\n  " + "\n  ".join(errors))
    return Scenario(
        OverpassGeometry(geom.h, geom.d, geom.phi, geom.xi, geom.theta_min, bin_width=geom.bin_width,
                         elevation_model=geom.elevation_model),
        replace(optics[0]), replace(optics[1]), replace(det), replace(src), replace(sec),
        v["n_thresholds"], v["threshold_model"],
        v["atmosphere_table_path"], v["atmosphere_table_path_b"],
        v["radiance_table_path_a"], v["radiance_table_path_b"],
    )


def to_flat(sc: Scenario) -> dict:
    g, o, d, s, k = sc.geometry, sc.optics_a, sc.detector, sc.source, sc.security
    return {
        "altitude_m": g.h, "ogs_separation_m": g.d, "phi_deg": g.phi, "xi_deg": g.xi,
        "theta_min_deg": g.theta_min, "bin_width_s": g.bin_width,
        "elevation_model": g.elevation_model,
        "wavelength_a_nm": o.wavelength * 1e9, "wavelength_b_nm": sc.optics_b.wavelength * 1e9,
        "tx_diameter_m": o.tx_diameter, "rx_diameter_m": o.rx_diameter,
        "beam_waist_m": o.beam_waist, "intrinsic_loss_db": o.intrinsic_loss_db,
        "aperture_convention": "radius" if o.aperture_as_radius else "diameter",
        "atmosphere_table_path": sc.atmosphere_path_a,
        "atmosphere_table_path_b": sc.atmosphere_path_b,
        "pair_rate_hz": s.pair_rate, "qber_intrinsic": s.qber_intrinsic,
        "p_dark": d.p_dc, "p_afterpulse": d.p_ap, "coincidence_window_s": d.coincidence_window,
        "fov_sr": d.fov, "filter_bandwidth_nm": d.filter_bandwidth,
        "background_scale": d.background_scale,
        "radiance_table_path_a": sc.radiance_path_a, "radiance_table_path_b": sc.radiance_path_b,
        "security_s": k.s, "ec_efficiency": k.ec_efficiency, "grid_n": k.grid_n,
        "n_thresholds": sc.n_thresholds, "threshold_model": sc.threshold_model,
    }


def _convert(key: str, raw: str, kind: str, base: Path | None):
    try:
        if kind == "float":
            return float(raw)
        if kind == "int":
            return int(raw)
        if kind == "optfloat":
            return None if raw.strip().lower() in ("", "none", "auto") else float(raw)
        if kind == "path":
            return resolve_path(raw.strip(), base)
        return raw.strip()
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{key}: cannot read {raw!r} as {kind}") from exc


# Optional study sections: comma-separated float lists for sweep axes,
# scalars for the annual integral. They never change the scenario itself.
STUDY_KEYS: dict[str, dict[str, str]] = {
    "sweep": {"altitude_m": "floats", "ogs_separation_m": "floats", "phi_deg": "floats",
              "xi_deg": "floats", "delta_m": "floats", "background_scale": "floats"},
    "annual": {"n_gamma": "int", "symmetric": "bool"},
}


def parse_float_list(raw: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(x) for x in raw.replace(";", ",").split(",") if x.strip())
    except ValueError as exc:
        raise ConfigError(f"cannot read {raw!r} as a list of numbers") from exc
    if not vals:
        raise ConfigError("empty list")
    return vals


def _study_value(raw: str, kind: str):
    if kind == "floats":
        return parse_float_list(raw)
    if kind == "int":
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"cannot read {raw!r} as int") from exc
    low = raw.strip().lower()
    if low not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
        raise ConfigError(f"cannot read {raw!r} as a boolean")
    return low in ("true", "yes", "1", "on")


def parse_study_text(text: str, base: Path | None = None,
                     source: str = "<string>") -> tuple[Scenario, dict]:
    """Parse a scenario plus optional ``[sweep]``/``[annual]`` sections.

    Returns the scenario and ``{"sweep": {...}, "annual": {...}}``.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    values = {}
    study: dict = {name: {} for name in STUDY_KEYS}
    problems = []
    for section in cp.sections():
        if section in STUDY_KEYS:
            for key, raw in cp.items(section):
                kind = STUDY_KEYS[section].get(key)
                if kind is None:
                    problems.append(f"[{section}] {key}: unknown key")
                    continue
                try:
                    study[section][key] = _study_value(raw, kind)
                except ConfigError as exc:
                    problems.append(f"[{section}] {key}: {exc}")
            continue
        if section not in SECTIONS:
            problems.append(f"[{section}]: unknown section")
            continue
        for key, raw in cp.items(section):
            spec = KEYS.get(key)
            if spec is None or spec[0] != section:
                problems.append(f"[{section}] {key}: unknown key")
                continue
            try:
                values[key] = _convert(key, raw, spec[2], base)
            except ConfigError as exc:
                problems.append(f"[{section}] {exc}")
    if problems:
        raise ConfigError(f"{source}:\n  " + "\n  ".join(problems))
    flat = {}
    for key, (section, default, _) in KEYS.items():
        if key in values:
            flat[key] = values[key]
        else:
            log.info("%s: [%s] %s not set, using %r", source, section, key, default)
            flat[key] = default
    return from_flat(flat), study


def parse_text(text: str, base: Path | None = None, source: str = "<string>") -> Scenario:
    return parse_study_text(text, base, source)[0]


def parse_study(path=None) -> tuple[Scenario, dict]:
    """Read a scenario file with its study sections; ``None`` gives the reference scenario."""
    if path is None:
        return parse_study_text("")
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_study_text(text, path.parent, str(path))


def parse_scenario(path=None) -> Scenario:
    """Read a scenario file; ``None`` returns the reference scenario."""
    return parse_study(path)[0]


def apply_overrides(sc: Scenario, items, base: Path | None = None) -> Scenario:
    """Apply ``key=value`` strings using the same conversions as the file reader."""
    values = {}
    for item in items:
        key, sep, raw = item.partition("=")
        key = key.strip()
        if not sep or key not in KEYS:
            raise ConfigError(f"bad override {item!r}: expected known_key=value")
        values[key] = _convert(key, raw, KEYS[key][2], base)
    return sc.with_values(**values) if values else sc


def emit_scenario(sc: Scenario) -> str:
    flat = to_flat(sc)
    lines = []
    for section in SECTIONS:
        lines.append(f"[{section}]")
        for key, (sec, _, _) in KEYS.items():
            if sec == section:
                val = flat[key]
                if val is None:
                    val = "auto"
                lines.append(f"{key} = {val!r}" if not isinstance(val, str) else f"{key} = {val}")
        lines.append("")
    return "\n".join(lines)
