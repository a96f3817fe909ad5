"""Experiment parameters, profile containers and the config-file format.

The config file is flat ``key = value`` text. Keys are the field names of
:class:`ExperimentConfig` in SI units. A length, time or angle key may instead
carry one of the suffixes ``_nm``, ``_um``, ``_mm``, ``_ns``, ``_ps`` or
``_mrad``, e.g. ``lambda2_nm = 780``. Lines starting with ``#`` or ``;`` are
comments. Unspecified keys take the defaults below.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "CoincidenceProfile",
    "paper_defaults",
    "load_config",
    "parse_config",
    "dump_config",
    "save_config",
    "config_fingerprint",
    "corr_sigma_from_divergence",
    "scan_positions",
]


class ConfigError(ValueError):
    """Raised when a config fails to parse or violates an invariant."""


_UNIT_SUFFIXES = {
    "_nm": 1e-9,
    "_um": 1e-6,
    "_mm": 1e-3,
    "_ns": 1e-9,
    "_ps": 1e-12,
    "_mrad": 1e-3,
}

# Fields that are descriptive only; nothing in the package reads them.
METADATA_FIELDS = (
    "detuning_hz",
    "cell_temperature_c",
    "pump_power_1",
    "pump_power_2",
    "pump_angle_deg",
    "emission_angle_deg",
)


@dataclass(frozen=True)
class ExperimentConfig:
    # wavelengths
    lambda1: float = 1529.4e-9
    lambda2: float = 780e-9
    # imaging geometry
    focal_length_f: float = 0.220
    slit_width_a: float = 0.2e-3
    slit_separation_d: float = 0.5e-3
    bucket_width: float = 1.0e-3
    point_width: float = 0.2e-3
    z_source_slit: float = 0.25
    z_slit_bucket: float = 1.0
    # source
    divergence_theta: float = 3.2e-3
    corr_sigma: float = math.inf
    pump_waist_1: float = 0.6e-3
    pump_waist_2: float = 0.35e-3
    # temporal / detection chain
    tau_c: float = 1.5e-9
    fiber_delay: float = 1000e-9
    eta_det1: float = 0.08
    eta_det2: float = 0.5
    eta_coupling1: float = 0.5
    eta_coupling2: float = 0.9
    pair_rate: float = 2e4
    bg_rate1: float = 1e3
    bg_rate2: float = 1e3
    gate_width: float = 10e-9
    gated: bool = False
    gate_delay: Optional[float] = None
    # detector-2 scan
    scan_min: float = -1500e-6
    scan_max: float = 1500e-6
    scan_step: float = 50e-6
    scan_acq_time: float = 10.0
    scan_peak_rate: float = 20.0
    scan_singles_rate: float = 2000.0
    # numerics
    grid_samples: int = 4096
    grid_extent: float = 20e-3
    n_source_modes: int = 15
    n_bucket_points: int = 11
    # metadata
    detuning_hz: float = 2.5e9
    cell_temperature_c: float = 110.0
    pump_power_1: float = 28e-3
    pump_power_2: float = 50e-6
    pump_angle_deg: float = 1.27
    emission_angle_deg: float = 2.26

    def __post_init__(self):
        _validate(self)

    @property
    def eta1(self) -> float:
        """Composite detection efficiency of the signal-1 (slit) arm."""
        return self.eta_det1 * self.eta_coupling1

    @property
    def eta2(self) -> float:
        return self.eta_det2 * self.eta_coupling2

    @property
    def gate_electronic_delay(self) -> float:
        # gate centred on the expected signal-1 arrival unless set explicitly
        if self.gate_delay is not None:
            return self.gate_delay
        return self.fiber_delay - 0.5 * self.gate_width

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def _validate(cfg: ExperimentConfig) -> None:
    strictly_positive = (
        "lambda1", "lambda2", "focal_length_f", "slit_width_a",
        "slit_separation_d", "bucket_width", "z_source_slit", "z_slit_bucket",
        "corr_sigma", "pump_waist_1", "pump_waist_2", "tau_c", "fiber_delay",
        "gate_width", "scan_step", "scan_acq_time", "grid_extent",
    )
    non_negative = (
        "point_width", "divergence_theta", "pair_rate", "bg_rate1",
        "bg_rate2", "scan_peak_rate", "scan_singles_rate",
    )
    for name in strictly_positive:
        value = getattr(cfg, name)
        if not value > 0 or math.isnan(value):
            raise ConfigError(f"{name} > 0 violated (got {value!r})")
    for name in non_negative:
        value = getattr(cfg, name)
        if not value >= 0 or math.isinf(value):
            raise ConfigError(f"{name} >= 0 violated (got {value!r})")
    for name in ("eta_det1", "eta_det2", "eta_coupling1", "eta_coupling2"):
        value = getattr(cfg, name)
        if not 0.0 <= value <= 1.0:
            raise ConfigError(f"0 <= {name} <= 1 violated (got {value!r})")
    if not cfg.slit_separation_d > cfg.slit_width_a:
        raise ConfigError(
            "d > a violated: slit_separation_d "
            f"({cfg.slit_separation_d!r}) must exceed slit_width_a ({cfg.slit_width_a!r})"
        )
    if not cfg.scan_min < cfg.scan_max:
        raise ConfigError("scan_min < scan_max violated")
    if cfg.gate_delay is not None and cfg.gate_delay < 0:
        raise ConfigError("gate_delay >= 0 violated")
    n = cfg.grid_samples
    if n < 64 or n & (n - 1):
        raise ConfigError(f"grid_samples must be a power of two >= 64 (got {n})")
    if cfg.n_bucket_points < 1:
        raise ConfigError("n_bucket_points >= 1 violated")
    if cfg.n_source_modes < 1:
        raise ConfigError("n_source_modes >= 1 violated")


def paper_defaults() -> ExperimentConfig:
    """The apparatus of the two-color ghost interference experiment."""
    return ExperimentConfig()


def corr_sigma_from_divergence(cfg: ExperimentConfig) -> float:
    """Fourier-limited correlation length ``lambda1 / (2 pi theta)``.

    Kept as a helper only: used as ``corr_sigma`` it decorrelates the two
    slits completely (see README, "Source correlation").
    """
    if cfg.divergence_theta == 0:
        return math.inf
    return cfg.lambda1 / (2 * math.pi * cfg.divergence_theta)


def scan_positions(cfg: ExperimentConfig) -> np.ndarray:
    n = int(math.floor((cfg.scan_max - cfg.scan_min) / cfg.scan_step + 1e-9)) + 1
    # snap to 1 pm so positions print cleanly in micrometres
    return np.round(cfg.scan_min + cfg.scan_step * np.arange(n), 12)


# --------------------------------------------------------------------------
# config file I/O

_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _coerce(name: str, raw: str):
    kind = _FIELDS[name].type
    text = raw.strip()
    if kind == "bool":
        lowered = text.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: cannot parse {raw!r} as a boolean")
    if kind == "int":
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"{name}: cannot parse {raw!r} as an integer") from None
    if kind == "Optional[float]" and text.lower() in ("", "none"):
        return None
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r} as a number") from None


def parse_config(text: str) -> ExperimentConfig:
    """Parse config text; see the module docstring for the format."""
    parser = configparser.ConfigParser(
        comment_prefixes=("#", ";"), inline_comment_prefixes=("#",),
        interpolation=None,
    )
    parser.optionxform = str
    try:
        parser.read_string("[ghostlab]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    if parser.sections() != ["ghostlab"]:
        raise ConfigError("malformed config: section headers are not allowed")
    values = {}
    for key, raw in parser["ghostlab"].items():
        name, scale = key, 1.0
        if name not in _FIELDS:
            for suffix, factor in _UNIT_SUFFIXES.items():
                if key.endswith(suffix) and key[: -len(suffix)] in _FIELDS:
                    name, scale = key[: -len(suffix)], factor
                    break
            else:
                raise ConfigError(f"unknown config key {key!r}")
        if name in values:
            raise ConfigError(f"config key {name!r} given twice")
        value = _coerce(name, raw)
        if scale != 1.0:
            if not isinstance(value, float):
                raise ConfigError(f"unit suffix not allowed on {name!r}")
            value *= scale
        values[name] = value
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def dump_config(cfg: ExperimentConfig) -> str:
    """Serialize every field; ``parse_config(dump_config(c)) == c``."""
    lines = []
    for name in _FIELDS:
        value = getattr(cfg, name)
        if value is None:
            text = "none"
        elif isinstance(value, bool):
            text = "true" if value else "false"
        else:
            text = repr(value)
        lines.append(f"{name} = {text}")
    return "\n".join(lines) + "\n"


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(dump_config(cfg))


def config_fingerprint(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()[:16]


# --------------------------------------------------------------------------
# profiles


@dataclass(frozen=True)
class CoincidenceProfile:
    """Coincidences versus detector-2 transverse position.

    ``positions`` are in meters. ``coincidences`` hold either raw counts or a
    normalized rate; ``singles1``/``singles2`` are optional and follow the
    same convention.
    """

    positions: np.ndarray
    coincidences: np.ndarray
    singles1: Optional[np.ndarray] = None
    singles2: Optional[np.ndarray] = None
    acquisition_per_point: Optional[float] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        object.__setattr__(self, "positions", pos)
        if pos.ndim != 1 or pos.size == 0:
            raise ValueError("positions must be a non-empty 1D array")
        if np.any(np.diff(pos) <= 0):
            raise ValueError("positions must be strictly increasing")
        for name in ("coincidences", "singles1", "singles2"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.asarray(arr, dtype=float)
            object.__setattr__(self, name, arr)
            if arr.shape != pos.shape:
                raise ValueError(f"{name} length differs from positions")
            if np.any(arr < 0):
                raise ValueError(f"{name} must be non-negative")

    def __len__(self):
        return self.positions.size
