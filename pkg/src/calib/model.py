"""Domain types, configuration and polarization algebra.

Conventions shared by every module:

* angles are stored in degrees; theta = 0 transmits horizontal polarization
* times are seconds from the start of a run, rates are per second
* uncertainties are standard uncertainties (coverage factor k = 1)
"""

from __future__ import annotations

import dataclasses
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Union

import numpy as np

# 50 m of fiber, group index 1.468
SPEED_OF_LIGHT = 299_792_458.0
DEFAULT_FIBER_DELAY = 50.0 * 1.468 / SPEED_OF_LIGHT


class ConfigError(ValueError):
    """A configuration value violates its documented range."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class Polarization(enum.Enum):
    H = "H"
    V = "V"

    def flip(self) -> "Polarization":
        return Polarization.V if self is Polarization.H else Polarization.H

    @property
    def angle_deg(self) -> float:
        return 0.0 if self is Polarization.H else 90.0


def flip(p: Polarization) -> Polarization:
    return p.flip()


def linear_transmission(pol_angle_deg, theta_deg):
    """Malus-law transmission of linear polarization at ``pol_angle_deg``
    through an ideal polarizer set to ``theta_deg``. Works on arrays."""
    d = np.deg2rad(np.asarray(theta_deg, dtype=float) - pol_angle_deg)
    return np.cos(d) ** 2


def malus_transmission(p: Polarization, theta_deg: float) -> float:
    """Probability that a photon of polarization ``p`` passes the polarizer."""
    # reduce first so that theta and theta + 180 give identical floats
    theta = math.fmod(theta_deg, 180.0)
    c = math.cos(math.radians(theta))
    s = math.sin(math.radians(theta))
    return c * c if p is Polarization.H else s * s


@dataclass(frozen=True)
class LinearDrift:
    """Relative pump power ``1 + slope_per_s * t`` at lab time ``t``."""

    slope_per_s: float = 0.0

    def __call__(self, t: float) -> float:
        return 1.0 + self.slope_per_s * t


Drift = Callable[[float], float]


@dataclass(frozen=True)
class SourceModel:
    pair_rate_W0: float = 17_000.0
    background_rate_D2: float = 0.0
    dark_rate_D1: float = 0.0
    dark_rate_D2: float = 0.0
    pump_drift: Optional[Drift] = None

    def drift_factor(self, t: float) -> float:
        return 1.0 if self.pump_drift is None else float(self.pump_drift(t))


@dataclass(frozen=True)
class ChannelModel:
    alpha_idler_transmittance: float = 0.2
    fiber_delay: float = DEFAULT_FIBER_DELAY
    epsilon_signal_transmittance: float = 0.984
    fiber_misalignment_angle: float = 0.0


@dataclass(frozen=True)
class DetectorModel:
    eta: float = 0.5
    # no D1 dead time is quoted; 50 ns is a typical Si APD figure
    dead_time: float = 50e-9
    paralyzable: bool = False


@dataclass(frozen=True)
class PockelsModel:
    enabled: bool = True
    # centres the flat top on the default fiber delay: 150 + 5 + 180/2 = 245 ns
    electronic_delay: float = 150e-9
    rise_time: float = 5e-9
    flat_top: float = 180e-9
    fall_tail: float = 10e-6
    driver_dead_time: float = 10e-6
    rate_limit: float = 1e4
    inhibit_duration: float = 1.0

    @property
    def flip_window(self) -> tuple[float, float]:
        """Offsets, relative to a trigger, of the interval in which an
        arriving photon is rotated."""
        lo = self.electronic_delay + self.rise_time
        return lo, lo + self.flat_top


@dataclass(frozen=True)
class ExperimentConfig:
    source: SourceModel = field(default_factory=SourceModel)
    channel: ChannelModel = field(default_factory=ChannelModel)
    d1: DetectorModel = field(default_factory=DetectorModel)
    d2: DetectorModel = field(default_factory=DetectorModel)
    pockels: PockelsModel = field(default_factory=PockelsModel)
    coincidence_window: float = 5e-9

    def replace(self, **changes: Any) -> "ExperimentConfig":
        """Return a copy with nested fields replaced, e.g.
        ``cfg.replace(d1__eta=0.3, pockels__enabled=False)``."""
        nested: dict[str, dict[str, Any]] = {}
        top: dict[str, Any] = {}
        for key, value in changes.items():
            if "__" in key:
                part, name = key.split("__", 1)
                nested.setdefault(part, {})[name] = value
            else:
                top[key] = value
        for part, values in nested.items():
            top[part] = dataclasses.replace(getattr(self, part), **values)
        return dataclasses.replace(self, **top)


@dataclass(frozen=True)
class CountRecord:
    """Counts accumulated at one polarizer setting."""

    theta_deg: float
    duration: float
    n1: int
    n2: int
    nc: int
    pc_enabled: bool
    seed: int

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError(f"duration must be positive, got {self.duration}")
        for name in ("n1", "n2", "nc"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.nc > min(self.n1, self.n2):
            raise ValueError("coincidences exceed singles")


@dataclass(frozen=True)
class Quantity:
    """A value with its standard uncertainty."""

    value: float
    std_uncertainty: float = 0.0

    def __post_init__(self):
        u = self.std_uncertainty
        if not (math.isfinite(u) and u >= 0):
            raise ValueError(f"standard uncertainty must be finite and >= 0, got {u}")

    @property
    def relative(self) -> float:
        return self.std_uncertainty / abs(self.value) if self.value else math.inf

    def __str__(self) -> str:
        return f"{self.value:.6g} ± {self.std_uncertainty:.2g}"

    def to_dict(self) -> dict[str, float]:
        return {"value": self.value, "u": self.std_uncertainty}


# ---------------------------------------------------------------- validation

def _check(ok: bool, name: str, message: str) -> None:
    if not ok:
        raise ConfigError(name, message)


def _nonneg(value: float, name: str) -> None:
    _check(math.isfinite(value) and value >= 0, name, f"must be finite and >= 0, got {value!r}")


def _prob(value: float, name: str, open_low: bool = False) -> None:
    lo_ok = value > 0 if open_low else value >= 0
    bounds = "(0, 1]" if open_low else "[0, 1]"
    _check(math.isfinite(value) and lo_ok and value <= 1, name, f"must lie in {bounds}, got {value!r}")


def validate_config(cfg: ExperimentConfig) -> ExperimentConfig:
    """Return ``cfg`` unchanged if it is physically consistent.

    Raises
    ------
    ConfigError
        Naming the first offending field, e.g. ``d1.eta``.
    """
    s = cfg.source
    for name in ("pair_rate_W0", "background_rate_D2", "dark_rate_D1", "dark_rate_D2"):
        _nonneg(getattr(s, name), f"source.{name}")
    _check(s.pump_drift is None or callable(s.pump_drift), "source.pump_drift", "must be callable")

    c = cfg.channel
    _prob(c.alpha_idler_transmittance, "channel.alpha_idler_transmittance")
    _prob(c.epsilon_signal_transmittance, "channel.epsilon_signal_transmittance", open_low=True)
    _nonneg(c.fiber_delay, "channel.fiber_delay")
    _check(math.isfinite(c.fiber_misalignment_angle), "channel.fiber_misalignment_angle", "must be finite")

    for arm in ("d1", "d2"):
        d = getattr(cfg, arm)
        _prob(d.eta, f"{arm}.eta")
        _nonneg(d.dead_time, f"{arm}.dead_time")

    p = cfg.pockels
    for name in ("rise_time", "flat_top", "fall_tail", "driver_dead_time", "inhibit_duration"):
        _nonneg(getattr(p, name), f"pockels.{name}")
    _check(math.isfinite(p.electronic_delay), "pockels.electronic_delay", "must be finite")
    _check(p.rate_limit > 0, "pockels.rate_limit", f"must be > 0, got {p.rate_limit!r}")
    _check(
        p.driver_dead_time >= p.flat_top,
        "pockels.driver_dead_time",
        f"must be >= flat_top ({p.flat_top!r}), got {p.driver_dead_time!r}",
    )

    w = cfg.coincidence_window
    _check(math.isfinite(w) and w > 0, "coincidence_window", f"must be > 0, got {w!r}")
    return cfg


# ---------------------------------------------------------------- JSON

_SECTIONS = {
    "source": SourceModel,
    "channel": ChannelModel,
    "d1": DetectorModel,
    "d2": DetectorModel,
    "pockels": PockelsModel,
}


def _drift_to_json(drift: Optional[Drift]) -> Optional[dict]:
    if drift is None:
        return None
    if isinstance(drift, LinearDrift):
        return {"slope_per_s": drift.slope_per_s}
    raise TypeError("only LinearDrift pump drift can be serialized")


def config_to_dict(cfg: ExperimentConfig) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for name in _SECTIONS:
        section = dataclasses.asdict(getattr(cfg, name))
        if name == "source":
            section["pump_drift"] = _drift_to_json(cfg.source.pump_drift)
        out[name] = section
    out["coincidence_window"] = cfg.coincidence_window
    return out


def config_from_dict(data: dict[str, Any]) -> ExperimentConfig:
    """Build and validate a config; unknown keys raise ``ConfigError``."""
    if not isinstance(data, dict):
        raise ConfigError("<root>", "expected a JSON object")
    unknown = set(data) - set(_SECTIONS) - {"coincidence_window"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")

    kwargs: dict[str, Any] = {}
    for name, cls in _SECTIONS.items():
        if name not in data:
            continue
        section = dict(data[name])
        allowed = {f.name for f in dataclasses.fields(cls)}
        extra = set(section) - allowed
        if extra:
            raise ConfigError(f"{name}.{sorted(extra)[0]}", "unknown key")
        if name == "source" and section.get("pump_drift") is not None:
            drift = section["pump_drift"]
            if set(drift) != {"slope_per_s"}:
                raise ConfigError("source.pump_drift", "expected {\"slope_per_s\": <float>}")
            section["pump_drift"] = LinearDrift(float(drift["slope_per_s"]))
        kwargs[name] = cls(**section)
    if "coincidence_window" in data:
        kwargs["coincidence_window"] = float(data["coincidence_window"])
    return validate_config(ExperimentConfig(**kwargs))


def config_to_json(cfg: ExperimentConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2)


def config_from_json(text: str) -> ExperimentConfig:
    return config_from_dict(json.loads(text))


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    return config_from_json(Path(path).read_text())


def save_config(cfg: ExperimentConfig, path: Union[str, Path]) -> None:
    Path(path).write_text(config_to_json(cfg) + "\n")
