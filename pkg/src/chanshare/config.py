"""Model parameters, validation and derived constants.

Densities and transmit power are kept in the units people write them in
(nodes/km^2, dBm); SI views are exposed as properties.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

M2_PER_KM2 = 1.0e6

FORMULA_MODES = ("paper", "corrected")


class ConfigError(ValueError):
    """Raised for invalid parameters; ``problems`` holds (field, message) pairs."""

    def __init__(self, problems):
        self.problems = list(problems)
        msg = "; ".join(f"{name}: {text}" for name, text in self.problems)
        super().__init__(msg)


def per_km2_to_per_m2(density):
    return density / M2_PER_KM2


def per_m2_to_per_km2(density):
    return density * M2_PER_KM2


def dbm_to_watts(dbm):
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts):
    return 10.0 * math.log10(watts) + 30.0


def sinr_threshold(slot_duration, bandwidth, packet_size):
    """SINR needed to push ``packet_size`` bits through one slot: 2^(T/(tau*B)) - 1."""
    if slot_duration <= 0 or bandwidth <= 0 or packet_size < 0:
        raise ValueError("slot_duration and bandwidth must be positive, packet_size >= 0")
    exponent = packet_size / (slot_duration * bandwidth)
    try:
        return math.expm1(exponent * math.log(2.0))
    except OverflowError:
        raise OverflowError(
            f"SINR threshold 2^{exponent:g} - 1 is not representable as a float"
        ) from None


@dataclass(frozen=True)
class DerivedConstants:
    area: float  # suppression disk area, m^2
    contention_mass: float  # mean number of APs per disk
    sinr_threshold: float


@dataclass(frozen=True)
class SystemConfig:
    """All scalar model parameters; defaults are the typical operating point.

    ``coverage_rs`` is the exclusion length used inside the coverage
    integral; ``None`` binds it to ``suppression_radius``.
    """

    user_density: float = 1000.0  # nodes/km^2
    ap_density: float = 100.0  # nodes/km^2
    request_rate: float = 0.03  # per user per slot
    suppression_radius: float = 250.0  # m
    slot_duration: float = 0.5  # s
    bandwidth: float = 10.0e6  # Hz
    packet_size: float = 10.0e6  # bits
    tx_power: float = 33.0  # dBm
    pathloss_exponent: float = 4.0
    noise_power: float = 0.0  # W
    voronoi_shape: float = 3.5
    formula_mode: str = "corrected"
    fading_enabled: bool = True
    region_side: float = 2000.0  # m
    torus: bool = True
    coverage_rs: float | None = None  # m

    derived: DerivedConstants | None = field(default=None, compare=False, repr=False)

    @property
    def lambda1(self):
        """User density in nodes/m^2."""
        return per_km2_to_per_m2(self.user_density)

    @property
    def lambda2(self):
        """AP density in nodes/m^2."""
        return per_km2_to_per_m2(self.ap_density)

    @property
    def tx_power_w(self):
        return dbm_to_watts(self.tx_power)

    @property
    def rs(self):
        return self.suppression_radius if self.coverage_rs is None else self.coverage_rs

    @property
    def area(self):
        return math.pi * self.suppression_radius**2

    @property
    def nu(self):
        return self.lambda2 * self.area

    @property
    def tbar(self):
        if self.derived is not None:
            return self.derived.sinr_threshold
        return sinr_threshold(self.slot_duration, self.bandwidth, self.packet_size)

    def replace(self, **changes):
        """Copy with ``changes`` applied, re-validated."""
        changes.setdefault("derived", None)
        return validate_config(dataclasses.replace(self, **changes))


def _check(cfg):
    problems = []

    def need(ok, name, text):
        if not ok:
            problems.append((name, text))

    for name in (
        "user_density", "ap_density", "request_rate", "suppression_radius",
        "slot_duration", "bandwidth", "packet_size", "tx_power",
        "pathloss_exponent", "noise_power", "voronoi_shape", "region_side",
    ):
        value = getattr(cfg, name)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append((name, f"must be a number, got {value!r}"))
        elif not math.isfinite(value):
            problems.append((name, f"must be finite, got {value!r}"))
    if problems:
        return problems

    need(cfg.user_density >= 0, "user_density", "must be >= 0")
    need(cfg.ap_density > 0, "ap_density", "must be > 0")
    need(0.0 <= cfg.request_rate <= 1.0, "request_rate", "must lie in [0, 1]")
    need(cfg.suppression_radius > 0, "suppression_radius", "must be > 0")
    need(cfg.slot_duration > 0, "slot_duration", "must be > 0")
    need(cfg.bandwidth > 0, "bandwidth", "must be > 0")
    need(cfg.packet_size > 0, "packet_size", "must be > 0")
    need(cfg.pathloss_exponent > 2, "pathloss_exponent", "pathloss_exponent must exceed 2")
    need(cfg.noise_power >= 0, "noise_power", "must be >= 0")
    need(cfg.voronoi_shape > 0, "voronoi_shape", "must be > 0")
    need(cfg.region_side > 0, "region_side", "must be > 0")
    need(cfg.formula_mode in FORMULA_MODES, "formula_mode",
         f"must be one of {', '.join(FORMULA_MODES)}")
    need(isinstance(cfg.fading_enabled, bool), "fading_enabled", "must be a boolean")
    need(isinstance(cfg.torus, bool), "torus", "must be a boolean")
    if cfg.coverage_rs is not None:
        ok = isinstance(cfg.coverage_rs, (int, float)) and math.isfinite(cfg.coverage_rs)
        need(ok and cfg.coverage_rs > 0, "coverage_rs", "must be > 0")
    return problems


def validate_config(raw: SystemConfig) -> SystemConfig:
    """Check every invariant and return a copy with derived constants attached."""
    problems = _check(raw)
    if problems:
        raise ConfigError(problems)
    try:
        tbar = sinr_threshold(raw.slot_duration, raw.bandwidth, raw.packet_size)
    except OverflowError as exc:
        raise ConfigError([("packet_size", str(exc))]) from None
    area = math.pi * raw.suppression_radius**2
    nu = per_km2_to_per_m2(raw.ap_density) * area
    if not (math.isfinite(nu) and nu > 0):
        raise ConfigError([("ap_density", f"contention mass {nu!r} is not finite and positive")])
    derived = DerivedConstants(area=area, contention_mass=nu, sinr_threshold=tbar)
    return dataclasses.replace(raw, derived=derived)


# ---------------------------------------------------------------- file I/O

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _field_kinds():
    kinds = {}
    for f in dataclasses.fields(SystemConfig):
        if f.name == "derived":
            continue
        default = f.default
        if f.name == "coverage_rs":
            kinds[f.name] = "optional_float"
        elif isinstance(default, bool):
            kinds[f.name] = "bool"
        elif isinstance(default, str):
            kinds[f.name] = "str"
        else:
            kinds[f.name] = "float"
    return kinds


def _parse_value(kind, text):
    if kind == "bool":
        low = text.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if kind == "str":
        return text
    if kind == "optional_float" and text.lower() in {"none", ""}:
        return None
    return float(text)


def parse_config(text: str, source="<string>") -> SystemConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment; unknown keys fail."""
    kinds = _field_kinds()
    values = {}
    problems = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append((f"{source}:{lineno}", f"expected key=value, got {line!r}"))
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in kinds:
            problems.append((key, f"unknown key ({source}:{lineno})"))
            continue
        if key in values:
            problems.append((key, f"duplicate key ({source}:{lineno})"))
            continue
        try:
            values[key] = _parse_value(kinds[key], value)
        except ValueError as exc:
            problems.append((key, str(exc)))
    if problems:
        raise ConfigError(problems)
    return validate_config(SystemConfig(**values))


def load_config(path) -> SystemConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([("config", f"cannot read {path}: {exc.strerror}")]) from None
    return parse_config(text, source=str(path))


def format_config(cfg: SystemConfig) -> str:
    """Inverse of :func:`parse_config`."""
    lines = []
    for name in _field_kinds():
        value = getattr(cfg, name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif value is None:
            value = "none"
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{name} = {value}")
    return "\n".join(lines) + "\n"


DEFAULTS = validate_config(SystemConfig())
