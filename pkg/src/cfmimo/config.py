"""Configuration dataclasses and the YAML loader.

All physical quantities are in SI units (watts, hertz, seconds, meters).
Infinite resolutions and capacities are spelled ``.inf`` (or ``inf``) in
the YAML file and stored as ``math.inf``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

MAX_OBSERVATION_DIM = 4096

BOLTZMANN_DBM_HZ = -174.0


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def noise_power(bandwidth: float, noise_figure_db: float) -> float:
    """Thermal noise power W * N0 * NF in watts."""
    return bandwidth * dbm_to_watt(BOLTZMANN_DBM_HZ) * 10.0 ** (noise_figure_db / 10.0)


class ConfigError(ValueError):
    """Raised when a configuration value violates its contract."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


_DEFAULT_BANDWIDTH = 80e6


@dataclass
class SystemConfig:
    M: int = 4
    K: int = 8
    N_rows: int = 4
    N_cols: int = 2
    R: int = 2
    T: int = 8
    B_u: float = 4
    B_d: float = 4
    C_u: float = 16.0
    C_d: float = 16.0
    P_u: float = dbm_to_watt(23.0)
    P_d: float = dbm_to_watt(33.0)
    sigma2_u: float = noise_power(_DEFAULT_BANDWIDTH, 7.0)
    sigma2_d: float = noise_power(_DEFAULT_BANDWIDTH, 10.0)
    W: float = _DEFAULT_BANDWIDTH
    W_c: float = 180e3
    T_c: float = 10e-3
    area_side: float = 250.0
    seed: int = 0
    # channel model knobs
    L_min: int = 2
    L_max: int = 6
    path_decay: float = 1.0
    pl_exponent: float = 3.2
    pl0_db: float = 61.34
    d0: float = 1.0

    @property
    def N(self) -> int:
        return self.N_rows * self.N_cols

    def validate(self) -> "SystemConfig":
        for name in ("M", "K", "N_rows", "N_cols", "R", "T", "L_min", "L_max"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(name, f"must be a positive integer, got {value!r}")
        if self.L_max < self.L_min:
            raise ConfigError("L_max", "must be >= L_min")
        if self.K % self.M:
            raise ConfigError("K", f"M={self.M} must divide K={self.K} (K/M nearest-user combiner rule)")
        if self.T < self.K:
            raise ConfigError("T", f"training length T={self.T} must be >= K={self.K}")
        if self.R > self.N:
            raise ConfigError("R", f"R={self.R} exceeds N={self.N}")
        for name in ("B_u", "B_d"):
            value = getattr(self, name)
            if not (value == math.inf or (int(value) == value and value >= 1)):
                raise ConfigError(name, f"resolution must be a positive integer or inf, got {value!r}")
        for name in ("C_u", "C_d", "P_u", "P_d", "sigma2_u", "sigma2_d", "W", "W_c", "T_c",
                     "area_side", "path_decay", "pl_exponent", "d0"):
            value = getattr(self, name)
            if not value > 0 or math.isnan(value):
                raise ConfigError(name, f"must be strictly positive, got {value!r}")
        if self.W_c * self.T_c <= self.T:
            raise ConfigError("T", "coherence block W_c*T_c must exceed the training length")
        if self.R * self.T > MAX_OBSERVATION_DIM:
            raise ConfigError("T", f"observation dimension R*T={self.R * self.T} exceeds {MAX_OBSERVATION_DIM}")
        return self

    def require_zf(self) -> None:
        if self.K > self.M * self.R:
            raise ConfigError("K", f"ZF needs K <= M*R, got K={self.K}, M*R={self.M * self.R}")

    def with_resolution_capacity(self, B: float, C: float) -> "SystemConfig":
        """Symmetric uplink/downlink copy with B_u = B_d = B and C_u = C_d = C."""
        return dataclasses.replace(self, B_u=B, B_d=B, C_u=C, C_d=C)


@dataclass
class PowerParams:
    FOM: float = 1432.1e-15
    F_s: float = 1e9
    P_FH: float = 2e-9
    eta: float = 0.46
    P_LO: float = 22.5e-3
    P_LPF: float = 14e-3
    P_M: float = 0.3e-3
    P_PS: float = 3e-3

    def validate(self) -> "PowerParams":
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if not value > 0:
                raise ConfigError(f.name, f"must be strictly positive, got {value!r}")
        return self


EXPERIMENT_KINDS = ("nmse-sweep", "maxmin-cdf", "ee-sweep", "validate-aqnm")
PRECODERS = ("mrt", "zf", "both")


@dataclass
class ExperimentSpec:
    kind: str = "maxmin-cdf"
    C_grid: list = field(default_factory=lambda: [8.0, 16.0, 24.0, 32.0, math.inf])
    B_grid: list = field(default_factory=lambda: [1, 2, 3, 4, 5, 6, 7, 8, math.inf])
    n_drops: int = 50
    n_blocks: int = 20
    precoder: str = "both"
    out: str = "results.csv"
    seed: int = 0
    aqnm_samples: int = 1_000_000

    def validate(self) -> "ExperimentSpec":
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError("kind", f"unknown experiment kind {self.kind!r}")
        if self.precoder not in PRECODERS:
            raise ConfigError("precoder", f"must be one of {PRECODERS}, got {self.precoder!r}")
        if not self.C_grid:
            raise ConfigError("C_grid", "must be non-empty")
        if not self.B_grid:
            raise ConfigError("B_grid", "must be non-empty")
        for name in ("n_drops", "n_blocks", "aqnm_samples"):
            if getattr(self, name) < 1:
                raise ConfigError(name, "must be >= 1")
        self.C_grid = [_as_number("C_grid", c) for c in self.C_grid]
        self.B_grid = [_as_number("B_grid", b) for b in self.B_grid]
        return self

    @property
    def precoders(self) -> tuple:
        return ("mrt", "zf") if self.precoder == "both" else (self.precoder,)


def _as_number(name, value):
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "+inf", ".inf", "infinity"):
            return math.inf
        raise ConfigError(name, f"not a number: {value!r}")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(name, f"not a number: {value!r}")
    return value


def _build(cls, section: str, raw: dict | None):
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError(section, "section must be a mapping")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"{section}.{unknown[0]}", "unknown key")
    kwargs = {}
    for key, value in raw.items():
        if key.endswith("_grid"):
            kwargs[key] = list(value)
        elif isinstance(value, str) and key not in ("kind", "precoder", "out"):
            kwargs[key] = _as_number(f"{section}.{key}", value)
        else:
            kwargs[key] = value
    return cls(**kwargs)


def load_config(path=None):
    """Read a YAML config into (SystemConfig, PowerParams, ExperimentSpec).

    Missing sections or keys fall back to the desk-scale defaults; an empty
    file (or ``path=None``) yields the defaults unchanged.
    """
    raw = {}
    if path is not None:
        text = Path(path).read_text()
        try:
            raw = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError("<file>", f"YAML parse error: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("<file>", "top level must be a mapping")
    unknown = sorted(set(raw) - {"system", "power", "experiment"})
    if unknown:
        raise ConfigError(unknown[0], "unknown section")
    cfg = _build(SystemConfig, "system", raw.get("system")).validate()
    power = _build(PowerParams, "power", raw.get("power")).validate()
    spec = _build(ExperimentSpec, "experiment", raw.get("experiment")).validate()
    return cfg, power, spec


def config_hash(*objs) -> str:
    """64-bit hex digest of the canonical JSON form of the given dataclasses."""
    payload = [dataclasses.asdict(o) for o in objs]
    text = json.dumps(payload, sort_keys=True, default=repr)
    return hashlib.blake2b(text.encode(), digest_size=8).hexdigest()
