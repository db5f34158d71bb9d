"""Flat ``key = value`` configuration with dotted section keys.

Every key in :data:`SCHEMA` can come from a config file or from a CLI flag of
the same name (``--reservoir.size 500``). Keys left unset fall back to the
per-system defaults in :data:`SYSTEM_DEFAULTS`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Optional

from .errors import ConfigError
from .systems import canonical_kind


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(" ", "").split(",") if v)


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(canonical_kind(v) for v in text.replace(" ", "").split(",") if v)


def _optional_float(text: str) -> Optional[float]:
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


# key -> (parser, default); None defaults resolve per system
SCHEMA: dict[str, tuple[Any, Any]] = {
    "system": (_str_list, ("lorenz",)),
    "points": (_int_list, (700,)),
    "seed": (_int_list, (0, 1, 2, 3, 4)),
    "split": (float, 0.7),
    "workers": (int, 1),
    "noise.process_std": (_optional_float, None),
    "noise.measurement_std": (_optional_float, None),
    "system.dt": (_optional_float, None),
    "reservoir.size": (int, 300),
    "reservoir.leak_rate": (float, 1.0),
    "reservoir.spectral_radius": (float, 0.9),
    "reservoir.input_scale": (_optional_float, None),
    "reservoir.connectivity": (float, 0.1),
    "train.ridge": (float, 1e-4),
    "train.washout": (int, 100),
    "ukf.eta": (float, 1e-3),
    "ukf.kappa": (float, 0.0),
    "ukf.zeta": (float, 2.0),
    "ukf.p0": (float, 0.1),
    "ukf.q_var": (_optional_float, None),
    "ukf.r_var": (_optional_float, None),
    "ukf.mode": (str, "shared"),
}

SYSTEM_DEFAULTS = {
    "lorenz": {"noise.process_std": 0.1**0.5, "noise.measurement_std": 0.1, "reservoir.input_scale": 0.02},
    "rossler": {"noise.process_std": 0.1**0.5, "noise.measurement_std": 0.1, "reservoir.input_scale": 0.2},
    "mackey_glass": {"noise.process_std": 0.1, "noise.measurement_std": 0.005, "reservoir.input_scale": 1.0},
    "lissajous": {"noise.process_std": 0.1**0.5, "noise.measurement_std": 0.1, "reservoir.input_scale": 1.0},
}


def split_point(n: int, fraction: float) -> int:
    """floor(n * fraction), immune to products like 700 * 0.7 = 489.99999999999994."""
    return int(math.floor(round(n * fraction, 9)))


def format_value(value: Any) -> str:
    if value is None:
        return "auto"
    if isinstance(value, tuple):
        return ",".join(format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_value(key: str, text: str) -> Any:
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key {key!r}")
    parser = SCHEMA[key][0]
    try:
        return parser(text)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {text!r} ({exc})") from exc


def parse_config_text(text: str, source: str = "<config>") -> dict[str, Any]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            out[key] = parse_value(key, value)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    return out


def load_config(path) -> dict[str, Any]:
    path = Path(path)
    return parse_config_text(path.read_text(encoding="utf-8"), str(path))


def defaults() -> dict[str, Any]:
    return {k: d for k, (_, d) in SCHEMA.items()}


def dump_config(values: dict[str, Any]) -> str:
    return "".join(f"{k} = {format_value(values[k])}\n" for k in SCHEMA if k in values)


@dataclass(frozen=True)
class BenchConfig:
    """Fully resolved configuration of one benchmark cell (one system, one size)."""

    system: str
    points: int
    seeds: tuple[int, ...]
    split: float
    dt: Optional[float]
    process_std: float
    measurement_std: float
    reservoir_size: int
    leak_rate: float
    spectral_radius: float
    input_scale: float
    connectivity: float
    ridge: float
    washout: int
    eta: float
    kappa: float
    zeta: float
    p0: float
    q_var: Optional[float]
    r_var: Optional[float]
    mode: str
    workers: int = 1

    def __post_init__(self):
        if not 0.0 < self.split < 1.0:
            raise ConfigError(f"split must lie in (0, 1), got {self.split}")
        n_train = split_point(self.points, self.split)
        if n_train < self.washout + 2:
            raise ConfigError(f"training split of {n_train} points is too short for washout {self.washout}")
        if self.points - n_train < 1:
            raise ConfigError("test split is empty")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.mode not in ("shared", "per_sigma"):
            raise ConfigError(f"ukf.mode must be 'shared' or 'per_sigma', got {self.mode!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @property
    def regime(self) -> str:
        return str(self.points)

    def as_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def resolve(values: dict[str, Any]) -> list[BenchConfig]:
    """Expand merged key/values into one :class:`BenchConfig` per (system, points) cell."""
    merged = {**defaults(), **values}
    cells = []
    for system in merged["system"]:
        sysdef = SYSTEM_DEFAULTS[system]

        def pick(key):
            v = merged[key]
            return sysdef[key] if v is None and key in sysdef else v

        for points in merged["points"]:
            cells.append(
                BenchConfig(
                    system=system,
                    points=int(points),
                    seeds=tuple(merged["seed"]),
                    split=merged["split"],
                    dt=merged["system.dt"],
                    process_std=pick("noise.process_std"),
                    measurement_std=pick("noise.measurement_std"),
                    reservoir_size=merged["reservoir.size"],
                    leak_rate=merged["reservoir.leak_rate"],
                    spectral_radius=merged["reservoir.spectral_radius"],
                    input_scale=pick("reservoir.input_scale"),
                    connectivity=merged["reservoir.connectivity"],
                    ridge=merged["train.ridge"],
                    washout=merged["train.washout"],
                    eta=merged["ukf.eta"],
                    kappa=merged["ukf.kappa"],
                    zeta=merged["ukf.zeta"],
                    p0=merged["ukf.p0"],
                    q_var=merged["ukf.q_var"],
                    r_var=merged["ukf.r_var"],
                    mode=merged["ukf.mode"],
                    workers=merged["workers"],
                )
            )
    return cells
