"""Ground-truth generators: Lorenz, Rossler, Mackey-Glass and a Lissajous path.

All systems are integrated with forward Euler. Process noise enters the
right-hand side, ``dx/dt = f(x) + eps`` with ``eps ~ N(0, std^2)`` drawn
independently per step and dimension, so one step adds ``dt * eps`` and the
per-step state noise variance is ``(dt * std)^2`` (see :func:`step_noise_variance`).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, NumericalError

KINDS = ("lorenz", "rossler", "mackey_glass", "lissajous")

DEFAULT_PARAMS = {
    "lorenz": {"sigma": 10.0, "rho": 28.0, "beta": 8.0 / 3.0},
    "rossler": {"a": 0.2, "b": 0.2, "c": 5.7},
    "mackey_glass": {"beta": 0.2, "gamma": 0.1, "tau": 17.0, "n": 10.0},
    "lissajous": {"amplitude": 1.0},
}
DEFAULT_DT = {"lorenz": 0.01, "rossler": 0.01, "mackey_glass": 1.0, "lissajous": 0.01}
DEFAULT_INITIAL = {
    "lorenz": (1.0, 1.0, 1.0),
    "rossler": (1.0, 1.0, 1.0),
    "mackey_glass": (1.2,),
    "lissajous": (0.0, 0.0),
}
DIMENSION = {"lorenz": 3, "rossler": 3, "mackey_glass": 1, "lissajous": 2}


def canonical_kind(kind: str) -> str:
    k = kind.strip().lower().replace("-", "_").replace("ö", "o")
    aliases = {"mackeyglass": "mackey_glass", "mg": "mackey_glass"}
    k = aliases.get(k, k)
    if k not in KINDS:
        raise ConfigError(f"unknown system {kind!r}; expected one of {', '.join(KINDS)}")
    return k


@dataclass(frozen=True)
class SystemSpec:
    kind: str
    params: dict = field(default_factory=dict)
    dt: Optional[float] = None
    process_noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        kind = canonical_kind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "params", {**DEFAULT_PARAMS[kind], **dict(self.params)})
        if self.dt is None:
            object.__setattr__(self, "dt", DEFAULT_DT[kind])
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if np.any(np.asarray(self.process_noise_std) < 0):
            raise ConfigError("process_noise_std must be >= 0")
        if kind == "mackey_glass":
            if not self.params["tau"] > 0:
                raise ConfigError("Mackey-Glass tau must be positive")
            if self.delay_steps < 1:
                raise ConfigError(f"tau/dt must round to at least 1, got {self.params['tau'] / self.dt}")

    @property
    def dim(self) -> int:
        return DIMENSION[self.kind]

    @property
    def delay_steps(self) -> int:
        return int(round(self.params["tau"] / self.dt))


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim == 1:
            self.states = self.states[:, None]
        if len(self.times) != len(self.states):
            raise ValueError(f"{len(self.times)} times vs {len(self.states)} states")

    def __len__(self) -> int:
        return len(self.states)

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def __getitem__(self, sl: slice) -> "Trajectory":
        return Trajectory(self.times[sl], self.states[sl])


def lorenz_rhs(s, sigma=10.0, rho=28.0, beta=8.0 / 3.0) -> np.ndarray:
    x, y, z = s
    return np.array([sigma * (y - x), x * (rho - z) - y, x * y - beta * z])


def rossler_rhs(s, a=0.2, b=0.2, c=5.7) -> np.ndarray:
    x, y, z = s
    return np.array([-(y + z), x + a * y, b + z * (x - c)])


def lorenz_step(s, params: Optional[dict] = None, dt: float = 0.01) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    return s + dt * lorenz_rhs(s, **(params or DEFAULT_PARAMS["lorenz"]))


def rossler_step(s, params: Optional[dict] = None, dt: float = 0.01) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    return s + dt * rossler_rhs(s, **(params or DEFAULT_PARAMS["rossler"]))


def mackey_glass_rhs(x: float, x_delayed: float, beta=0.2, gamma=0.1, n=10.0, tau=None) -> float:
    return beta * x_delayed / (1.0 + x_delayed**n) - gamma * x


def mackey_glass_step(history: Sequence[float], params: Optional[dict] = None, dt: float = 1.0) -> float:
    """One Euler step; ``history[-1]`` is x(t) and ``history[-1 - tau/dt]`` is x(t - tau)."""
    p = {**DEFAULT_PARAMS["mackey_glass"], **(params or {})}
    lag = int(round(p["tau"] / dt))
    if len(history) < lag + 1:
        raise ValueError(f"history needs at least {lag + 1} values (tau/dt = {lag}), got {len(history)}")
    x = float(history[-1])
    return x + dt * mackey_glass_rhs(x, float(history[-1 - lag]), **p)


def lissajous(t, amplitude: float = 1.0) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return np.stack([amplitude * np.sin(t), amplitude * np.sin(2.0 * t)], axis=-1)


def generate(spec: SystemSpec, n_points: int, initial=None) -> Trajectory:
    """Simulate ``n_points`` samples (the initial state included) of ``spec``.

    For Mackey-Glass ``initial`` may be a scalar (constant history) or a
    history array of length ``delay_steps + 1``. For Lissajous the noise
    accumulates as a drift on top of the closed-form reference path.
    """
    if n_points < 0:
        raise ConfigError("n_points must be >= 0")
    rng = np.random.default_rng(spec.seed)
    dt = spec.dt
    d = spec.dim
    std = np.broadcast_to(np.asarray(spec.process_noise_std, dtype=float), (d,))
    times = np.arange(n_points) * dt
    states = np.empty((n_points, d))
    if n_points == 0:
        return Trajectory(times, states)
    noise = rng.standard_normal((n_points, d)) * std * dt

    if spec.kind == "lissajous":
        amp = spec.params["amplitude"]
        offset = np.asarray(DEFAULT_INITIAL["lissajous"] if initial is None else initial, dtype=float)
        drift = offset + np.vstack([np.zeros((1, d)), np.cumsum(noise[1:], axis=0)])
        states[:] = lissajous(times, amp) + drift
        return Trajectory(times, states)

    if spec.kind == "mackey_glass":
        lag = spec.delay_steps
        init = DEFAULT_INITIAL["mackey_glass"][0] if initial is None else initial
        hist0 = np.atleast_1d(np.asarray(init, dtype=float)).ravel()
        if hist0.size == 1:
            hist0 = np.full(lag + 1, hist0[0])
        if hist0.size < lag + 1:
            raise ConfigError(f"Mackey-Glass history must hold {lag + 1} values, got {hist0.size}")
        buf = np.concatenate([hist0[-(lag + 1):], np.empty(n_points - 1)])
        base = lag
        p = spec.params
        for k in range(1, n_points):
            j = base + k
            x = buf[j - 1]
            buf[j] = x + dt * mackey_glass_rhs(x, buf[j - 1 - lag], **p) + noise[k, 0]
            if not math.isfinite(buf[j]):
                raise NumericalError(f"Mackey-Glass blew up at step {k}")
        states[:, 0] = buf[base:]
        return Trajectory(times, states)

    rhs = lorenz_rhs if spec.kind == "lorenz" else rossler_rhs
    p = spec.params
    s = np.asarray(DEFAULT_INITIAL[spec.kind] if initial is None else initial, dtype=float)
    if s.shape != (d,):
        raise ConfigError(f"initial state must have {d} entries, got {s.shape}")
    states[0] = s
    for k in range(1, n_points):
        s = s + dt * rhs(s, **p) + noise[k]
        if not np.all(np.isfinite(s)):
            raise NumericalError(f"{spec.kind} trajectory blew up at step {k}")
        states[k] = s
    return Trajectory(times, states)


def step_noise_variance(spec: SystemSpec) -> np.ndarray:
    """Per-step, per-dimension variance of the state noise injected by :func:`generate`."""
    std = np.broadcast_to(np.asarray(spec.process_noise_std, dtype=float), (spec.dim,))
    return (std * spec.dt) ** 2


def add_measurement_noise(traj: Trajectory, std: float, seed: int) -> np.ndarray:
    if np.any(np.asarray(std) < 0):
        raise ConfigError("measurement noise std must be >= 0")
    rng = np.random.default_rng(seed)
    return traj.states + rng.standard_normal(traj.states.shape) * std


def write_trajectory_csv(traj: Trajectory, path, measurements: Optional[np.ndarray] = None) -> Path:
    """Write ``t,x0,x1,...`` rows; measurement columns ``z0,z1,...`` are appended when given."""
    path = Path(path)
    header = ["t"] + [f"x{i}" for i in range(traj.dim)]
    if measurements is not None:
        measurements = np.asarray(measurements, dtype=float).reshape(len(traj), -1)
        header += [f"z{i}" for i in range(measurements.shape[1])]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k in range(len(traj)):
            row = [traj.times[k], *traj.states[k]]
            if measurements is not None:
                row += list(measurements[k])
            w.writerow([repr(float(v)) for v in row])
    return path


def read_trajectory_csv(path) -> tuple[Trajectory, Optional[np.ndarray]]:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "t":
        raise ValueError(f"{path}: expected a header starting with 't'")
    header = rows[0]
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(len(rows) - 1, len(header))
    xcols = [i for i, h in enumerate(header) if h.startswith("x")]
    zcols = [i for i, h in enumerate(header) if h.startswith("z")]
    traj = Trajectory(data[:, 0], data[:, xcols])
    return traj, (data[:, zcols] if zcols else None)
