"""Echo state network: fixed random reservoir with a ridge-trained linear readout.

The reservoir evolves as

    r_k = (1 - alpha) r_{k-1} + alpha * tanh(W r_{k-1} + W_in x_{k-1})

and the output is ``y_k = W_out r_k``. Only ``W_out`` is learned.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import linalg

from .errors import ConfigError, NumericalError

_MAX_INIT_ATTEMPTS = 10
_MODEL_MAGIC = "# rcukf-reservoir v1"


@dataclass(frozen=True)
class ReservoirConfig:
    reservoir_size: int = 300
    input_dim: int = 3
    output_dim: int = 3
    leak_rate: float = 1.0
    spectral_radius: float = 0.9
    input_scale: float = 1.0
    connectivity: float = 0.1
    seed: int = 0

    def __post_init__(self):
        for name in ("reservoir_size", "input_dim", "output_dim"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 < self.leak_rate <= 1.0:
            raise ConfigError(f"leak_rate must lie in (0, 1], got {self.leak_rate}")
        if not 0.0 < self.spectral_radius < 1.0:
            raise ConfigError(f"spectral_radius must lie in (0, 1), got {self.spectral_radius}")
        if not self.input_scale > 0.0:
            raise ConfigError(f"input_scale must be positive, got {self.input_scale}")
        if not 0.0 < self.connectivity <= 1.0:
            raise ConfigError(f"connectivity must lie in (0, 1], got {self.connectivity}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


@dataclass(frozen=True)
class TrainConfig:
    ridge: float = 1e-6
    washout: int = 100

    def __post_init__(self):
        if self.ridge < 0:
            raise ConfigError(f"ridge must be >= 0, got {self.ridge}")
        if self.washout < 0:
            raise ConfigError(f"washout must be >= 0, got {self.washout}")


@dataclass
class Reservoir:
    """Reservoir weights plus the mutable internal state.

    Attributes:
        config: Configuration the weights were drawn from.
        W_in: Input weights, shape (n_r, n).
        W: Recurrent weights, shape (n_r, n_r), rescaled to the target spectral radius.
        W_out: Readout weights, shape (m, n_r); ``None`` until trained.
        state: Current reservoir state, shape (n_r,).
    """

    config: ReservoirConfig
    W_in: np.ndarray
    W: np.ndarray
    W_out: Optional[np.ndarray] = None
    state: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.state is None:
            self.state = np.zeros(self.config.reservoir_size)

    @property
    def size(self) -> int:
        return self.config.reservoir_size

    @property
    def leak_rate(self) -> float:
        return self.config.leak_rate

    @property
    def trained(self) -> bool:
        return self.W_out is not None

    def reset(self, state: Optional[np.ndarray] = None) -> None:
        self.state = np.zeros(self.size) if state is None else np.array(state, dtype=float)

    def copy(self) -> "Reservoir":
        return Reservoir(
            config=self.config,
            W_in=self.W_in,
            W=self.W,
            W_out=None if self.W_out is None else self.W_out.copy(),
            state=self.state.copy(),
        )

    def step_states(self, states: np.ndarray, inputs: np.ndarray) -> np.ndarray:
        """Advance a batch of reservoir states without touching ``self.state``.

        ``states`` is (n_r, k) and ``inputs`` is (n, k), one column per trajectory.
        """
        a = self.config.leak_rate
        pre = self.W @ states + self.W_in @ inputs
        return (1.0 - a) * states + a * np.tanh(pre)

    def update_state(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.config.input_dim,):
            raise ValueError(f"input must have shape ({self.config.input_dim},), got {x.shape}")
        a = self.config.leak_rate
        self.state = (1.0 - a) * self.state + a * np.tanh(self.W @ self.state + self.W_in @ x)
        return self.state

    def readout(self, state: Optional[np.ndarray] = None) -> np.ndarray:
        if self.W_out is None:
            raise RuntimeError("reservoir readout is untrained; call train_readout first")
        return self.W_out @ (self.state if state is None else state)

    def drive(self, inputs: np.ndarray) -> np.ndarray:
        """Teacher-force the reservoir through ``inputs`` (N, n); returns states (N, n_r)."""
        inputs = np.asarray(inputs, dtype=float)
        if inputs.ndim != 2 or inputs.shape[1] != self.config.input_dim:
            raise ValueError(
                f"inputs must have shape (N, {self.config.input_dim}), got {inputs.shape}"
            )
        out = np.empty((inputs.shape[0], self.size))
        for k, x in enumerate(inputs):
            out[k] = self.update_state(x)
        return out


def spectral_radius(W: np.ndarray, block: int = 16, tol: float = 1e-13, max_iter: int = 20000) -> float:
    """Largest eigenvalue modulus of ``W`` by block power iteration.

    Random reservoir matrices have many eigenvalues of nearly equal modulus,
    often in complex-conjugate pairs, so a single-vector power iteration
    stalls. Iterating a block of vectors and taking Rayleigh-Ritz values of
    the projected matrix converges at the rate |lambda_{p+1}| / |lambda_1|.
    """
    W = np.asarray(W, dtype=float)
    n = W.shape[0]
    if n == 0:
        return 0.0
    p = min(block, n)
    if p == n:
        return float(np.max(np.abs(np.linalg.eigvals(W))))
    rng = np.random.default_rng(0x5EED)
    Q, _ = np.linalg.qr(rng.standard_normal((n, p)))
    prev = np.inf
    est = 0.0
    for _ in range(max_iter):
        Z = W @ Q
        if not np.any(Z):
            return 0.0
        ritz = np.linalg.eigvals(Q.T @ Z)
        est = float(np.max(np.abs(ritz)))
        if abs(est - prev) <= tol * max(est, 1e-300):
            return est
        prev = est
        Q, _ = np.linalg.qr(Z)
    return est


def init_reservoir(cfg: ReservoirConfig) -> Reservoir:
    rng = np.random.default_rng(cfg.seed)
    n_r, n = cfg.reservoir_size, cfg.input_dim
    W_in = rng.uniform(-1.0, 1.0, size=(n_r, n)) * cfg.input_scale
    for _ in range(_MAX_INIT_ATTEMPTS):
        W = rng.uniform(-1.0, 1.0, size=(n_r, n_r))
        W[rng.random((n_r, n_r)) >= cfg.connectivity] = 0.0
        rho = spectral_radius(W)
        if rho > 1e-12:
            W *= cfg.spectral_radius / rho
            return Reservoir(config=cfg, W_in=W_in, W=W)
    raise NumericalError(
        f"recurrent matrix had zero spectral radius in {_MAX_INIT_ATTEMPTS} draws; "
        "increase connectivity or reservoir_size"
    )


def ridge_solve(states: np.ndarray, targets: np.ndarray, ridge: float) -> np.ndarray:
    """Solve ``W_out (R R^T + ridge I) = Y R^T`` for W_out.

    ``states`` is R with one column per sample (n_r, N); ``targets`` is Y (m, N).
    """
    A = states @ states.T
    A[np.diag_indices_from(A)] += ridge
    B = states @ targets.T
    try:
        factor = linalg.cho_factor(A, lower=True, check_finite=True)
    except linalg.LinAlgError as exc:
        hint = " (ridge is 0; use ridge > 0)" if ridge == 0 else ""
        raise NumericalError(f"ridge normal matrix is singular{hint}") from exc
    # LAPACK accepts rounding-level pivots on rank-deficient matrices
    piv = np.abs(np.diag(factor[0]))
    if piv.size and piv.min() <= np.sqrt(piv.size * np.finfo(float).eps) * piv.max():
        hint = " (ridge is 0; use ridge > 0)" if ridge == 0 else ""
        raise NumericalError(f"ridge normal matrix is numerically singular{hint}")
    return linalg.cho_solve(factor, B).T


def train_readout(res: Reservoir, inputs, targets, tcfg: TrainConfig) -> Reservoir:
    """Fit ``res.W_out`` by ridge regression on teacher-forced reservoir states.

    The reservoir is reset to zero and driven through ``inputs``; states from
    index ``washout`` onward are regressed onto the matching ``targets``. The
    reservoir is left in the state reached after the last input.
    """
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if inputs.ndim != 2 or targets.ndim != 2:
        raise ValueError("inputs and targets must be 2-D (N, dim) arrays")
    if len(inputs) != len(targets):
        raise ValueError(f"length mismatch: {len(inputs)} inputs vs {len(targets)} targets")
    if targets.shape[1] != res.config.output_dim:
        raise ValueError(f"targets must have {res.config.output_dim} columns, got {targets.shape[1]}")
    if len(inputs) <= tcfg.washout:
        raise ValueError(f"need more than washout={tcfg.washout} samples, got {len(inputs)}")
    res.reset()
    states = res.drive(inputs)
    R = states[tcfg.washout:].T
    Y = targets[tcfg.washout:].T
    res.W_out = ridge_solve(R, Y, tcfg.ridge)
    return res


def loss(res: Reservoir, predictions, targets, ridge: float) -> float:
    """Mean squared error plus the Frobenius penalty ``ridge * ||W_out||_F^2``."""
    predictions = np.atleast_2d(np.asarray(predictions, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if predictions.shape != targets.shape:
        raise ValueError(f"shape mismatch: {predictions.shape} vs {targets.shape}")
    if res.W_out is None:
        raise RuntimeError("loss needs a trained readout")
    mse = float(np.sum((predictions - targets) ** 2)) / len(predictions)
    return mse + ridge * float(np.sum(res.W_out**2))


def predict_autonomous(res: Reservoir, steps: int, initial_input) -> np.ndarray:
    """Free-run the reservoir, feeding each prediction back as the next input.

    ``initial_input`` (usually the last ground-truth training state) drives the
    first step; ``res.state`` must already be warmed. Returns (steps, m).
    """
    if not res.trained:
        raise RuntimeError("reservoir readout is untrained; call train_readout first")
    if res.config.input_dim != res.config.output_dim:
        raise ValueError("autonomous prediction needs input_dim == output_dim")
    out = np.empty((steps, res.config.output_dim))
    x = np.asarray(initial_input, dtype=float)
    for k in range(steps):
        res.update_state(x)
        x = res.readout()
        out[k] = x
    return out


def _write_block(fh, name: str, arr: np.ndarray) -> None:
    arr = np.atleast_2d(arr)
    fh.write(f"{name} {arr.shape[0]} {arr.shape[1]}\n")
    for row in arr.tolist():
        fh.write(" ".join(repr(v) for v in row))
        fh.write("\n")


def save_reservoir(res: Reservoir, path) -> Path:
    """Write weights and header to a plain-text file; float64 values round-trip exactly."""
    path = Path(path)
    c = res.config
    with path.open("w", encoding="utf-8") as fh:
        fh.write(_MODEL_MAGIC + "\n")
        fh.write(f"reservoir_size {c.reservoir_size}\n")
        fh.write(f"input_dim {c.input_dim}\n")
        fh.write(f"output_dim {c.output_dim}\n")
        fh.write(f"leak_rate {c.leak_rate!r}\n")
        fh.write(f"spectral_radius {c.spectral_radius!r}\n")
        fh.write(f"input_scale {c.input_scale!r}\n")
        fh.write(f"connectivity {c.connectivity!r}\n")
        fh.write(f"seed {c.seed}\n")
        _write_block(fh, "W_in", res.W_in)
        _write_block(fh, "W", res.W)
        if res.W_out is not None:
            _write_block(fh, "W_out", res.W_out)
        _write_block(fh, "state", res.state[None, :])
    return path


def load_reservoir(path) -> Reservoir:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != _MODEL_MAGIC:
        raise ValueError(f"{path}: not a reservoir model file")
    header = {}
    blocks = {}
    i = 1
    while i < len(lines):
        parts = lines[i].split()
        i += 1
        if not parts:
            continue
        if len(parts) == 3 and parts[0] in ("W_in", "W", "W_out", "state"):
            rows, cols = int(parts[1]), int(parts[2])
            data = np.array([[float(v) for v in lines[i + r].split()] for r in range(rows)])
            if data.shape != (rows, cols):
                raise ValueError(f"{path}: block {parts[0]} has shape {data.shape}, expected {(rows, cols)}")
            blocks[parts[0]] = data
            i += rows
        else:
            header[parts[0]] = parts[1]
    cfg = ReservoirConfig(
        reservoir_size=int(header["reservoir_size"]),
        input_dim=int(header["input_dim"]),
        output_dim=int(header["output_dim"]),
        leak_rate=float(header["leak_rate"]),
        spectral_radius=float(header["spectral_radius"]),
        input_scale=float(header["input_scale"]),
        connectivity=float(header["connectivity"]),
        seed=int(header["seed"]),
    )
    return Reservoir(
        config=cfg,
        W_in=blocks["W_in"],
        W=blocks["W"],
        W_out=blocks.get("W_out"),
        state=blocks["state"][0] if "state" in blocks else None,
    )
