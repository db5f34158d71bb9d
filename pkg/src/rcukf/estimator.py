"""Unscented Kalman filter whose process model is a trained reservoir.

Each sigma point is pushed through one reservoir update and read out with
``W_out`` to form the predicted sigma set; the prior and measurement update
then follow the usual unscented equations from :mod:`rcukf.ukf`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal, Optional

import numpy as np

from . import ukf
from .errors import NumericalError
from .reservoir import Reservoir
from .ukf import GaussianBelief, NoiseModel, UkfParams

PropagationMode = Literal["shared", "per_sigma"]


@dataclass
class RcukfEstimator:
    """Sequential RCUKF state estimator.

    In ``"shared"`` mode a single reservoir state is kept on the filtered
    trajectory and cloned to every sigma point at each step. In
    ``"per_sigma"`` mode each sigma index keeps its own reservoir state from
    the previous step.

    ``h`` maps a state vector to a measurement vector (identity when None).
    ``control_dim`` > 0 enables an exogenous input that is appended to every
    sigma point before it enters the reservoir; the reservoir's input
    dimension must then be ``n + control_dim``.
    """

    reservoir: Reservoir
    noise: NoiseModel
    params: UkfParams = field(default_factory=UkfParams)
    P0: Optional[np.ndarray] = None
    mode: PropagationMode = "shared"
    h: Optional[Callable[[np.ndarray], np.ndarray]] = None
    control_dim: int = 0
    belief: Optional[GaussianBelief] = field(default=None, init=False)
    sigma_states: Optional[np.ndarray] = field(default=None, init=False)

    def __post_init__(self):
        if not self.reservoir.trained:
            raise ValueError("RCUKF needs a reservoir with a trained readout")
        if self.mode not in ("shared", "per_sigma"):
            raise ValueError(f"unknown propagation mode {self.mode!r}")
        cfg = self.reservoir.config
        if cfg.input_dim != cfg.output_dim + self.control_dim:
            raise ValueError(
                f"reservoir input_dim {cfg.input_dim} must equal state dim {cfg.output_dim} "
                f"+ control_dim {self.control_dim}"
            )
        if self.P0 is None:
            self.P0 = 0.1 * np.eye(self.n)
        self.P0 = np.atleast_2d(np.asarray(self.P0, dtype=float))

    @property
    def n(self) -> int:
        return self.reservoir.config.output_dim

    @property
    def warmed(self) -> bool:
        return self.belief is not None

    def _inputs(self, X: np.ndarray, u) -> np.ndarray:
        # X is (k, n); returns the reservoir inputs as columns (n + n_u, k)
        if self.control_dim == 0:
            return X.T
        u = np.zeros(self.control_dim) if u is None else np.asarray(u, dtype=float)
        return np.vstack([X.T, np.repeat(u[:, None], X.shape[0], axis=1)])

    def warmup(self, history, controls=None, reservoir_state=None) -> "RcukfEstimator":
        """Drive the reservoir through ``history`` and centre the belief on its last state.

        The final history state is not fed to the reservoir here: it is the
        centre of the first step's sigma points, and each sigma point is fed
        exactly once during propagation.
        """
        history = np.asarray(history, dtype=float)
        if history.ndim == 1:
            history = history[:, None]
        if len(history) == 0:
            raise ValueError("warmup needs a non-empty history")
        if history.shape[1] != self.n:
            raise ValueError(f"history has dimension {history.shape[1]}, expected {self.n}")
        res = self.reservoir
        res.reset(reservoir_state)
        for k in range(len(history) - 1):
            u = None if controls is None else controls[k]
            res.update_state(self._inputs(history[k][None, :], u)[:, 0])
        self.belief = GaussianBelief(history[-1].copy(), self.P0.copy())
        if self.mode == "per_sigma":
            self.sigma_states = np.repeat(res.state[:, None], 2 * self.n + 1, axis=1)
        else:
            self.sigma_states = None
        return self

    def _propagate(self, X: np.ndarray, u) -> np.ndarray:
        res = self.reservoir
        if self.mode == "per_sigma":
            prev = self.sigma_states
        else:
            prev = np.repeat(res.state[:, None], X.shape[0], axis=1)
        new = res.step_states(prev, self._inputs(X, u))
        if self.mode == "per_sigma":
            self.sigma_states = new
        else:
            # X[0] is the previous posterior mean
            res.state = new[:, 0].copy()
        return (res.W_out @ new).T

    def step(self, z=None, u=None) -> GaussianBelief:
        """Advance one step; with ``z`` None only the prediction is made."""
        if not self.warmed:
            raise RuntimeError("estimator must be warmed up before stepping")
        X = ukf.sigma_points(self.belief, self.params)
        wts = ukf.weights(self.params, self.n)
        Xp = self._propagate(X, u)
        if not np.all(np.isfinite(Xp)):
            raise NumericalError("reservoir produced non-finite sigma points")
        prior = ukf.predict(Xp, wts, self.noise.Q)
        if z is None:
            self.belief = prior
        else:
            Xu = ukf.sigma_points(prior, self.params)
            self.belief = ukf.update(prior, Xu, wts, z, self.h, self.noise.R)
        return self.belief

    def run(self, measurements, controls=None, keep_covariances: bool = False):
        """Filter a measurement sequence; returns posterior means (N, n).

        With ``keep_covariances`` the posterior covariances (N, n, n) are
        returned as a second value. ``None`` rows are treated as missing
        measurements (prediction only).
        """
        N = len(measurements)
        means = np.empty((N, self.n))
        covs = np.empty((N, self.n, self.n)) if keep_covariances else None
        for k in range(N):
            u = None if controls is None else controls[k]
            try:
                b = self.step(measurements[k], u)
            except (NumericalError, np.linalg.LinAlgError) as exc:
                raise NumericalError(f"RCUKF failed at step {k}: {exc}") from exc
            means[k] = b.mean
            if covs is not None:
                covs[k] = b.cov
        return (means, covs) if keep_covariances else means

    def forecast(self, steps: int, controls=None) -> np.ndarray:
        """Prediction-only run: sigma points propagated through the reservoir with no updates."""
        return self.run([None] * steps, controls)
