"""Unscented Kalman filter building blocks.

Everything here is a pure function of its arguments: sigma-point generation,
the scaled weights, the unscented prediction from already-propagated points,
and the measurement update. The process model is whatever produced the
propagated points, so the same code serves analytic models and reservoirs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import linalg

from .errors import ConfigError, NumericalError

# absolute diagonal jitter tried in order before a factorization is declared failed
JITTER_LADDER = (0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


@dataclass(frozen=True)
class UkfParams:
    """Scaled unscented transform parameters.

    eta controls the sigma-point spread, kappa is the secondary scaling and
    zeta folds prior knowledge of the distribution into the zeroth covariance
    weight (2 is optimal for Gaussians).
    """

    eta: float = 1e-3
    kappa: float = 0.0
    zeta: float = 2.0

    def lam(self, n: int) -> float:
        return self.eta**2 * (n + self.kappa) - n


@dataclass(frozen=True)
class SigmaWeights:
    mean: np.ndarray
    cov: np.ndarray


@dataclass
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        n = self.mean.shape[0]
        if self.cov.shape != (n, n):
            raise ValueError(f"covariance shape {self.cov.shape} does not match mean dimension {n}")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def copy(self) -> "GaussianBelief":
        return GaussianBelief(self.mean.copy(), self.cov.copy())


@dataclass
class NoiseModel:
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        self.R = np.atleast_2d(np.asarray(self.R, dtype=float))
        for name, M in (("Q", self.Q), ("R", self.R)):
            if M.shape[0] != M.shape[1]:
                raise ValueError(f"{name} must be square, got {M.shape}")
            if not np.allclose(M, M.T, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")
            if np.min(np.linalg.eigvalsh(M)) < -1e-12:
                raise ValueError(f"{name} must be positive semi-definite")

    @classmethod
    def isotropic(cls, n: int, q_var: float, m: int, r_var: float) -> "NoiseModel":
        return cls(q_var * np.eye(n), r_var * np.eye(m))


def symmetrize(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def jittered_cholesky(M: np.ndarray, what: str = "covariance") -> np.ndarray:
    """Lower Cholesky factor of symmetrized ``M``, adding escalating diagonal jitter."""
    M = symmetrize(np.asarray(M, dtype=float))
    if not np.all(np.isfinite(M)):
        raise NumericalError(f"{what} contains non-finite entries")
    eye = np.eye(M.shape[0])
    for jitter in JITTER_LADDER:
        try:
            return linalg.cholesky(M + jitter * eye, lower=True, check_finite=False)
        except linalg.LinAlgError:
            continue
    raise NumericalError(f"{what} is not positive semi-definite (Cholesky failed with jitter {JITTER_LADDER[-1]:g})")


def weights(params: UkfParams, n: int) -> SigmaWeights:
    lam = params.lam(n)
    c = n + lam
    if c <= 0:
        raise ConfigError(f"n + lambda must be positive, got {c} (n={n}, params={params})")
    wm = np.full(2 * n + 1, 1.0 / (2.0 * c))
    wc = wm.copy()
    wm[0] = lam / c
    wc[0] = lam / c + (1.0 - params.eta**2 + params.zeta)
    return SigmaWeights(mean=wm, cov=wc)


def sigma_points(belief: GaussianBelief, params: UkfParams) -> np.ndarray:
    """Return the 2n+1 sigma points as rows of an array shaped (2n+1, n)."""
    n = belief.dim
    c = n + params.lam(n)
    if c <= 0:
        raise ConfigError(f"n + lambda must be positive, got {c}")
    L = jittered_cholesky(c * belief.cov)
    x = belief.mean
    return np.vstack([x[None, :], x + L.T, x - L.T])


def _weighted_mean(wm: np.ndarray, X: np.ndarray) -> np.ndarray:
    # relative to point 0: with small eta the zeroth weight is huge and negative
    return X[0] + wm[1:] @ (X[1:] - X[0])


def _weighted_cov(wc: np.ndarray, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return (A * wc[:, None]).T @ B


def predict(points: np.ndarray, wts: SigmaWeights, Q=None) -> GaussianBelief:
    """Unscented mean and covariance of propagated sigma points, plus process noise."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[0] != wts.mean.shape[0]:
        raise ValueError(f"expected {wts.mean.shape[0]} propagated points, got shape {points.shape}")
    mean = _weighted_mean(wts.mean, points)
    d = points - mean
    P = _weighted_cov(wts.cov, d, d)
    if Q is not None:
        P = P + np.asarray(Q, dtype=float)
    return GaussianBelief(mean, symmetrize(P))


def identity(x: np.ndarray) -> np.ndarray:
    return x


def update(
    prior: GaussianBelief,
    points: np.ndarray,
    wts: SigmaWeights,
    z,
    h: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    R=None,
) -> GaussianBelief:
    """Measurement update from sigma points ``points`` drawn for ``prior``.

    With additive process noise the points should be redrawn from the prior
    (see :func:`unscented_step`) so that P_xz and P_zz include Q.

    ``h`` maps one state vector to one measurement vector; ``None`` means the
    identity. The gain is obtained from a Cholesky solve against P_zz.
    """
    points = np.asarray(points, dtype=float)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if not np.all(np.isfinite(z)):
        raise ValueError("measurement contains non-finite values")
    h = identity if h is None else h
    Z = np.array([np.atleast_1d(h(p)) for p in points], dtype=float)
    if Z.shape[1] != z.shape[0]:
        raise ValueError(f"measurement has dimension {z.shape[0]} but h returns {Z.shape[1]}")
    z_hat = _weighted_mean(wts.mean, Z)
    dz = Z - z_hat
    dx = points - prior.mean
    P_zz = _weighted_cov(wts.cov, dz, dz)
    if R is not None:
        P_zz = P_zz + np.asarray(R, dtype=float)
    P_xz = _weighted_cov(wts.cov, dx, dz)
    L = jittered_cholesky(P_zz, what="innovation covariance P_zz")
    K = linalg.cho_solve((L, True), P_xz.T, check_finite=False).T
    mean = prior.mean + K @ (z - z_hat)
    P = prior.cov - K @ P_zz @ K.T
    return GaussianBelief(mean, symmetrize(P))


def unscented_step(
    belief: GaussianBelief,
    params: UkfParams,
    f: Callable[[np.ndarray], np.ndarray],
    Q=None,
) -> tuple[GaussianBelief, np.ndarray, SigmaWeights]:
    """Generate sigma points, push each through ``f`` and form the prior.

    Returns the prior belief together with sigma points redrawn from it and
    the weights, ready for :func:`update`.
    """
    X = sigma_points(belief, params)
    wts = weights(params, belief.dim)
    Xp = np.array([np.atleast_1d(f(x)) for x in X], dtype=float)
    prior = predict(Xp, wts, Q)
    return prior, sigma_points(prior, params), wts
