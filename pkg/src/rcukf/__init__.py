"""Unscented Kalman filtering with an echo-state-network process model."""

from .errors import ConfigError, NumericalError
from .reservoir import (
    Reservoir,
    ReservoirConfig,
    TrainConfig,
    init_reservoir,
    load_reservoir,
    loss,
    predict_autonomous,
    save_reservoir,
    spectral_radius,
    train_readout,
)
from .ukf import GaussianBelief, NoiseModel, SigmaWeights, UkfParams, predict, sigma_points, update, weights
from .estimator import RcukfEstimator
from .systems import SystemSpec, Trajectory, generate, add_measurement_noise

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "NumericalError",
    "Reservoir",
    "ReservoirConfig",
    "TrainConfig",
    "init_reservoir",
    "load_reservoir",
    "loss",
    "predict_autonomous",
    "save_reservoir",
    "spectral_radius",
    "train_readout",
    "GaussianBelief",
    "NoiseModel",
    "SigmaWeights",
    "UkfParams",
    "predict",
    "sigma_points",
    "update",
    "weights",
    "RcukfEstimator",
    "SystemSpec",
    "Trajectory",
    "generate",
    "add_measurement_noise",
]
