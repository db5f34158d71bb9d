import numpy as np
import pytest
from scipy import linalg

from rcukf.errors import NumericalError
from rcukf.estimator import RcukfEstimator
from rcukf.reservoir import Reservoir, ReservoirConfig, TrainConfig, init_reservoir, train_readout
from rcukf.systems import SystemSpec, add_measurement_noise, generate
from rcukf.ukf import NoiseModel


@pytest.fixture(scope="module")
def lorenz_data():
    traj = generate(SystemSpec("lorenz", process_noise_std=0.1**0.5, seed=3), 900)
    return traj.states


@pytest.fixture(scope="module")
def trained(lorenz_data):
    cfg = ReservoirConfig(reservoir_size=200, input_dim=3, output_dim=3, input_scale=0.02, seed=7)
    res = init_reservoir(cfg)
    X = lorenz_data[:600]
    train_readout(res, X[:-1], X[1:], TrainConfig(ridge=1e-4, washout=100))
    return res


def _est(res, r_var=0.01, q_var=1e-3, mode="shared"):
    return RcukfEstimator(
        reservoir=res.copy(), noise=NoiseModel.isotropic(3, q_var, 3, r_var), mode=mode
    )


def _is_sym_psd(P):
    if np.max(np.abs(P - P.T)) >= 1e-9:
        return False
    try:
        linalg.cholesky(P + 1e-9 * np.eye(len(P)), lower=True)
    except linalg.LinAlgError:
        return False
    return True


class TestWarmup:
    def test_empty_history(self, trained):
        with pytest.raises(ValueError):
            _est(trained).warmup(np.empty((0, 3)))

    def test_single_state_zero_input(self):
        cfg = ReservoirConfig(reservoir_size=5, input_dim=2, output_dim=2, seed=1)
        res = Reservoir(config=cfg, W_in=np.zeros((5, 2)), W=np.zeros((5, 5)), W_out=np.zeros((2, 5)))
        est = RcukfEstimator(reservoir=res, noise=NoiseModel.isotropic(2, 0.1, 2, 0.1)).warmup([[0.5, -1.0]])
        np.testing.assert_array_equal(res.state, 0.0)
        np.testing.assert_array_equal(est.belief.mean, [0.5, -1.0])
        np.testing.assert_array_equal(est.belief.cov, 0.1 * np.eye(2))

    def test_echo_state_agreement(self, trained, lorenz_data):
        rng = np.random.default_rng(0)
        a = _est(trained).warmup(lorenz_data[:101])
        b = _est(trained).warmup(lorenz_data[:101], reservoir_state=rng.uniform(-1, 1, trained.size))
        assert np.max(np.abs(a.reservoir.state - b.reservoir.state)) < 1e-6

    def test_per_sigma_states(self, trained, lorenz_data):
        est = _est(trained, mode="per_sigma").warmup(lorenz_data[:50])
        assert est.sigma_states.shape == (trained.size, 7)

    def test_step_before_warmup(self, trained):
        with pytest.raises(RuntimeError):
            _est(trained).step(np.zeros(3))

    def test_untrained_rejected(self):
        res = init_reservoir(ReservoirConfig(reservoir_size=10))
        with pytest.raises(ValueError):
            RcukfEstimator(reservoir=res, noise=NoiseModel.isotropic(3, 0.1, 3, 0.1))


class TestLimits:
    def test_measurement_dominance(self, trained, lorenz_data):
        est = _est(trained, r_var=1e-12).warmup(lorenz_data[:600])
        z = lorenz_data[600:800]
        out = est.run(z)
        assert np.max(np.abs(out - z)) < 1e-6

    def test_prior_dominance_matches_forecast(self, trained, lorenz_data):
        # short horizon: predict-only runs on a chaotic surrogate amplify the
        # ~1e-12 residual gain until the sigma cloud itself blows up
        z = lorenz_data[600:620] + 5.0
        a = _est(trained, r_var=1e12).warmup(lorenz_data[:600]).run(z)
        b = _est(trained, r_var=1e12).warmup(lorenz_data[:600]).forecast(len(z))
        assert np.max(np.abs(a - b)) < 1e-3

    def test_identity_readout(self):
        # a reservoir trained to reproduce its input predicts the mean unchanged
        cfg = ReservoirConfig(reservoir_size=60, input_dim=2, output_dim=2, input_scale=0.1, seed=4)
        res = init_reservoir(cfg)
        rng = np.random.default_rng(4)
        X = rng.uniform(-1, 1, (400, 2))
        train_readout(res, X, X, TrainConfig(ridge=0.0, washout=20))
        states = res.drive(X)[20:]
        resid = np.max(np.abs(states @ res.W_out.T - X[20:]))
        est = RcukfEstimator(reservoir=res, noise=NoiseModel.isotropic(2, 0.0, 2, 1.0))
        est.warmup(X[:100])
        prior_mean = est.belief.mean.copy()
        est.step(None)
        assert np.max(np.abs(est.belief.mean - prior_mean)) < max(10 * resid, 1e-6)


class TestRun:
    def test_empty(self, trained, lorenz_data):
        out = _est(trained).warmup(lorenz_data[:600]).run(np.empty((0, 3)))
        assert out.shape == (0, 3)

    def test_deterministic(self, trained, lorenz_data):
        z = add_measurement_noise(
            generate(SystemSpec("lorenz", seed=1), 100), 0.1, seed=2
        )
        a = _est(trained).warmup(lorenz_data[:600]).run(z)
        b = _est(trained).warmup(lorenz_data[:600]).run(z)
        assert np.array_equal(a, b)

    @pytest.mark.parametrize("mode", ["shared", "per_sigma"])
    def test_filters_better_than_measurements(self, trained, lorenz_data, mode):
        truth = lorenz_data[600:800]
        z = truth + np.random.default_rng(9).standard_normal(truth.shape) * 0.1
        out = _est(trained, mode=mode).warmup(lorenz_data[:600]).run(z)
        assert out.shape == truth.shape
        rmse = np.sqrt(np.mean((out - truth) ** 2))
        assert rmse < 0.5

    def test_psd_over_1000_steps(self, trained):
        traj = generate(SystemSpec("lorenz", process_noise_std=0.1**0.5, seed=3), 1600)
        z = add_measurement_noise(traj[600:], 0.1, seed=5)
        est = _est(trained).warmup(traj.states[:600])
        _, covs = est.run(z, keep_covariances=True)
        assert len(covs) == 1000
        assert all(_is_sym_psd(P) for P in covs)

    def test_failure_has_step_index(self, trained, lorenz_data):
        est = _est(trained).warmup(lorenz_data[:600])
        z = np.zeros((3, 3))
        z[1] = np.nan
        with pytest.raises(ValueError):
            est.run(z)
        est.warmup(lorenz_data[:600])
        est.belief.cov[:] = -np.eye(3)
        with pytest.raises(NumericalError, match="step 0"):
            est.run(z[:1])

    def test_control_channel(self):
        cfg = ReservoirConfig(reservoir_size=40, input_dim=3, output_dim=2, seed=2)
        res = init_reservoir(cfg)
        rng = np.random.default_rng(2)
        X = rng.uniform(-1, 1, (200, 3))
        train_readout(res, X, X[:, :2], TrainConfig(ridge=1e-6, washout=10))
        est = RcukfEstimator(reservoir=res, noise=NoiseModel.isotropic(2, 1e-3, 2, 1e-2), control_dim=1)
        est.warmup(X[:50, :2], controls=X[:50, 2:])
        out = est.run(X[50:60, :2], controls=X[50:60, 2:])
        assert out.shape == (10, 2)
        with pytest.raises(ValueError):
            RcukfEstimator(reservoir=res, noise=NoiseModel.isotropic(2, 1e-3, 2, 1e-2))
