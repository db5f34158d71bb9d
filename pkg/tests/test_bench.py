import numpy as np
import pytest

from rcukf import bench
from rcukf.config import (
    SCHEMA,
    defaults,
    dump_config,
    load_config,
    parse_config_text,
    resolve,
)
from rcukf.errors import ConfigError, NumericalError
from rcukf.systems import SystemSpec, Trajectory, generate


def _small(**over):
    values = {
        "system": ("lorenz",),
        "points": (400,),
        "seed": (0, 1),
        "reservoir.size": 60,
        "train.washout": 50,
        **over,
    }
    return resolve(values)


@pytest.fixture(scope="module")
def report():
    return bench.run_benchmark(_small(system=("lorenz", "mackey_glass")))


class TestSplit:
    @pytest.mark.parametrize("n,lengths", [(10, (7, 3)), (700, (490, 210)), (10_000, (7000, 3000))])
    def test_lengths(self, n, lengths):
        traj = generate(SystemSpec("lissajous"), n)
        a, b = bench.split(traj, 0.7)
        assert (len(a), len(b)) == lengths
        assert np.array_equal(np.vstack([a.states, b.states]), traj.states)
        assert np.array_equal(np.concatenate([a.times, b.times]), traj.times)

    def test_bad_fraction(self):
        with pytest.raises(ConfigError):
            bench.split(generate(SystemSpec("lissajous"), 10), 1.0)


class TestRmse:
    def test_self(self):
        x = np.random.default_rng(0).standard_normal((20, 3))
        per, mean = bench.rmse(x, x)
        assert np.all(per == 0.0) and mean == 0.0

    def test_unit_error(self):
        x = np.zeros((5, 3))
        per, mean = bench.rmse(x, x + 1.0)
        np.testing.assert_allclose(per, 1.0)
        assert mean == 1.0

    def test_hand_example(self):
        per, mean = bench.rmse(np.zeros((1, 2)), np.array([[3.0, 4.0]]))
        np.testing.assert_allclose(per, [3.0, 4.0])
        assert mean == 3.5

    def test_trajectories_accepted(self):
        t = Trajectory(np.arange(3.0), np.ones((3, 1)))
        assert bench.rmse(t, t)[1] == 0.0

    def test_mismatch(self):
        with pytest.raises(ValueError):
            bench.rmse(np.zeros((3, 2)), np.zeros((4, 2)))


class TestSeeds:
    def test_streams_independent(self):
        s = {bench.derive_seed(0, k) for k in range(3)} | {bench.derive_seed(1, k) for k in range(3)}
        assert len(s) == 6
        assert bench.derive_seed(3, 1) == bench.derive_seed(3, 1)


class TestRun:
    def test_both_methods_per_seed(self, report):
        for cell in report.cells:
            assert len(cell.seeds) == 2
            for r in cell.seeds:
                for m in bench.METHODS:
                    assert (r.rmse.get(m) is not None) or (m in r.errors)
        assert not report.partial

    def test_mean_is_mean_of_dims(self, report):
        cell = report.cell("lorenz", 400)
        vals = cell.per_seed("rcukf")
        np.testing.assert_allclose(vals[:, -1], vals[:, :-1].mean(axis=1))
        assert np.all(vals >= 0)

    def test_deterministic(self, report, tmp_path):
        again = bench.run_benchmark(_small(system=("lorenz", "mackey_glass")))
        a = bench.write_report_csv(report, tmp_path / "a.csv").read_bytes()
        b = bench.write_report_csv(again, tmp_path / "b.csv").read_bytes()
        assert a == b

    def test_failure_recorded(self, monkeypatch):
        # a failed estimator run is recorded per seed instead of dropped
        def boom(self, *a, **k):
            raise NumericalError("RCUKF failed at step 3: boom")

        monkeypatch.setattr(bench.RcukfEstimator, "run", boom)
        rep = bench.run_benchmark(_small(seed=(0,)))
        r = rep.cells[0].seeds[0]
        assert r.rmse["standard_rc"] is not None
        assert r.rmse["rcukf"] is None and "step 3" in r.errors["rcukf"]
        assert rep.partial
        assert ("lorenz", "400", "rcukf", "0", "failed", "nan") in list(bench.report_rows(rep))
        kv = bench.parse_kv(bench.report_kv(rep))
        assert kv["cell.0.status"] == "partial"
        assert "boom" in kv["cell.0.seed.0.rcukf.error"]

    def test_noise_model(self):
        cfg = _small()[0]
        nm = bench.noise_model(cfg, SystemSpec("lorenz"))
        np.testing.assert_allclose(nm.Q, 0.1 * 0.01 * np.eye(3))
        np.testing.assert_allclose(nm.R, 0.01 * np.eye(3))
        cfg = _small(**{"ukf.q_var": 0.5, "ukf.r_var": 0.25})[0]
        nm = bench.noise_model(cfg, SystemSpec("lorenz"))
        np.testing.assert_allclose(np.diag(nm.Q), 0.5)
        np.testing.assert_allclose(np.diag(nm.R), 0.25)


class TestReport:
    def test_csv_schema(self, report, tmp_path):
        rows = bench.read_report_csv(bench.write_report_csv(report, tmp_path / "r.csv"))
        keys = {(r["system"], r["regime"], r["method"], r["seed"], r["dim"]) for r in rows}
        for m in bench.METHODS:
            for s in ("0", "1", "median"):
                for d in ("x", "y", "z", "mean"):
                    assert ("lorenz", "400", m, s, d) in keys
                assert ("mackey_glass", "400", m, s, "x") in keys
                assert ("mackey_glass", "400", m, s, "y") not in keys
        assert len(rows) == len(keys)

    def test_csv_round_trip(self, report, tmp_path):
        rows = bench.read_report_csv(bench.write_report_csv(report, tmp_path / "r.csv"))
        cell = report.cell("lorenz", "400")
        got = {(r["method"], r["seed"], r["dim"]): r["rmse"] for r in rows if r["system"] == "lorenz"}
        for m in bench.METHODS:
            vals = cell.per_seed(m)
            for i, s in enumerate(("0", "1")):
                for j, d in enumerate(("x", "y", "z", "mean")):
                    assert got[(m, s, d)] == vals[i, j]
            for j, d in enumerate(("x", "y", "z", "mean")):
                assert got[(m, "median", d)] == cell.median(m)[j]

    def test_kv_echo_reruns(self, report, tmp_path):
        raw = {**defaults(), **{"system": ("lorenz", "mackey_glass"), "points": (400,), "seed": (0, 1),
                                "reservoir.size": 60, "train.washout": 50}}
        paths = bench.report_write(report, tmp_path, raw_config=raw)
        kv = bench.parse_kv(paths[1].read_text())
        echoed = parse_config_text(
            "\n".join(f"{k[len('config.'):]} = {v}" for k, v in kv.items() if k.startswith("config."))
        )
        assert echoed == raw
        assert load_config(paths[2]) == raw
        assert kv["cell.0.status"] == "complete"
        assert float(kv["cell.0.median.rcukf.mean"]) == report.cells[0].median("rcukf")[-1]

    def test_estimates(self, tmp_path):
        rep = bench.run_benchmark(_small(seed=(0,)), keep_estimates=True)
        paths = bench.report_write(rep, tmp_path, trajectories=True)
        est = [p for p in paths if p.name.startswith("estimates_")]
        assert len(est) == 1
        header = est[0].read_text().splitlines()[0].split(",")
        assert header[:4] == ["t", "x0", "x1", "x2"] and "ukf2" in header and "rc0" in header

    def test_table(self, report, tmp_path):
        rows = bench.read_report_csv(bench.write_report_csv(report, tmp_path / "r.csv"))
        text = bench.format_table(rows)
        assert "Mean RMSE" in text and "mackey_glass" in text

    def test_io_error_has_path(self, report, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(OSError, match="file"):
            bench.report_write(report, blocker / "sub")


class TestConfig:
    def test_parse(self):
        vals = parse_config_text(
            "# comment\nsystem = lorenz, Rössler\npoints = 700,10000\nreservoir.size = 50  # inline\n"
            "ukf.q_var = auto\n"
        )
        assert vals["system"] == ("lorenz", "rossler")
        assert vals["points"] == (700, 10000)
        assert vals["reservoir.size"] == 50
        assert vals["ukf.q_var"] is None

    @pytest.mark.parametrize("text", ["nonsense", "unknown.key = 1", "reservoir.size = big", "system = duffing"])
    def test_errors(self, text):
        with pytest.raises(ConfigError):
            parse_config_text(text)

    def test_dump_round_trip(self):
        vals = defaults()
        assert parse_config_text(dump_config(vals)) == vals

    def test_system_defaults(self):
        cells = resolve({"system": ("lorenz", "mackey_glass"), "points": (700, 10000)})
        assert [(c.system, c.points) for c in cells] == [
            ("lorenz", 700), ("lorenz", 10000), ("mackey_glass", 700), ("mackey_glass", 10000)
        ]
        assert cells[0].process_std == pytest.approx(0.1**0.5)
        assert cells[2].process_std == pytest.approx(0.1)
        cells = resolve({"system": ("lorenz",), "noise.process_std": 0.5})
        assert cells[0].process_std == 0.5

    def test_invariants(self):
        with pytest.raises(ConfigError):
            resolve({"points": (120,)})  # 84 training points < washout + 2
        with pytest.raises(ConfigError):
            resolve({"split": 1.0})
        with pytest.raises(ConfigError):
            resolve({"ukf.mode": "both"})

    def test_every_key_has_default(self):
        assert set(defaults()) == set(SCHEMA)
