"""Benchmark harness: standard (free-running) RC versus RCUKF.

For every seed of a cell the harness simulates the system, splits it 70/30,
trains one reservoir on the training split and then

* free-runs the reservoir over the test horizon, feeding each prediction
  back as the next input (the standard-RC baseline), and
* filters noisy measurements of the test states with an RCUKF that uses a
  copy of the same reservoir as its process model.

Both estimates are scored by per-dimension RMSE against the simulated states.
"""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .config import BenchConfig, dump_config, split_point
from .errors import ConfigError, NumericalError
from .estimator import RcukfEstimator
from .reservoir import ReservoirConfig, TrainConfig, init_reservoir, predict_autonomous, train_readout
from .systems import SystemSpec, Trajectory, add_measurement_noise, generate
from .ukf import NoiseModel, UkfParams

log = logging.getLogger(__name__)

METHODS = ("standard_rc", "rcukf")
CSV_HEADER = ("system", "regime", "method", "seed", "dim", "rmse")

# stream tags for deriving independent generators from one user seed
_SYSTEM_STREAM, _RESERVOIR_STREAM, _MEASUREMENT_STREAM = 0, 1, 2


def derive_seed(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([seed, stream]).generate_state(1, np.uint64)[0])


def dim_labels(d: int) -> tuple[str, ...]:
    return ("x", "y", "z")[:d] if d <= 3 else tuple(f"x{i}" for i in range(d))


def split(traj: Trajectory, fraction: float) -> tuple[Trajectory, Trajectory]:
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"split fraction must lie in (0, 1), got {fraction}")
    cut = split_point(len(traj), fraction)
    return traj[:cut], traj[cut:]


def rmse(truth, estimate) -> tuple[np.ndarray, float]:
    """Per-dimension RMSE and its arithmetic mean over dimensions."""
    truth = np.asarray(truth.states if isinstance(truth, Trajectory) else truth, dtype=float)
    estimate = np.asarray(estimate.states if isinstance(estimate, Trajectory) else estimate, dtype=float)
    if truth.ndim == 1:
        truth = truth[:, None]
    if estimate.ndim == 1:
        estimate = estimate[:, None]
    if truth.shape != estimate.shape:
        raise ValueError(f"shape mismatch: truth {truth.shape} vs estimate {estimate.shape}")
    if len(truth) == 0:
        raise ValueError("RMSE of empty trajectories is undefined")
    per_dim = np.sqrt(np.mean((truth - estimate) ** 2, axis=0))
    return per_dim, float(np.mean(per_dim))


@dataclass
class SeedResult:
    seed: int
    rmse: dict[str, Optional[np.ndarray]] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    estimates: Optional[dict[str, np.ndarray]] = None

    def mean(self, method: str) -> float:
        v = self.rmse.get(method)
        return float("nan") if v is None else float(np.mean(v))


@dataclass
class CellReport:
    config: BenchConfig
    dims: tuple[str, ...]
    seeds: list[SeedResult]

    @property
    def system(self) -> str:
        return self.config.system

    @property
    def regime(self) -> str:
        return self.config.regime

    @property
    def partial(self) -> bool:
        return any(r.errors for r in self.seeds)

    def per_seed(self, method: str) -> np.ndarray:
        """Array (n_seeds, n_dims + 1) of per-dimension RMSEs with the mean as last column."""
        rows = []
        for r in self.seeds:
            v = r.rmse.get(method)
            if v is None:
                rows.append(np.full(len(self.dims) + 1, np.nan))
            else:
                rows.append(np.append(v, np.mean(v)))
        return np.array(rows)

    def median(self, method: str) -> np.ndarray:
        vals = self.per_seed(method)
        ok = ~np.isnan(vals[:, -1])
        if not np.any(ok):
            return np.full(vals.shape[1], np.nan)
        return np.median(vals[ok], axis=0)

    def wins(self) -> int:
        """Seeds where RCUKF mean RMSE is below standard RC's."""
        rc = self.per_seed("standard_rc")[:, -1]
        uk = self.per_seed("rcukf")[:, -1]
        return int(np.sum(uk < rc))


@dataclass
class BenchReport:
    cells: list[CellReport]

    def cell(self, system: str, regime: Union[str, int]) -> CellReport:
        for c in self.cells:
            if c.system == system and c.regime == str(regime):
                return c
        raise KeyError((system, regime))

    @property
    def partial(self) -> bool:
        return any(c.partial for c in self.cells)


def fit_reservoir(cfg: BenchConfig, seed: int, train: Trajectory):
    """Draw the seed's reservoir and fit its readout for one-step-ahead prediction on ``train``."""
    d = train.dim
    rcfg = ReservoirConfig(
        reservoir_size=cfg.reservoir_size,
        input_dim=d,
        output_dim=d,
        leak_rate=cfg.leak_rate,
        spectral_radius=cfg.spectral_radius,
        input_scale=cfg.input_scale,
        connectivity=cfg.connectivity,
        seed=derive_seed(seed, _RESERVOIR_STREAM),
    )
    res = init_reservoir(rcfg)
    return train_readout(res, train.states[:-1], train.states[1:], TrainConfig(ridge=cfg.ridge, washout=cfg.washout))


def noise_model(cfg: BenchConfig, spec: SystemSpec) -> NoiseModel:
    """Filter noise from the generating spec unless overridden.

    Q is the process-noise intensity integrated over one step (std^2 * dt);
    R is the sensor variance.
    """
    d = spec.dim
    q = cfg.q_var if cfg.q_var is not None else cfg.process_std**2 * spec.dt
    r = cfg.r_var if cfg.r_var is not None else cfg.measurement_std**2
    return NoiseModel.isotropic(d, q, d, r)


def run_seed(cfg: BenchConfig, seed: int, keep_estimates: bool = False) -> SeedResult:
    out = SeedResult(seed=seed)
    clock = time.perf_counter
    t0 = clock()
    try:
        spec = SystemSpec(cfg.system, dt=cfg.dt, process_noise_std=cfg.process_std, seed=derive_seed(seed, _SYSTEM_STREAM))
        train, test = split(generate(spec, cfg.points), cfg.split)
        res = fit_reservoir(cfg, seed, train)
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        for m in METHODS:
            out.rmse[m] = None
            out.errors[m] = f"setup: {exc}"
        return out
    out.timings["train"] = clock() - t0
    z = add_measurement_noise(test, cfg.measurement_std, derive_seed(seed, _MEASUREMENT_STREAM))
    estimates = {"truth": test.states, "measurements": z, "times": test.times}

    t0 = clock()
    try:
        rc = predict_autonomous(res.copy(), len(test), train.states[-1])
        if not np.all(np.isfinite(rc)):
            raise NumericalError("standard RC produced non-finite predictions")
        out.rmse["standard_rc"] = rmse(test.states, rc)[0]
        estimates["standard_rc"] = rc
    except (NumericalError, FloatingPointError) as exc:
        out.rmse["standard_rc"] = None
        out.errors["standard_rc"] = str(exc)
    out.timings["standard_rc"] = clock() - t0

    t0 = clock()
    try:
        est = RcukfEstimator(
            reservoir=res.copy(),
            noise=noise_model(cfg, spec),
            params=UkfParams(eta=cfg.eta, kappa=cfg.kappa, zeta=cfg.zeta),
            P0=cfg.p0 * np.eye(spec.dim),
            mode=cfg.mode,
        )
        est.warmup(train.states)
        uk = est.run(z)
        out.rmse["rcukf"] = rmse(test.states, uk)[0]
        estimates["rcukf"] = uk
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        out.rmse["rcukf"] = None
        out.errors["rcukf"] = str(exc)
    out.timings["rcukf"] = clock() - t0
    if keep_estimates:
        out.estimates = estimates
    for m, msg in out.errors.items():
        log.warning("%s/%s seed %d: %s failed: %s", cfg.system, cfg.regime, seed, m, msg)
    return out


def _job(args):
    cfg, seed, keep = args
    return run_seed(cfg, seed, keep)


def run_benchmark(
    cfgs: Union[BenchConfig, Sequence[BenchConfig]], keep_estimates: bool = False
) -> BenchReport:
    """Run every (cell, seed) job and assemble the report in config/seed order."""
    if isinstance(cfgs, BenchConfig):
        cfgs = [cfgs]
    jobs = [(c, s, keep_estimates) for c in cfgs for s in c.seeds]
    workers = max(c.workers for c in cfgs) if cfgs else 1
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]
    cells = []
    i = 0
    for c in cfgs:
        n = len(c.seeds)
        d = SystemSpec(c.system).dim
        cells.append(CellReport(config=c, dims=dim_labels(d), seeds=results[i : i + n]))
        i += n
    return BenchReport(cells)


def _fmt(v: float) -> str:
    return "nan" if v is None or not np.isfinite(v) else repr(float(v))


def report_rows(rep: BenchReport) -> Iterable[tuple[str, ...]]:
    for cell in rep.cells:
        for method in METHODS:
            for r in cell.seeds:
                v = r.rmse.get(method)
                if v is None:
                    yield (cell.system, cell.regime, method, str(r.seed), "failed", "nan")
                    continue
                for label, x in zip(cell.dims, v):
                    yield (cell.system, cell.regime, method, str(r.seed), label, _fmt(x))
                yield (cell.system, cell.regime, method, str(r.seed), "mean", _fmt(np.mean(v)))
            med = cell.median(method)
            for label, x in zip((*cell.dims, "mean"), med):
                yield (cell.system, cell.regime, method, "median", label, _fmt(x))


def write_report_csv(rep: BenchReport, path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        w.writerows(report_rows(rep))
    return path


def read_report_csv(path) -> list[dict]:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        rows = []
        for row in reader:
            row["rmse"] = float(row["rmse"])
            rows.append(row)
    return rows


def report_kv(rep: BenchReport, raw_config: Optional[dict] = None) -> str:
    """Structured ``key = value`` report: config echo, per-seed results, medians, timings."""
    lines = []
    if raw_config is not None:
        for line in dump_config(raw_config).splitlines():
            lines.append(f"config.{line}")
    for ci, cell in enumerate(rep.cells):
        pre = f"cell.{ci}"
        for k, v in cell.config.as_dict().items():
            if isinstance(v, tuple):
                v = ",".join(str(s) for s in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{pre}.config.{k} = {'auto' if v is None else v}")
        lines.append(f"{pre}.status = {'partial' if cell.partial else 'complete'}")
        lines.append(f"{pre}.wins = {cell.wins()}")
        for r in cell.seeds:
            for method in METHODS:
                v = r.rmse.get(method)
                key = f"{pre}.seed.{r.seed}.{method}"
                if v is None:
                    lines.append(f"{key}.error = {r.errors.get(method, 'unknown')}")
                else:
                    for label, x in zip((*cell.dims, "mean"), np.append(v, np.mean(v))):
                        lines.append(f"{key}.{label} = {_fmt(x)}")
            for phase, secs in r.timings.items():
                lines.append(f"{pre}.seed.{r.seed}.seconds.{phase} = {secs:.3f}")
        for method in METHODS:
            for label, x in zip((*cell.dims, "mean"), cell.median(method)):
                lines.append(f"{pre}.median.{method}.{label} = {_fmt(x)}")
    return "\n".join(lines) + "\n"


def parse_kv(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def write_estimates_csv(cell: CellReport, result: SeedResult, path) -> Path:
    """Per-step truth, measurements and both estimates for plotting."""
    e = result.estimates
    d = len(cell.dims)
    header = ["t"] + [f"x{i}" for i in range(d)] + [f"z{i}" for i in range(d)]
    cols = [e["times"][:, None], e["truth"], e["measurements"]]
    for method, tag in (("standard_rc", "rc"), ("rcukf", "ukf")):
        if method in e:
            header += [f"{tag}{i}" for i in range(d)]
            cols.append(e[method])
    data = np.hstack(cols)
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in data:
            w.writerow([repr(float(v)) for v in row])
    return path


def report_write(rep: BenchReport, out_dir, raw_config: Optional[dict] = None, trajectories: bool = False) -> list[Path]:
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = [write_report_csv(rep, out_dir / "report.csv")]
        kv = out_dir / "report.txt"
        kv.write_text(report_kv(rep, raw_config), encoding="utf-8")
        paths.append(kv)
        if raw_config is not None:
            cfg_path = out_dir / "config.txt"
            cfg_path.write_text(dump_config(raw_config), encoding="utf-8")
            paths.append(cfg_path)
        if trajectories:
            for cell in rep.cells:
                for r in cell.seeds:
                    if r.estimates is not None:
                        name = f"estimates_{cell.system}_{cell.regime}_seed{r.seed}.csv"
                        paths.append(write_estimates_csv(cell, r, out_dir / name))
    except OSError as exc:
        raise OSError(f"writing report to {out_dir}: {exc}") from exc
    return paths


def format_table(rows: list[dict]) -> str:
    """Median rows of a report CSV laid out like a method x metric x system table."""
    systems = list(dict.fromkeys(r["system"] for r in rows))
    blocks = list(dict.fromkeys((r["method"], r["regime"]) for r in rows))
    med = {(r["system"], r["regime"], r["method"], r["dim"]): r["rmse"] for r in rows if r["seed"] == "median"}
    width = 14
    out = ["Metric".ljust(12) + "".join(s.ljust(width) for s in systems)]
    for method, regime in blocks:
        out.append(f"-- {method} ({regime} points) --")
        for dim, label in (("x", "RMSE-X"), ("y", "RMSE-Y"), ("z", "RMSE-Z"), ("mean", "Mean RMSE")):
            cells = []
            for s in systems:
                v = med.get((s, regime, method, dim))
                cells.append(("" if v is None else f"{v:.4f}").ljust(width))
            if any(c.strip() for c in cells):
                out.append(label.ljust(12) + "".join(cells))
    return "\n".join(out)
