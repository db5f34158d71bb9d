"""Command line interface.

Subcommands::

    rcukf generate --system lorenz --points 700 --seed 0 --out data.csv
    rcukf train    --system lorenz --points 700 --seed 0 --out model.txt [--data data.csv]
    rcukf run      --system lorenz --points 700 --seed 0 --out est.csv [--model model.txt] [--data data.csv]
    rcukf bench    --system lorenz,rossler --points 700,10000 --seed 0,1,2,3,4 --out results/ [--config cfg.txt]
    rcukf report   --out results/report.csv

Every configuration key is also a flag (``--train.ridge 1e-3``). Exit codes:
0 success, 1 configuration error, 2 numerical failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import bench
from .config import SCHEMA, BenchConfig, defaults, load_config, parse_value, resolve
from .errors import ConfigError, NumericalError
from .estimator import RcukfEstimator
from .reservoir import load_reservoir, predict_autonomous, save_reservoir
from .systems import SystemSpec, add_measurement_noise, generate, read_trajectory_csv, write_trajectory_csv
from .ukf import UkfParams

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("rcukf")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--out", required=True, help="output path")
    p.add_argument("-v", "--verbose", action="store_true")
    for key in SCHEMA:
        p.add_argument(f"--{key}", dest=key, metavar="VALUE", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rcukf", description="Reservoir-computing unscented Kalman filter benchmarks")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="simulate a system and write a trajectory CSV")
    _add_config_flags(p)
    p.add_argument("--no-measurements", action="store_true", help="omit the noisy z columns")

    p = sub.add_parser("train", help="train a reservoir on the training split and save it")
    _add_config_flags(p)
    p.add_argument("--data", help="trajectory CSV to train on instead of simulating")

    p = sub.add_parser("run", help="standard RC and RCUKF on the test split of one dataset")
    _add_config_flags(p)
    p.add_argument("--data", help="trajectory CSV (with z columns) instead of simulating")
    p.add_argument("--model", help="trained model file; trains a fresh one when omitted")

    p = sub.add_parser("bench", help="run benchmark cells over seeds and write reports")
    _add_config_flags(p)
    p.add_argument("--trajectories", action="store_true", help="also write per-seed estimate CSVs")

    p = sub.add_parser("report", help="print a summary table from a report CSV")
    p.add_argument("--out", required=True, help="report CSV written by 'bench' (or its directory)")
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _merged_values(args) -> dict:
    values = defaults()
    if args.config:
        values.update(load_config(args.config))
    for key in SCHEMA:
        text = getattr(args, key, None)
        if text is not None:
            values[key] = parse_value(key, text)
    return values


def _single_cell(values: dict) -> tuple[BenchConfig, int]:
    cells = resolve(values)
    if len(cells) != 1:
        raise ConfigError("this command takes exactly one --system and one --points value")
    cfg = cells[0]
    if len(cfg.seeds) != 1:
        raise ConfigError("this command takes exactly one --seed value")
    return cfg, cfg.seeds[0]


def _require(args, *keys) -> None:
    # seed/system/points must be named explicitly (flag or config file)
    missing = [k for k in keys if getattr(args, k, None) is None and not (args.config and k in load_config(args.config))]
    if missing:
        raise ConfigError("missing required flag(s): " + ", ".join(f"--{k}" for k in missing))


def _dataset(cfg: BenchConfig, seed: int, data: Optional[str]):
    """Return (spec, trajectory, measurements) either simulated or read from CSV."""
    spec = SystemSpec(cfg.system, dt=cfg.dt, process_noise_std=cfg.process_std,
                      seed=bench.derive_seed(seed, bench._SYSTEM_STREAM))
    if data:
        traj, z = read_trajectory_csv(data)
        if traj.dim != spec.dim:
            raise ConfigError(f"{data} has {traj.dim} state columns; {cfg.system} needs {spec.dim}")
    else:
        traj = generate(spec, cfg.points)
        z = None
    if z is None:
        z = add_measurement_noise(traj, cfg.measurement_std, bench.derive_seed(seed, bench._MEASUREMENT_STREAM))
    return spec, traj, z


def cmd_generate(args) -> int:
    _require(args, "system", "points", "seed")
    cfg, seed = _single_cell(_merged_values(args))
    spec, traj, z = _dataset(cfg, seed, None)
    write_trajectory_csv(traj, args.out, None if args.no_measurements else z)
    log.info("wrote %d points of %s to %s", len(traj), cfg.system, args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    _require(args, "system", "points", "seed")
    cfg, seed = _single_cell(_merged_values(args))
    _, traj, _ = _dataset(cfg, seed, args.data)
    train, _ = bench.split(traj, cfg.split)
    res = bench.fit_reservoir(cfg, seed, train)
    save_reservoir(res, args.out)
    log.info("trained %d-node reservoir on %d points; saved to %s", res.size, len(train), args.out)
    return EXIT_OK


def cmd_run(args) -> int:
    _require(args, "system", "points", "seed")
    cfg, seed = _single_cell(_merged_values(args))
    spec, traj, z = _dataset(cfg, seed, args.data)
    train, test = bench.split(traj, cfg.split)
    z_test = z[len(train):]
    if args.model:
        res = load_reservoir(args.model)
        if not res.trained:
            raise ConfigError(f"{args.model} holds an untrained reservoir")
        res.reset()
        res.drive(train.states[:-1])
    else:
        res = bench.fit_reservoir(cfg, seed, train)
    rc = predict_autonomous(res.copy(), len(test), train.states[-1])
    est = RcukfEstimator(
        reservoir=res.copy(), noise=bench.noise_model(cfg, spec),
        params=UkfParams(cfg.eta, cfg.kappa, cfg.zeta), P0=cfg.p0 * np.eye(spec.dim), mode=cfg.mode,
    )
    est.warmup(train.states)
    uk = est.run(z_test)
    labels = bench.dim_labels(spec.dim)
    result = bench.SeedResult(seed=seed, rmse={"standard_rc": bench.rmse(test, rc)[0], "rcukf": bench.rmse(test, uk)[0]})
    result.estimates = {"times": test.times, "truth": test.states, "measurements": z_test, "standard_rc": rc, "rcukf": uk}
    cell = bench.CellReport(config=cfg, dims=labels, seeds=[result])
    bench.write_estimates_csv(cell, result, args.out)
    for m in bench.METHODS:
        v = result.rmse[m]
        dims = " ".join(f"{l}={x:.4f}" for l, x in zip(labels, v))
        print(f"{m:12s} {dims} mean={np.mean(v):.4f}")
    return EXIT_OK


def cmd_bench(args) -> int:
    values = _merged_values(args)
    _require(args, "system", "points", "seed")
    cells = resolve(values)
    rep = bench.run_benchmark(cells, keep_estimates=args.trajectories)
    raw = {k: values[k] for k in SCHEMA}
    paths = bench.report_write(rep, args.out, raw_config=raw, trajectories=args.trajectories)
    print(bench.format_table(bench.read_report_csv(paths[0])))
    for cell in rep.cells:
        for r in cell.seeds:
            for m, msg in r.errors.items():
                print(f"FAILED {cell.system}/{cell.regime} seed {r.seed} {m}: {msg}", file=sys.stderr)
    return EXIT_NUMERICAL if rep.partial else EXIT_OK


def cmd_report(args) -> int:
    path = Path(args.out)
    if path.is_dir():
        path = path / "report.csv"
    print(bench.format_table(bench.read_report_csv(path)))
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "run": cmd_run, "bench": cmd_bench, "report": cmd_report}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"rcukf: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"rcukf: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"rcukf: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (KeyError, ValueError) as exc:
        print(f"rcukf: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
