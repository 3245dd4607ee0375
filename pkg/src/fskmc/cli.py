"""Command-line interface.

Subcommands::

    fskmc run      --config c.toml [--seed S] [--workers W] [--scheme K] [--output F]
    fskmc compare  --config c.toml ...   # test scheme vs serial reference
    fskmc sweep-dt --config c.toml ...   # weak error vs window length
    fskmc sweep-q  --config c.toml ...   # weak error vs cell size
    fskmc oracle   --config c.toml ...   # exact expectation curve (small N)

Exit codes: 0 success, 2 configuration/usage error, 1 runtime error.
"""

import argparse
import sys
from dataclasses import replace

import numpy as np

from . import harness, oracle
from .errors import ConfigurationError, UsageError
from .harness import (TrajectoryStats, load_config, run_ensemble, sweep_dt,
                      sweep_q, weak_error, write_sweep_csv,
                      write_trajectory_csv, write_weak_error_csv)
from .observables import parse_observables

__all__ = ["cli_main", "main"]


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="fskmc",
        description="fractional-step kinetic Monte Carlo benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
            ("run", "run one ensemble and write the trajectory CSV"),
            ("compare", "weak error of the test scheme vs a serial reference"),
            ("sweep-dt", "weak error across window lengths"),
            ("sweep-q", "weak error across cell sizes"),
            ("oracle", "exact expectation curve from the dense generator")]:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="TOML config file")
        cmd.add_argument("--seed", type=int, default=None,
                         help="override run.seed")
        cmd.add_argument("--workers", type=int, default=None,
                         help="override run.workers")
        cmd.add_argument("--output", default=None,
                         help="output CSV path (default fskmc-<cmd>.csv)")
        cmd.add_argument("--scheme", default=None,
                         choices=["lie", "strang", "random", "ssa"],
                         help="override scheme.kind")
    return parser


def _apply_overrides(cfg, args):
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigurationError(
                f"--workers must be >= 1, got {args.workers}")
        cfg = replace(cfg, workers=args.workers)
    if args.scheme is not None:
        cfg = replace(cfg, scheme=args.scheme)
    harness.validate_config(cfg)
    return cfg


def _reference(cfg):
    ref_cfg = replace(cfg, scheme="ssa", samples=cfg.effective_ref_samples())
    return run_ensemble(ref_cfg, engine="ssa")


def _cmd_run(cfg, out_path):
    stats = run_ensemble(cfg)
    write_trajectory_csv(stats, out_path)
    print(f"wrote {out_path}: scheme={stats.scheme} K={stats.samples} "
          f"grid={len(stats.grid)}")
    return 0


def _cmd_compare(cfg, out_path):
    if cfg.scheme == "ssa":
        raise ConfigurationError("compare needs a split test scheme "
                                 "(lie, strang or random)")
    reference = _reference(cfg)
    test = run_ensemble(cfg, engine="fs")
    rows = []
    for name in test.observables:
        we = weak_error(reference, test, name)
        rows.append((cfg.scheme, cfg.dt, cfg.q, cfg.n_sites, test.samples,
                     reference.samples, name, we))
        print(f"{cfg.scheme} dt={cfg.dt} q={cfg.q} {name}: "
              f"weak error {we.value:.6g} +- {we.stderr:.2g}")
    write_weak_error_csv(rows, out_path)
    return 0


def _cmd_sweep(cfg, out_path, parameter):
    values = cfg.dt_values if parameter == "dt" else cfg.q_values
    if not values:
        raise ConfigurationError(
            f"sweep.{parameter}_values missing from the config")
    reference = _reference(cfg)
    result = sweep_dt(cfg, values, reference) if parameter == "dt" \
        else sweep_q(cfg, values, reference)
    write_sweep_csv(result, cfg.scheme, out_path)
    for value, err, se in result.points():
        print(f"{parameter}={value}: weak error {err:.6g} +- {se:.2g}")
    for value, reason in result.skipped:
        print(f"{parameter}={value}: skipped ({reason})")
    print(f"log-log slope: {result.slope:.4f}")
    return 0


def _cmd_oracle(cfg, out_path):
    if cfg.initial == "random":
        raise ConfigurationError(
            "the oracle needs a deterministic initial configuration")
    model, lat, _ = harness.build_system(cfg)
    obs = parse_observables(cfg.observables)
    gen = oracle.build_generator(model, lat, range(lat.n_sites))
    zeta = np.ones(lat.n_sites, dtype=np.int8) if cfg.initial == "full" \
        else np.zeros(lat.n_sites, dtype=np.int8)
    grid = np.linspace(0.0, cfg.horizon, cfg.grid_points)
    v = oracle._point_mass(zeta, gen.base)
    fvecs = [oracle._observable_vector(o, gen.n_sites, gen.base)
             for o in obs]
    mean = np.empty((len(obs), len(grid)))
    for gi, t in enumerate(grid):
        if gi > 0:
            v = oracle.expm_apply(gen, v, grid[gi] - grid[gi - 1])
        for oi, fv in enumerate(fvecs):
            mean[oi, gi] = fv @ v
    stats = TrajectoryStats(grid=grid,
                            observables=tuple(o.name for o in obs),
                            mean=mean, stderr=np.zeros_like(mean),
                            samples=0, scheme="oracle", dt=0.0, q=0,
                            n_sites=lat.n_sites)
    write_trajectory_csv(stats, out_path)
    print(f"wrote {out_path}: exact curve on {lat.n_sites} sites "
          f"({gen.dim} states)")
    return 0


def cli_main(argv):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        out_path = args.output or f"fskmc-{args.command}.csv"
        if args.command == "run":
            return _cmd_run(cfg, out_path)
        if args.command == "compare":
            return _cmd_compare(cfg, out_path)
        if args.command == "sweep-dt":
            return _cmd_sweep(cfg, out_path, "dt")
        if args.command == "sweep-q":
            return _cmd_sweep(cfg, out_path, "q")
        return _cmd_oracle(cfg, out_path)
    except (ConfigurationError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
