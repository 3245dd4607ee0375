"""Ensemble runner, weak-error estimator, and convergence studies.

Config files are flat TOML with dotted sections, e.g.::

    model.kind = "spinflip"
    model.beta = 15.0
    model.J = 0.37
    model.h = 0.5
    model.ca = 1.0
    model.cd = 1.0
    lattice.length = 800
    decomposition.q = 100
    scheme.kind = "lie"          # lie | strang | random | ssa
    scheme.dt = 0.5
    run.horizon = 4.0
    run.samples = 100000
    run.seed = 7
    observables = "coverage,correlation:1"

Replicas are embarrassingly parallel: fixed-size replica chunks are
distributed over worker threads and the per-chunk sums are reduced in
chunk order, so outputs are byte-identical for every worker count.

The weak error between a reference and a test trajectory is the
trapezoidal quadrature of |mean_ref(t) - mean_test(t)| over the grid.
Its standard error is propagated first order and conservatively as the
same quadrature applied to sqrt(SE_ref^2 + SE_test^2), i.e. ignoring
cancellation across grid times.
"""

import csv
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import _kernels, scheduler
from .errors import ConfigurationError, UsageError
from .lattice import build_lattice, decompose
from .models import (ArrheniusSpinFlipModel, KawasakiExchangeModel,
                     interaction_range)
from .observables import parse_observables

__all__ = ["RunConfig", "TrajectoryStats", "WeakError", "SweepResult",
           "load_config", "run_ensemble", "weak_error", "fit_loglog",
           "sweep_dt", "sweep_q", "write_trajectory_csv", "write_sweep_csv",
           "write_weak_error_csv"]

CHUNK = 1024  # replica block size; fixed so outputs never depend on workers

# "random" draws a fresh fill per replica; "random-shared" derives one fill
# from the seed and reuses it for every replica.  A shared fill is the one
# that breaks the group-swapping translation symmetry of the stripe
# decomposition -- with a symmetric initial state (empty, full, or i.i.d.
# random in distribution) the leading splitting-error term of coverage-like
# observables cancels and the Lie scheme looks second order.
INIT_CODES = {"empty": _kernels.INIT_EMPTY, "full": _kernels.INIT_FULL,
              "random": _kernels.INIT_RANDOM,
              "random-shared": _kernels.INIT_EXPLICIT}

SHARED_FILL_WORD = 0xFFFFFFFFFFFFFFFF  # replica word of the shared fill


@dataclass(frozen=True)
class RunConfig:
    model_kind: str = "spinflip"
    beta: float = 1.0
    coupling: float = 0.0
    field: float = 0.0
    ca: float = 1.0
    cd: float = 1.0
    ch: float = 1.0
    dimension: int = 1
    lengths: tuple = ()
    q: int = 0                  # 0 = no decomposition (serial runs)
    scheme: str = "lie"         # lie | strang | random | ssa
    dt: float = 0.0
    p: float = 0.5
    mode: str = "rescaled"
    horizon: float = 0.0
    grid_points: int = 101
    samples: int = 1
    ref_samples: int = 0        # 0 = 10 * samples
    seed: int = 0
    workers: int = 0            # 0 = scheduler default
    initial: str = "empty"
    observables: str = "coverage"
    dt_values: tuple = ()
    q_values: tuple = ()

    @property
    def n_sites(self):
        n = 1
        for v in self.lengths:
            n *= v
        return n

    def effective_workers(self):
        return self.workers if self.workers >= 1 \
            else scheduler.get_worker_count()

    def effective_ref_samples(self):
        return self.ref_samples if self.ref_samples >= 1 \
            else 10 * self.samples


_SCHEMA = {
    ("model", "kind"): ("model_kind", str),
    ("model", "beta"): ("beta", float),
    ("model", "J"): ("coupling", float),
    ("model", "h"): ("field", float),
    ("model", "ca"): ("ca", float),
    ("model", "cd"): ("cd", float),
    ("model", "ch"): ("ch", float),
    ("lattice", "dimension"): ("dimension", int),
    ("lattice", "length"): ("lengths", "length"),
    ("lattice", "lengths"): ("lengths", "lengths"),
    ("decomposition", "q"): ("q", int),
    ("scheme", "kind"): ("scheme", str),
    ("scheme", "dt"): ("dt", float),
    ("scheme", "p"): ("p", float),
    ("scheme", "mode"): ("mode", str),
    ("run", "horizon"): ("horizon", float),
    ("run", "grid"): ("grid_points", int),
    ("run", "samples"): ("samples", int),
    ("run", "ref_samples"): ("ref_samples", int),
    ("run", "seed"): ("seed", int),
    ("run", "workers"): ("workers", int),
    ("run", "initial"): ("initial", str),
    (None, "observables"): ("observables", str),
    ("sweep", "dt_values"): ("dt_values", "floats"),
    ("sweep", "q_values"): ("q_values", "ints"),
}


def _coerce(kind, value):
    if kind is float:
        out = float(value)
        if not math.isfinite(out):
            raise ValueError("not finite")
        return out
    if kind is int:
        if isinstance(value, bool) or int(value) != value:
            raise ValueError("not an integer")
        return int(value)
    if kind is str:
        if not isinstance(value, str):
            raise ValueError("not a string")
        return value
    if kind == "length":
        return (int(value),)
    if kind == "lengths":
        return tuple(int(v) for v in value)
    if kind == "floats":
        return tuple(float(v) for v in value)
    if kind == "ints":
        return tuple(int(v) for v in value)
    raise ValueError(f"unhandled kind {kind}")


def config_from_dict(data):
    """RunConfig from a parsed TOML dict; collects every offending key."""
    fields = {}
    bad = []
    for section, content in data.items():
        if isinstance(content, dict):
            for key, value in content.items():
                spec = _SCHEMA.get((section, key))
                if spec is None:
                    bad.append((f"{section}.{key}", "unknown key"))
                    continue
                try:
                    fields[spec[0]] = _coerce(spec[1], value)
                except (TypeError, ValueError) as exc:
                    bad.append((f"{section}.{key}", str(exc) or "bad value"))
        else:
            spec = _SCHEMA.get((None, section))
            if spec is None:
                bad.append((section, "unknown key"))
                continue
            try:
                fields[spec[0]] = _coerce(spec[1], content)
            except (TypeError, ValueError) as exc:
                bad.append((section, str(exc) or "bad value"))
    if bad:
        detail = "; ".join(f"{k}: {why}" for k, why in bad)
        raise ConfigurationError(f"invalid config: {detail}",
                                 keys=[k for k, _ in bad])
    cfg = RunConfig(**fields)
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    bad = []
    if cfg.model_kind not in ("spinflip", "kawasaki"):
        bad.append(("model.kind", f"unknown model {cfg.model_kind!r}"))
    if not cfg.lengths:
        bad.append(("lattice.length", "missing"))
    if cfg.dimension not in (1, 2):
        bad.append(("lattice.dimension", "must be 1 or 2"))
    elif cfg.lengths and len(cfg.lengths) != cfg.dimension:
        bad.append(("lattice.lengths",
                    f"need {cfg.dimension} entries, got {len(cfg.lengths)}"))
    if cfg.scheme not in ("lie", "strang", "random", "ssa"):
        bad.append(("scheme.kind", f"unknown scheme {cfg.scheme!r}"))
    if cfg.scheme != "ssa":
        if not cfg.dt > 0:
            bad.append(("scheme.dt", "must be > 0 for split schemes"))
        if cfg.q <= 0:
            bad.append(("decomposition.q", "required for split schemes"))
    if not 0.0 <= cfg.p <= 1.0:
        bad.append(("scheme.p", "must be in [0, 1]"))
    if cfg.mode not in ("raw", "rescaled"):
        bad.append(("scheme.mode", "must be raw or rescaled"))
    if cfg.horizon < 0:
        bad.append(("run.horizon", "must be >= 0"))
    if cfg.samples < 1:
        bad.append(("run.samples", "must be >= 1"))
    if cfg.grid_points < 2:
        bad.append(("run.grid", "must be >= 2"))
    if cfg.initial not in INIT_CODES:
        bad.append(("run.initial",
                    "must be empty, full, random or random-shared"))
    if cfg.workers < 0:
        bad.append(("run.workers", "must be >= 1"))
    if bad:
        detail = "; ".join(f"{k}: {why}" for k, why in bad)
        raise ConfigurationError(f"invalid config: {detail}",
                                 keys=[k for k, _ in bad])
    return cfg


def load_config(path):
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"config parse error in {path}: {exc}")
    return config_from_dict(data)


def build_model(cfg):
    if cfg.model_kind == "spinflip":
        return ArrheniusSpinFlipModel(beta=cfg.beta, coupling=cfg.coupling,
                                      field=cfg.field, ca=cfg.ca, cd=cfg.cd)
    return KawasakiExchangeModel(beta=cfg.beta, coupling=cfg.coupling,
                                 ch=cfg.ch)


def build_system(cfg):
    """(model, lattice, decomposition-or-None) for a config."""
    model = build_model(cfg)
    lat = build_lattice(cfg.dimension, cfg.lengths)
    dec = None
    if cfg.q > 0:
        dec = decompose(lat, cfg.q, interaction_range(model))
    return model, lat, dec


@dataclass(frozen=True)
class TrajectoryStats:
    grid: np.ndarray
    observables: tuple          # names, in column order
    mean: np.ndarray            # (n_obs, G)
    stderr: np.ndarray          # (n_obs, G)
    samples: int
    scheme: str
    dt: float                   # 0 for serial runs
    q: int                      # 0 for serial runs
    n_sites: int

    def column(self, observable):
        if observable is None:
            return 0
        if observable not in self.observables:
            raise UsageError(f"observable {observable!r} not recorded "
                             f"(have {self.observables})")
        return self.observables.index(observable)


def run_ensemble(cfg, engine=None):
    """Monte Carlo ensemble of K replicas; deterministic per (seed, cfg).

    ``engine`` is "ssa" or "fs"; by default it follows cfg.scheme.  The
    serial engine ignores the decomposition and schedule.
    """
    validate_config(cfg)
    if engine is None:
        engine = "ssa" if cfg.scheme == "ssa" else "fs"
    if engine not in ("ssa", "fs"):
        raise UsageError(f"engine must be ssa or fs, got {engine!r}")
    model, lat, dec = build_system(cfg)
    obs = parse_observables(cfg.observables)
    grid = np.linspace(0.0, cfg.horizon, cfg.grid_points)
    n_obs = len(obs)
    k_samples = cfg.samples
    label = "ssa" if engine == "ssa" else cfg.scheme

    if cfg.horizon == 0.0:
        sigma0 = _initial_for_t0(cfg, lat)
        mean = np.tile(np.array([[o(sigma0)] for o in obs]),
                       (1, cfg.grid_points))
        stderr = np.zeros_like(mean)
        if cfg.initial == "random" and k_samples > 1:
            return _t0_random_stats(cfg, lat, obs, grid, label)
        return TrajectoryStats(grid=grid, observables=_names(obs),
                               mean=mean, stderr=stderr, samples=k_samples,
                               scheme=label, dt=0.0, q=0,
                               n_sites=lat.n_sites)

    obs_codes = np.array([o.kernel_code for o in obs], dtype=np.int64)
    obs_params = np.array([o.param for o in obs], dtype=np.int64)
    nbr = lat.neighbor_table()
    params = model.kernel_params()
    init_mode = INIT_CODES[cfg.initial]
    sigma_init = initial_configuration(cfg, lat)
    base_seed = np.uint64(cfg.seed & 0xFFFFFFFFFFFFFFFF)

    if engine == "fs":
        if dec is None:
            raise ConfigurationError("split runs need decomposition.q")
        sched = scheduler.Schedule(kind=cfg.scheme, dt=cfg.dt, p=cfg.p,
                                   mode=cfg.mode)
        scheduler.window_count(sched, cfg.horizon)  # validates divisibility
        sched_code = scheduler.SCHED_CODES[cfg.scheme]
        args = (sigma_init, init_mode, model.kernel_code, params, nbr,
                dec.cells, dec.group1, dec.group2, sched_code, cfg.dt,
                cfg.p, cfg.mode == "rescaled", grid, obs_codes, obs_params,
                base_seed)
        runner = _kernels.run_fs_chunk
    else:
        args = (sigma_init, init_mode, model.kernel_code, params, nbr,
                grid, obs_codes, obs_params, base_seed)
        runner = _kernels.run_ssa_chunk

    chunks = [(lo, min(lo + CHUNK, k_samples))
              for lo in range(0, k_samples, CHUNK)]

    def run_chunk(bounds):
        lo, hi = bounds
        acc_sum = np.zeros((cfg.grid_points, n_obs))
        acc_sq = np.zeros((cfg.grid_points, n_obs))
        runner(lo, hi, acc_sum, acc_sq, *args)
        return acc_sum, acc_sq

    workers = cfg.effective_workers()
    if workers == 1 or len(chunks) == 1:
        results = [run_chunk(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_chunk, chunks))

    total = np.zeros((cfg.grid_points, n_obs))
    total_sq = np.zeros((cfg.grid_points, n_obs))
    for acc_sum, acc_sq in results:  # fixed chunk order: deterministic
        total += acc_sum
        total_sq += acc_sq

    mean = total / k_samples
    if k_samples > 1:
        var = np.maximum(total_sq - total * total / k_samples, 0.0) \
            / (k_samples - 1)
        stderr = np.sqrt(var / k_samples)
    else:
        stderr = np.zeros_like(mean)
    return TrajectoryStats(grid=grid, observables=_names(obs),
                           mean=mean.T.copy(), stderr=stderr.T.copy(),
                           samples=k_samples, scheme=label,
                           dt=cfg.dt if engine == "fs" else 0.0,
                           q=cfg.q if engine == "fs" else 0,
                           n_sites=lat.n_sites)


def _names(obs):
    return tuple(o.name for o in obs)


def initial_configuration(cfg, lat):
    """The deterministic initial fill (zeros placeholder for per-replica
    random mode; the kernels then draw their own)."""
    if cfg.initial == "full":
        return np.ones(lat.n_sites, dtype=np.int8)
    if cfg.initial == "random-shared":
        return shared_random_fill(cfg.seed, lat.n_sites)
    return np.zeros(lat.n_sites, dtype=np.int8)


def shared_random_fill(seed, n_sites, fill=0.5):
    """One Bernoulli(fill) configuration derived from the seed alone."""
    from ._rng import DOMAIN_INIT, make_state, next_uniform
    st = make_state(seed, SHARED_FILL_WORD, DOMAIN_INIT)
    return np.array([1 if next_uniform(st) < fill else 0
                     for _ in range(n_sites)], dtype=np.int8)


def _initial_for_t0(cfg, lat):
    return initial_configuration(cfg, lat)


def _t0_random_stats(cfg, lat, obs, grid, label):
    # horizon 0 with random fills: average the observables of the fills
    from ._rng import DOMAIN_INIT, make_state, next_uniform
    vals = np.empty((cfg.samples, len(obs)))
    for rep in range(cfg.samples):
        st = make_state(cfg.seed, rep, DOMAIN_INIT)
        sig = np.array([1 if next_uniform(st) < 0.5 else 0
                        for _ in range(lat.n_sites)], dtype=np.int8)
        vals[rep] = [o(sig) for o in obs]
    mean = np.tile(vals.mean(axis=0)[:, None], (1, cfg.grid_points))
    se = np.tile((vals.std(axis=0, ddof=1) / math.sqrt(cfg.samples))[:, None],
                 (1, cfg.grid_points))
    return TrajectoryStats(grid=grid, observables=_names(obs), mean=mean,
                           stderr=se, samples=cfg.samples, scheme=label,
                           dt=0.0, q=0, n_sites=lat.n_sites)


@dataclass(frozen=True)
class WeakError:
    value: float
    stderr: float


def _trapezoid_weights(grid):
    w = np.zeros(len(grid))
    diffs = np.diff(grid)
    w[:-1] += diffs / 2
    w[1:] += diffs / 2
    return w


def weak_error(ref, test, observable=None):
    """Integrated absolute mean difference over the common grid."""
    if len(ref.grid) != len(test.grid) or \
            not np.array_equal(ref.grid, test.grid):
        raise UsageError("weak_error needs identical grids")
    ci = ref.column(observable)
    cj = test.column(observable)
    if ref.observables[ci] != test.observables[cj]:
        raise UsageError("weak_error needs a common observable")
    w = _trapezoid_weights(ref.grid)
    diff = np.abs(ref.mean[ci] - test.mean[cj])
    pointwise_se = np.sqrt(ref.stderr[ci] ** 2 + test.stderr[cj] ** 2)
    return WeakError(value=float(w @ diff), stderr=float(w @ pointwise_se))


def fit_loglog(xs, ys):
    """Least-squares slope/intercept of log(y) against log(x)."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if len(xs) < 2:
        raise UsageError("need at least two points for a slope")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise UsageError("log-log fit needs positive values")
    slope, intercept = np.polyfit(np.log(xs), np.log(ys), 1)
    return float(slope), float(intercept)


@dataclass(frozen=True)
class SweepResult:
    parameter: str              # "dt" or "q"
    values: tuple
    errors: tuple
    stderrs: tuple
    slope: float
    intercept: float
    skipped: tuple              # (value, reason) pairs

    def points(self):
        return list(zip(self.values, self.errors, self.stderrs))


def _sweep(cfg, parameter, values, reference, observable=None):
    points, skipped = [], []
    for value in values:
        trial = replace(cfg, dt=float(value)) if parameter == "dt" \
            else replace(cfg, q=int(value))
        try:
            sched = scheduler.Schedule(kind=trial.scheme, dt=trial.dt,
                                       p=trial.p, mode=trial.mode)
            scheduler.window_count(sched, trial.horizon)
            if parameter == "q":
                model = build_model(trial)
                lat = build_lattice(trial.dimension, trial.lengths)
                decompose(lat, trial.q, interaction_range(model))
        except ConfigurationError as exc:
            skipped.append((value, str(exc)))
            continue
        stats = run_ensemble(trial, engine="fs")
        err = weak_error(reference, stats, observable)
        points.append((value, err.value, err.stderr))
    if len(points) >= 2:
        slope, intercept = fit_loglog([p[0] for p in points],
                                      [p[1] for p in points])
    else:
        slope = intercept = float("nan")
    return SweepResult(parameter=parameter,
                       values=tuple(p[0] for p in points),
                       errors=tuple(p[1] for p in points),
                       stderrs=tuple(p[2] for p in points),
                       slope=slope, intercept=intercept,
                       skipped=tuple(skipped))


def sweep_dt(cfg, dt_values, reference, observable=None):
    """Weak error per window length, plus the fitted log-log slope."""
    if cfg.scheme == "ssa":
        raise ConfigurationError("sweep-dt needs a split scheme")
    return _sweep(cfg, "dt", dt_values, reference, observable)


def sweep_q(cfg, q_values, reference, observable=None):
    """Weak error per cell size at fixed dt, plus the log-log slope."""
    if cfg.scheme == "ssa":
        raise ConfigurationError("sweep-q needs a split scheme")
    return _sweep(cfg, "q", q_values, reference, observable)


def _fmt(x):
    return repr(float(x))


def write_trajectory_csv(stats, path_or_handle):
    """CSV rows: scheme,dt,q,N,K,time,observable,mean,stderr.

    dt and q are empty for serial/oracle rows.  Identical stats give
    byte-identical files.
    """
    def emit(fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["scheme", "dt", "q", "N", "K", "time",
                         "observable", "mean", "stderr"])
        dt = _fmt(stats.dt) if stats.dt else ""
        q = str(stats.q) if stats.q else ""
        for oi, name in enumerate(stats.observables):
            for gi, t in enumerate(stats.grid):
                writer.writerow([stats.scheme, dt, q, stats.n_sites,
                                 stats.samples, _fmt(t), name,
                                 _fmt(stats.mean[oi, gi]),
                                 _fmt(stats.stderr[oi, gi])])
    _write(path_or_handle, emit)


def write_weak_error_csv(rows, path_or_handle):
    """Rows of (scheme, dt, q, N, K_test, K_ref, observable, WeakError)."""
    def emit(fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["scheme", "dt", "q", "N", "K_test", "K_ref",
                         "observable", "weak_error", "stderr"])
        for scheme, dt, q, n, kt, kr, obs, we in rows:
            writer.writerow([scheme, _fmt(dt) if dt else "",
                             str(q) if q else "", n, kt, kr, obs,
                             _fmt(we.value), _fmt(we.stderr)])
    _write(path_or_handle, emit)


def write_sweep_csv(result, scheme, path_or_handle):
    """Sweep points with the fitted slope repeated on every row."""
    def emit(fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["scheme", "parameter", "value", "weak_error",
                         "stderr", "slope", "intercept"])
        for value, err, se in result.points():
            writer.writerow([scheme, result.parameter, _fmt(value),
                             _fmt(err), _fmt(se), _fmt(result.slope),
                             _fmt(result.intercept)])
        for value, reason in result.skipped:
            writer.writerow([scheme, result.parameter, _fmt(value),
                             "skipped", reason, "", ""])
    _write(path_or_handle, emit)


def _write(path_or_handle, emit):
    if hasattr(path_or_handle, "write"):
        emit(path_or_handle)
    else:
        with open(path_or_handle, "w", newline="") as fh:
            emit(fh)
