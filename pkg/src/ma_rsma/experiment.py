"""Config-driven Monte Carlo sweeps over transmit power or aperture size.

A sweep runs every scheme on the same random scenarios: at a fixed
(axis value, trial) pair the scenario seed is derived from the base seed
alone, so all schemes face an identical channel draw and the per-trial
rate differences are paired.  Results land in ``rows.csv`` (one row per
scheme and trial), ``summary.csv`` (means, standard errors and percent
gain over the fixed-antenna baseline) and ``config.echo.json`` (the
fully resolved configuration).
"""

import csv
import json
import logging
import time
from dataclasses import dataclass, field, fields, replace
from multiprocessing import Pool
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .channel import (SystemParams, dbm_to_watts, derive_seed,
                      generate_scenario, watts_to_dbm)
from .driver import SCHEMES, OptimizerConfig, run
from .solver import SolverConfig, SolverError

log = logging.getLogger(__name__)

AXES = ("power_dbm", "aperture_wavelengths")

ROWS_HEADER = ("scheme", "axis", "trial", "seed",
               "sum_rate_bps_hz", "outer_iters", "wall_ms")
SUMMARY_HEADER = ("scheme", "axis", "n", "failures", "mean_sum_rate_bps_hz",
                  "stderr_sum_rate_bps_hz", "gain_pct_vs_fpa")


class ConfigError(ValueError):
    """Raised when an experiment config fails validation."""


@dataclass
class ExperimentConfig:
    """A sweep: one axis, its values, and everything held fixed."""

    axis: str
    axis_values: tuple
    system: SystemParams = field(default_factory=SystemParams)
    schemes: tuple = SCHEMES
    num_trials: int = 50
    base_seed: int = 0
    out_dir: str = "runs/sweep"
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    notes: str = ""

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError("axis must be one of %s" % (AXES,))
        values = tuple(float(v) for v in self.axis_values)
        if not values:
            raise ConfigError("axis_values must be nonempty")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ConfigError("axis_values must be strictly increasing")
        self.axis_values = values
        schemes = tuple(self.schemes)
        if not schemes or len(set(schemes)) != len(schemes):
            raise ConfigError("schemes must be nonempty and unique")
        unknown = set(schemes) - set(SCHEMES)
        if unknown:
            raise ConfigError("unknown schemes: %s" % sorted(unknown))
        self.schemes = schemes
        if self.num_trials < 1:
            raise ConfigError("num_trials must be >= 1")
        for value in values:
            try:
                self.point_params(value)
            except ValueError as exc:
                raise ConfigError("axis value %g: %s" % (value, exc)) from exc

    def point_params(self, value):
        """SystemParams at one sweep point."""
        if self.axis == "power_dbm":
            return replace(self.system, power_budget_w=dbm_to_watts(value))
        x_max = self.system.x_min + value * self.system.wavelength
        return replace(self.system, x_max=x_max)


@dataclass
class SweepRow:
    """One optimizer run: scheme, sweep point, trial and its outcome."""

    scheme: str
    axis: float
    trial: int
    seed: int
    sum_rate_bps_hz: float
    outer_iters: int
    wall_ms: float


@dataclass
class SummaryRow:
    """Per (scheme, sweep point) aggregate.  ``gain_pct_vs_fpa`` is None
    when the baseline is absent or its mean is zero."""

    scheme: str
    axis: float
    n: int
    failures: int
    mean_sum_rate_bps_hz: float
    stderr_sum_rate_bps_hz: float
    gain_pct_vs_fpa: float | None


def _coerce(doc, section, builders):
    """Apply per-key builders to a config section, rejecting unknown keys."""
    doc = dict(doc)
    out = {}
    for key, build in builders.items():
        if key in doc:
            out[key] = build(doc.pop(key))
    if doc:
        raise ConfigError("unknown %s keys: %s" % (section, sorted(doc)))
    return out


def system_from_doc(doc):
    """Build SystemParams from a config mapping with unit-suffixed keys."""
    doc = dict(doc)
    wavelength = float(doc.pop("wavelength_m", 0.1))

    def noise(v):
        if isinstance(v, (list, tuple)):
            return [dbm_to_watts(float(x)) for x in v]
        return dbm_to_watts(float(v))

    kw = _coerce(doc, "system", {
        "num_users": int,
        "num_tx_antennas": int,
        "num_paths": int,
        "power_dbm": lambda v: dbm_to_watts(float(v)),
        "noise_dbm": noise,
        "min_spacing_wavelengths": lambda v: float(v) * wavelength,
        "x_min_m": float,
        "aperture_wavelengths": lambda v: float(v) * wavelength,
        "path_loss_exp": float,
        "ref_gain": float,
    })
    if "aperture_wavelengths" in kw:
        kw["x_max"] = kw.pop("aperture_wavelengths") + kw.get("x_min_m", 0.0)
    if "x_min_m" in kw:
        kw["x_min"] = kw.pop("x_min_m")
    if "power_dbm" in kw:
        kw["power_budget_w"] = kw.pop("power_dbm")
    if "noise_dbm" in kw:
        kw["noise_power_w"] = kw.pop("noise_dbm")
    if "min_spacing_wavelengths" in kw:
        kw["min_spacing"] = kw.pop("min_spacing_wavelengths")
    try:
        return SystemParams(wavelength=wavelength, **kw)
    except ValueError as exc:
        raise ConfigError("system: %s" % exc) from exc


def optimizer_from_doc(doc):
    """Build OptimizerConfig (scheme comes from the sweep, not the file)."""
    doc = dict(doc)
    solver_doc = doc.pop("solver", {})
    opt_names = {f.name for f in fields(OptimizerConfig)} - {"scheme", "solver"}
    sol_names = {f.name for f in fields(SolverConfig)}
    kw = _coerce(doc, "optimizer", {name: lambda v: v for name in opt_names})
    sol_kw = _coerce(solver_doc, "solver", {name: lambda v: v for name in sol_names})
    try:
        return OptimizerConfig(solver=SolverConfig(**sol_kw), **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError("optimizer: %s" % exc) from exc


def config_from_doc(doc):
    """Build ExperimentConfig from a parsed JSON/TOML mapping."""
    doc = dict(doc)
    system = system_from_doc(doc.pop("system", {}))
    optimizer = optimizer_from_doc(doc.pop("optimizer", {}))
    kw = _coerce(doc, "top-level", {
        "axis": str,
        "axis_values": list,
        "schemes": lambda v: tuple(str(s) for s in v),
        "num_trials": int,
        "base_seed": int,
        "out_dir": str,
        "notes": str,
    })
    if "axis" not in kw or "axis_values" not in kw:
        raise ConfigError("config must set axis and axis_values")
    return ExperimentConfig(system=system, optimizer=optimizer, **kw)


def load_config(path):
    """Parse a JSON (.json) or TOML (.toml) experiment config file."""
    path = Path(path)
    if path.suffix == ".toml":
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    elif path.suffix == ".json":
        with open(path) as fh:
            doc = json.load(fh)
    else:
        raise ConfigError("config must be a .json or .toml file: %s" % path)
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")
    return config_from_doc(doc)


def config_echo(cfg):
    """Resolved config as a JSON-ready dict with unit-suffixed keys."""
    sysp = cfg.system
    noise = sysp.noise_vector()
    noise_dbm = [float(watts_to_dbm(v)) for v in noise]
    if len(set(noise_dbm)) == 1:
        noise_dbm = noise_dbm[0]
    opt = cfg.optimizer
    return {
        "axis": cfg.axis,
        "axis_values": list(cfg.axis_values),
        "schemes": list(cfg.schemes),
        "num_trials": cfg.num_trials,
        "base_seed": cfg.base_seed,
        "out_dir": cfg.out_dir,
        "notes": cfg.notes,
        "system": {
            "num_users": sysp.num_users,
            "num_tx_antennas": sysp.num_tx_antennas,
            "num_paths": sysp.num_paths,
            "wavelength_m": sysp.wavelength,
            "power_dbm": float(watts_to_dbm(sysp.power_budget_w)),
            "noise_dbm": noise_dbm,
            "min_spacing_wavelengths": sysp.min_spacing / sysp.wavelength,
            "x_min_m": sysp.x_min,
            "aperture_wavelengths": (sysp.x_max - sysp.x_min) / sysp.wavelength,
            "path_loss_exp": sysp.path_loss_exp,
            "ref_gain": sysp.ref_gain,
        },
        "optimizer": {
            "inner_tol": opt.inner_tol,
            "inner_max_iters": opt.inner_max_iters,
            "outer_tol": opt.outer_tol,
            "outer_max_iters": opt.outer_max_iters,
            "coarse_spacing_wavelengths": opt.coarse_spacing_wavelengths,
            "kappa0_wavelengths": opt.kappa0_wavelengths,
            "kappa_min_wavelengths": opt.kappa_min_wavelengths,
            "validate_iterates": opt.validate_iterates,
            "solver": {
                "barrier_start": opt.solver.barrier_start,
                "barrier_mult": opt.solver.barrier_mult,
                "max_outer_iters": opt.solver.max_outer_iters,
                "newton_tol": opt.solver.newton_tol,
                "max_newton_iters": opt.solver.max_newton_iters,
                "feasibility_eps": opt.solver.feasibility_eps,
            },
        },
    }


def _run_case(payload):
    """Worker body: one (point, trial) scenario, every scheme on it."""
    value, trial, seed, params, schemes, opt = payload
    scenario = generate_scenario(params, seed)
    rows, failures = [], []
    for scheme in schemes:
        cfg = replace(opt, scheme=scheme)
        tic = time.perf_counter()
        try:
            result = run(scenario, cfg)
        except (SolverError, RuntimeError, np.linalg.LinAlgError) as exc:
            failures.append((scheme, value, trial, seed, repr(exc)))
            continue
        wall_ms = 1e3 * (time.perf_counter() - tic)
        rows.append(SweepRow(scheme, value, trial, seed,
                             result.sum_rate, result.outer_iters, wall_ms))
    return rows, failures


def sweep_rows(cfg, workers=1):
    """Run the whole sweep; rows come back in (point, trial, scheme) order
    no matter how many workers ran them."""
    tasks = [(value, trial, derive_seed(cfg.base_seed, value, trial),
              cfg.point_params(value), cfg.schemes, cfg.optimizer)
             for value in cfg.axis_values
             for trial in range(cfg.num_trials)]
    if workers <= 1:
        outcomes = [_run_case(task) for task in tasks]
    else:
        with Pool(workers) as pool:
            outcomes = pool.map(_run_case, tasks, chunksize=1)
    rows = []
    for case_rows, case_failures in outcomes:
        rows.extend(case_rows)
        for scheme, value, trial, seed, err in case_failures:
            log.warning("run failed: scheme=%s axis=%g trial=%d seed=%d: %s",
                        scheme, value, trial, seed, err)
    return rows


def summarize(rows, schemes=None, num_trials=None):
    """Aggregate sweep rows into per (scheme, point) means and gains.

    The standard error is the sample one (ddof=1), zero for a single
    trial.  When ``num_trials`` is unknown, the largest group size
    stands in for it when counting failures.
    """
    if not rows:
        raise ValueError("no rows to summarize")
    groups = {}
    for row in rows:
        groups.setdefault((row.scheme, row.axis), []).append(row.sum_rate_bps_hz)
    if schemes is None:
        schemes = list(dict.fromkeys(row.scheme for row in rows))
    values = sorted(set(row.axis for row in rows))
    expected = num_trials if num_trials is not None else max(
        len(g) for g in groups.values())

    out = []
    for value in values:
        fpa = groups.get(("FPA", value))
        fpa_mean = float(np.mean(fpa)) if fpa else None
        for scheme in schemes:
            vals = groups.get((scheme, value), [])
            n = len(vals)
            if n == 0:
                out.append(SummaryRow(scheme, value, 0, expected,
                                      float("nan"), float("nan"), None))
                continue
            mean = float(np.mean(vals))
            stderr = 0.0 if n < 2 else float(np.std(vals, ddof=1) / np.sqrt(n))
            gain = None
            if fpa_mean is not None and fpa_mean != 0.0:
                gain = 100.0 * (mean - fpa_mean) / fpa_mean
            out.append(SummaryRow(scheme, value, n, expected - n,
                                  mean, stderr, gain))
    return out


def _fmt(value, spec="%.12g"):
    return "" if value is None or (isinstance(value, float) and np.isnan(value)) \
        else spec % value


def write_rows_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ROWS_HEADER)
        for r in rows:
            writer.writerow([r.scheme, _fmt(r.axis, "%.10g"), r.trial, r.seed,
                             _fmt(r.sum_rate_bps_hz), r.outer_iters,
                             "%.3f" % r.wall_ms])


def read_rows_csv(path):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != list(ROWS_HEADER):
            raise ValueError("unexpected header in %s" % path)
        for rec in reader:
            rows.append(SweepRow(rec["scheme"], float(rec["axis"]),
                                 int(rec["trial"]), int(rec["seed"]),
                                 float(rec["sum_rate_bps_hz"]),
                                 int(rec["outer_iters"]),
                                 float(rec["wall_ms"])))
    return rows


def summary_csv_text(summary):
    lines = [",".join(SUMMARY_HEADER)]
    for s in summary:
        lines.append(",".join([s.scheme, _fmt(s.axis, "%.10g"), "%d" % s.n,
                               "%d" % s.failures,
                               _fmt(s.mean_sum_rate_bps_hz),
                               _fmt(s.stderr_sum_rate_bps_hz),
                               _fmt(s.gain_pct_vs_fpa)]))
    return "\n".join(lines) + "\n"


def write_summary_csv(path, summary):
    with open(path, "w", newline="") as fh:
        fh.write(summary_csv_text(summary))


def run_experiment(cfg, out_dir=None, workers=1, num_trials=None):
    """Run a sweep end to end and write the three artifact files.

    Returns the output directory.  ``out_dir`` and ``num_trials``
    override the config when given (CLI flags).
    """
    if out_dir is not None or num_trials is not None:
        cfg = replace(cfg,
                      out_dir=str(out_dir) if out_dir is not None else cfg.out_dir,
                      num_trials=num_trials if num_trials is not None else cfg.num_trials)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.echo.json", "w") as fh:
        json.dump(config_echo(cfg), fh, indent=2)
        fh.write("\n")
    log.info("sweep %s over %s: %d points x %d trials x %d schemes",
             cfg.axis, cfg.axis_values, len(cfg.axis_values),
             cfg.num_trials, len(cfg.schemes))
    tic = time.perf_counter()
    rows = sweep_rows(cfg, workers=workers)
    log.info("sweep done: %d rows in %.1f s", len(rows), time.perf_counter() - tic)
    write_rows_csv(out / "rows.csv", rows)
    summary = summarize(rows, schemes=list(cfg.schemes), num_trials=cfg.num_trials)
    write_summary_csv(out / "summary.csv", summary)
    return out
