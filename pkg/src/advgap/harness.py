"""Experiment runners behind the command line: config parsing, sweeps, CSV output.

Each runner returns a list of row dataclasses, one per (seed, grid point).
A grid point that fails becomes a row whose ``status`` starts with
``error:``; nothing is dropped.
"""
from __future__ import annotations

import csv
import dataclasses
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import theory
from .adv_train import PerturbationSet, TrainConfig, adv_logistic_regression
from .evaluation import MetricsRow, decomposition_curve, fill_measurement, measure
from .img_lab import ImageLabConfig, ImageRow, run_image_point
from .lin_data import DistributionSpec, sample_dataset
from .maxmargin import (SolverError, closed_form_classifier, margin_bounds, solve_margin,
                        t_for_delta)

EXPERIMENTS = ("eps_sweep", "overparam_sweep", "samplesize_sweep", "decomposition",
               "bounds_check", "image_lab")

# test samples for a seed are drawn from seed + MC_SEED_OFFSET, away from training seeds
MC_SEED_OFFSET = 1_000_000


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    d: int = 1000
    r: float = 12.0
    sigma: float = 1.0
    n: int = 50
    eps_te: float = 4.0
    eps_tr: list[float] = field(default_factory=lambda: [0.0, 1.0, 2.0, 3.0, 4.0, 5.0])
    n_grid: list[int] = field(default_factory=list)
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    n_mc: int = 10_000
    delta: float = 0.05
    kind: str = "signal"
    solver: str = "closed"
    epochs: int = 20_000
    lr: float = 0.01
    workers: int = 1
    # image lab
    h: int = 16
    w: int = 16
    m_grid: list[int] = field(default_factory=lambda: [0, 2, 4, 6])
    m_te: int = 2
    n_test: int = 200
    mode: str = "loss_exact"
    weights_dir: str = ""

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if not self.seeds:
            raise ConfigError("seed list is empty")
        if self.experiment == "image_lab":
            if not self.m_grid:
                raise ConfigError("m_grid is empty")
            if self.mode not in ("loss_exact", "paper_literal"):
                raise ConfigError(f"unknown mode {self.mode!r}")
            return
        try:
            DistributionSpec(self.r, self.sigma, self.d)
            PerturbationSet(self.kind, self.eps_te)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not 2 * self.eps_te < self.r:
            raise ConfigError(f"need 2*eps_te < r (eps_te={self.eps_te}, r={self.r})")
        if not self.eps_tr:
            raise ConfigError("eps_tr grid is empty")
        if self.experiment in ("overparam_sweep", "samplesize_sweep") and not self.n_grid:
            raise ConfigError("n_grid is empty")
        if self.n_mc < 0:
            raise ConfigError("n_mc must be non-negative")
        if self.solver not in ("closed", "logreg"):
            raise ConfigError(f"unknown solver {self.solver!r}")
        if not 0 < self.delta < 1:
            raise ConfigError("delta must lie in (0, 1)")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")


# Desk defaults keep d at full size where the closed form makes it
# cheap and shrink the Monte Carlo sample; --paper-scale restores the rest.
DESK_DEFAULTS = {
    "eps_sweep": dict(eps_tr=[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]),
    "overparam_sweep": dict(d=2000, n_grid=[10, 20, 50, 100, 400, 1000],
                            eps_tr=[0.0, 4.0]),
    "samplesize_sweep": dict(n_grid=[20, 50, 100, 200, 500]),
    "decomposition": dict(),
    "bounds_check": dict(r=6.0, eps_te=2.5, delta=0.1, eps_tr=[0.0, 1.0, 2.0],
                         seeds=list(range(50))),
    "image_lab": dict(n=20, seeds=[0, 1, 2, 3, 4], epochs=2000),
}

PAPER_SCALE = {
    "eps_sweep": dict(n_mc=1_000_000),
    "overparam_sweep": dict(d=10_000, n_grid=[50, 100, 200, 500, 1000, 2000, 5000, 10_000],
                            eps_tr=[0.0, 4.5], n_mc=1_000_000),
    "samplesize_sweep": dict(seeds=list(range(10)), n_mc=1_000_000),
    "decomposition": dict(n_mc=1_000_000),
    "bounds_check": dict(seeds=[0, 1, 2, 3, 4], eps_tr=[0.0, 0.5, 1.0, 1.5, 2.0, 2.5],
                         n_mc=1_000_000),
    "image_lab": dict(),
}

_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def parse_seed_list(text: str) -> list[int]:
    """``"0,3,7"`` or ``"0-4"`` (inclusive) or a mix like ``"0-2,9"``."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            if int(hi) < int(lo):
                raise ConfigError(f"empty seed range {part!r}")
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ConfigError("seed list is empty")
    return seeds


def coerce_value(name: str, text: str):
    """Parse one config value according to the field's declared type."""
    f = _FIELDS.get(name)
    if f is None or name == "experiment":
        raise ConfigError(f"unknown config key {name!r}")
    kind = str(f.type)
    try:
        if name == "seeds":
            return parse_seed_list(text)
        if kind.startswith("list[int]"):
            return [int(v) for v in text.split(",") if v.strip()]
        if kind.startswith("list[float]"):
            return [float(v) for v in text.split(",") if v.strip()]
        if kind == "int":
            return int(float(text)) if "e" in text.lower() else int(text)
        if kind == "float":
            return float(text)
        return text.strip()
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {text!r}") from exc


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = coerce_value(key, value)
    return out


def build_config(experiment: str, overrides: dict | None = None,
                 paper_scale: bool = False) -> ExperimentConfig:
    """Defaults, then paper-scale settings, then explicit overrides."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    values = dict(DESK_DEFAULTS[experiment])
    if paper_scale:
        values.update(PAPER_SCALE[experiment])
    values.update(overrides or {})
    unknown = set(values) - set(_FIELDS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = ExperimentConfig(experiment=experiment, **values)
    cfg.validate()
    return cfg


# -- runners -----------------------------------------------------------------

def _train(cfg, data, sol, eps_tr):
    if cfg.solver == "closed":
        return closed_form_classifier(sol, cfg.r, eps_tr)
    tc = TrainConfig(lr=cfg.lr, max_epochs=cfg.epochs, seed=0)
    clf, trace = adv_logistic_regression(data, PerturbationSet(cfg.kind, eps_tr), tc)
    if trace.diverged:
        raise SolverError(f"training diverged: {trace.stop_reason}")
    return clf


def _bounds_columns(row, cfg, spec, n, eps_tr):
    mb = margin_bounds(spec, n, t_for_delta(cfg.delta))
    row.gamma_lo, row.gamma_hi = mb.lo, mb.hi
    params = theory.TheoryParams(spec, n, eps_tr, cfg.eps_te, cfg.delta)
    row.gap_lower = theory.theory_bounds(params).gap_lower
    if mb.lo > 0:
        row.suscept_lo, row.suscept_hi = theory.susceptibility_bounds(params, strict=False)


def _seed_rows(cfg: ExperimentConfig, seed: int, n: int) -> list[MetricsRow]:
    """All ``eps_tr`` rows for one seeded dataset of size ``n``."""
    spec = DistributionSpec(cfg.r, cfg.sigma, cfg.d)
    pert_te = PerturbationSet(cfg.kind, cfg.eps_te)
    rows = [MetricsRow(seed, n, cfg.d, cfg.r, cfg.sigma, e, cfg.eps_te,
                       experiment=cfg.experiment) for e in sorted(cfg.eps_tr)]
    if not n < cfg.d - 1:
        for row in rows:
            row.status = f"error: theory needs n < d-1 (n={n}, d={cfg.d})"
        return rows
    start = time.perf_counter()
    try:
        data = sample_dataset(spec, n, seed)
        sol = solve_margin(data.stripped, data.ys)
        base = _train(cfg, data, sol, 0.0)
        base_rob = theory.robust_error_general_linear(base, spec, cfg.eps_te, cfg.kind)
    except (ValueError, RuntimeError) as exc:
        for row in rows:
            row.status = f"error: {exc}"
        return rows
    for row in rows:
        t0 = time.perf_counter()
        row.gamma_tilde = sol.gamma_tilde
        try:
            clf = base if row.eps_tr == 0 else _train(cfg, data, sol, row.eps_tr)
            rob = theory.robust_error_general_linear(clf, spec, cfg.eps_te, cfg.kind)
            rep = measure(clf, spec, pert_te, cfg.n_mc, seed + MC_SEED_OFFSET)
            rep.check()
            fill_measurement(row, rep, rob)
            row.gap = rob - base_rob
            _bounds_columns(row, cfg, spec, n, row.eps_tr)
        except (ValueError, RuntimeError) as exc:
            row.status = f"error: {exc}"
        row.wall_time = time.perf_counter() - t0
    rows[0].wall_time += time.perf_counter() - start - sum(r.wall_time for r in rows)
    return rows


def _decomposition_rows(cfg, seed, n):
    spec = DistributionSpec(cfg.r, cfg.sigma, cfg.d)
    start = time.perf_counter()
    try:
        data = sample_dataset(spec, n, seed)
        rows = decomposition_curve(data, cfg.eps_tr, cfg.eps_te, spec, cfg.n_mc,
                                   seed + MC_SEED_OFFSET, cfg.delta, cfg.kind)
    except (ValueError, RuntimeError) as exc:
        rows = [MetricsRow(seed, n, cfg.d, cfg.r, cfg.sigma, e, cfg.eps_te,
                           status=f"error: {exc}") for e in sorted(cfg.eps_tr)]
    for row in rows:
        row.seed, row.experiment = seed, cfg.experiment
        row.wall_time = (time.perf_counter() - start) / len(rows)
    return rows


def _run_tasks(fn, tasks, workers):
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return [r for rows in pool.map(lambda a: fn(*a), tasks) for r in rows]
    return [r for a in tasks for r in fn(*a)]


def run_experiment(cfg: ExperimentConfig) -> list:
    """Run every (seed, grid point) of ``cfg``; rows come back in a fixed order."""
    cfg.validate()
    exp = cfg.experiment
    if exp == "image_lab":
        icfg = ImageLabConfig(n=cfg.n, h=cfg.h, w=cfg.w, m_grid=list(cfg.m_grid),
                              m_te=cfg.m_te, n_test=cfg.n_test, seeds=list(cfg.seeds),
                              mode=cfg.mode,
                              train=TrainConfig(lr=cfg.lr, max_epochs=cfg.epochs),
                              weights_dir=cfg.weights_dir or None)
        tasks = [(s, m) for s in cfg.seeds for m in sorted(cfg.m_grid)]
        rows = _run_tasks(lambda s, m: [run_image_point(icfg, s, m)], tasks, cfg.workers)
        return sorted(rows, key=lambda r: (r.seed, r.m_tr))
    if exp in ("overparam_sweep", "samplesize_sweep"):
        tasks = [(cfg, s, n) for s in cfg.seeds for n in sorted(cfg.n_grid)]
    else:
        tasks = [(cfg, s, cfg.n) for s in cfg.seeds]
    fn = _decomposition_rows if exp == "decomposition" else _seed_rows
    rows = _run_tasks(fn, tasks, cfg.workers)
    return sorted(rows, key=lambda r: (r.seed, r.n, r.eps_tr))


# -- CSV -----------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_csv(fh, rows) -> None:
    """Fixed column order (the row dataclass fields), '.' decimals, '\\n' endings."""
    if not rows:
        raise ValueError("no rows to write")
    cols = [f.name for f in dataclasses.fields(rows[0])]
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(cols)
    for row in rows:
        w.writerow([_fmt(getattr(row, c)) for c in cols])


def write_rows(path, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        write_csv(fh, rows)


def failed_rows(rows) -> list:
    return [r for r in rows if r.status != "ok"]


__all__ = ["ConfigError", "ExperimentConfig", "ImageRow", "MetricsRow", "build_config",
           "read_config_file", "parse_seed_list", "coerce_value", "run_experiment",
           "write_csv", "write_rows",
           "failed_rows", "EXPERIMENTS"]
