"""Experiment drivers producing CSV/JSON plot data.

Every driver writes into ``config.out_dir``. Data files (``*.csv``,
``records.json``, ``summary.json``) depend only on the configuration, not
on the worker count or timing; wall-clock measurements go to
``timings.csv`` and the resolved configuration to ``run.json``.
"""

from __future__ import annotations

import csv
import json
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .data import Dataset, SyntheticSpec, load_csv, make_synthetic
from .diagnostics import DiagnosticsConfig, active_set_diagnostics
from .errors import InputError
from .families import GlmFamily
from .risk import alo, default_phi, lo_exact, write_per_obs_csv
from .solver import Penalty, fit
from .theory import (solve_fixed_point, sparsity_check, subgradient_tail_check,
                     theory_input_for, wasserstein2_to_limit)

EXPERIMENTS = ("active-set-hist", "scaling", "alo-vs-lo", "ridge-exactness", "theory-check")
ASPECTS = ("p=n", "p=2n")
TAIL_EPS = 0.05

# large grids and their 5x desk reductions
FULL_P_GRID = (1000, 2000, 4000, 7000, 10000)
DESK_P_GRID = (200, 400, 800, 1400, 2000)

METRICS = {
    "active-set-hist": ("alo", "lo", "frac_changed", "mean_sym_diff", "median_sym_diff",
                        "max_sym_diff", "d_n", "active_size"),
    "scaling": ("median_sym_diff", "mean_sym_diff", "max_sym_diff", "frac_changed", "d_n",
                "active_size"),
    "alo-vs-lo": ("alo", "lo", "abs_err", "rel_err", "d_n", "mean_theorem_delta",
                  "max_theorem_delta", "active_size"),
    "ridge-exactness": ("alo", "lo", "abs_err", "rel_err"),
    "theory-check": ("w2", "sparsity_gap", "tail_excess", "tau_star", "b_star", "s_star",
                     "empirical_sparsity", "tail_fraction"),
}


@dataclass
class ExperimentConfig:
    experiment: str
    spec: Union[SyntheticSpec, dict]
    penalty: Penalty = field(default_factory=lambda: Penalty(2.0, 0.5))
    phi: Optional[str] = None
    p_grid: Optional[list] = None
    aspect: Optional[Union[str, float]] = None
    replicates: int = 1
    seed: int = 0
    workers: int = 1
    out_dir: str = "results"
    tol: float = 1e-8

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise InputError(f"unknown experiment {self.experiment!r}; expected one of "
                             f"{EXPERIMENTS}")
        if isinstance(self.spec, dict):
            if not {"x", "y"} <= set(self.spec):
                raise InputError("a file-based spec needs 'x' and 'y' paths")
        elif not isinstance(self.spec, SyntheticSpec):
            raise InputError("spec must be a SyntheticSpec or a dict of CSV paths")
        if self.p_grid is not None:
            grid = [int(p) for p in self.p_grid]
            if not grid or any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 1:
                raise InputError("p_grid must be a non-empty, strictly increasing list")
            self.p_grid = grid
        if self.aspect is not None and not isinstance(self.aspect, str):
            if not float(self.aspect) > 0:
                raise InputError("an explicit aspect (gamma0 = n/p) must be positive")
            self.aspect = float(self.aspect)
        elif isinstance(self.aspect, str) and self.aspect not in ASPECTS:
            raise InputError(f"aspect must be one of {ASPECTS} or a positive number")
        if int(self.replicates) < 1:
            raise InputError("replicates must be at least 1")
        if int(self.workers) < 1:
            raise InputError("workers must be at least 1")
        if not self.tol > 0:
            raise InputError("tol must be positive")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise InputError("seed must be a 64-bit unsigned integer")
        self.replicates, self.workers, self.seed = int(self.replicates), int(self.workers), int(self.seed)

    def to_dict(self) -> dict:
        spec = self.spec.to_dict() if isinstance(self.spec, SyntheticSpec) else dict(self.spec)
        return {
            "experiment": self.experiment,
            "spec": spec,
            "penalty": self.penalty.to_dict(),
            "phi": self.phi,
            "p_grid": self.p_grid,
            "aspect": self.aspect,
            "replicates": self.replicates,
            "seed": self.seed,
            "workers": self.workers,
            "out_dir": str(self.out_dir),
            "tol": float(self.tol),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InputError(f"unknown config fields: {sorted(unknown)}")
        if "experiment" not in d or "spec" not in d:
            raise InputError("config needs at least 'experiment' and 'spec'")
        spec = d["spec"]
        if not isinstance(spec, dict):
            raise InputError("spec must be a JSON object")
        spec = dict(spec) if {"x", "y"} <= set(spec) else SyntheticSpec.from_dict(spec)
        try:
            pen = Penalty.from_dict(d["penalty"]) if "penalty" in d else Penalty(2.0, 0.5)
        except (KeyError, TypeError) as exc:
            raise InputError(f"bad penalty: {exc}") from None
        kw = {k: d[k] for k in ("phi", "p_grid", "aspect", "replicates", "seed", "workers",
                                "out_dir", "tol") if k in d}
        return cls(experiment=d["experiment"], spec=spec, penalty=pen, **kw)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputError(f"config is not valid JSON: {exc}") from None
        if not isinstance(d, dict):
            raise InputError("config must be a JSON object")
        return cls.from_dict(d)

    def replace(self, **changes) -> "ExperimentConfig":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(changes)
        return ExperimentConfig(**d)


@dataclass
class ResultRecord:
    experiment: str
    p: int
    n: int
    seed: int
    metrics: dict
    wall_time_s: float = 0.0

    def to_dict(self) -> dict:
        """Deterministic fields only; wall time is reported separately."""
        return {"experiment": self.experiment, "p": int(self.p), "n": int(self.n),
                "seed": int(self.seed),
                "metrics": {k: _jsonable(v) for k, v in self.metrics.items()}}


def _jsonable(v):
    if v is None:
        return None
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    return float(v)


# ---------------------------------------------------------------- helpers

def derived_seed(base_seed: int, p: int, replicate: int) -> int:
    """64-bit seed for job ``(p, replicate)``, independent of scheduling."""
    ss = np.random.SeedSequence([int(base_seed), int(p), int(replicate)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def n_for(p: int, aspect, default_n: int) -> int:
    if aspect is None:
        return int(default_n)
    if aspect == "p=n":
        return int(p)
    if aspect == "p=2n":
        return max(2, int(round(p / 2)))
    return max(2, int(round(float(aspect) * p)))


def _jobs(cfg: ExperimentConfig):
    """Yield ``(replicate, dataset, beta_star, seed)`` across the grid, in a fixed order."""
    if isinstance(cfg.spec, dict):
        fam = GlmFamily.from_dict(cfg.spec.get("family", {})) \
            if isinstance(cfg.spec.get("family", {}), dict) else GlmFamily(cfg.spec["family"])
        ds = load_csv(cfg.spec["x"], cfg.spec["y"], fam, bool(cfg.spec.get("header", False)))
        for r in range(cfg.replicates):
            yield r, ds, None, cfg.seed
        return
    grid = cfg.p_grid if cfg.p_grid is not None else [cfg.spec.p]
    for p in grid:
        n = n_for(p, cfg.aspect, cfg.spec.n)
        for r in range(cfg.replicates):
            seed = derived_seed(cfg.seed, p, r)
            spec = cfg.spec.replace(n=n, p=p, seed=seed)
            ds, beta_star = make_synthetic(spec)
            yield r, ds, beta_star, seed


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def histogram(values) -> list:
    """Unit-width bins ``[k, k+1)`` from 0 to ``max(values)``; rows ``(lo, hi, probability)``."""
    v = np.asarray(values, dtype=int)
    if v.size == 0:
        return []
    counts = np.bincount(v)
    return [(k, k + 1, c / v.size) for k, c in enumerate(counts)]


def boxplot_stats(values) -> dict:
    """Quartiles by linear interpolation, whiskers at the extreme data within 1.5 IQR."""
    v = np.sort(np.asarray(values, dtype=float))
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    w_lo = min(float(inside.min()), q1)
    w_hi = max(float(inside.max()), q3)
    return {"q1": float(q1), "median": float(med), "q3": float(q3),
            "whisker_lo": w_lo, "whisker_hi": w_hi}


def loglog_slope(ps, medians):
    """OLS slope and intercept of ``log(median)`` on ``log(p)``; ``None`` if undefined."""
    ps = np.asarray(ps, dtype=float)
    med = np.asarray(medians, dtype=float)
    if ps.size < 2 or np.any(med <= 0):
        return None, None
    slope, intercept = np.polyfit(np.log(ps), np.log(med), 1)
    return float(slope), float(intercept)


class _Timer:
    def __init__(self):
        self.rows = []

    def measure(self, label, p, replicate, fn, *args, **kw):
        t0 = time.perf_counter()
        out = fn(*args, **kw)
        self.rows.append((label, p, replicate, time.perf_counter() - t0))
        return out

    def write(self, path: Path):
        write_csv(path, ["stage", "p", "replicate", "wall_time_s"], self.rows)


def _prepare(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finish(cfg, out: Path, records, timer: _Timer, started: float):
    _write_json(out / "records.json", [r.to_dict() for r in records])
    timer.write(out / "timings.csv")
    _write_json(out / "run.json", {"config": cfg.to_dict(),
                                   "wall_time_s": time.perf_counter() - started})


def _fit_and_lo(cfg, ds, timer, p, r, phi):
    full = timer.measure("fit", p, r, fit, ds, cfg.penalty, cfg.tol)
    a = timer.measure("alo", p, r, alo, full, ds, cfg.penalty, phi)
    lo, fits = timer.measure("lo", p, r, lo_exact, ds, cfg.penalty, phi, cfg.tol,
                             cfg.workers, full)
    return full, a, lo, fits


def _diag_config(p: int) -> DiagnosticsConfig:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return DiagnosticsConfig.default(p)


# ---------------------------------------------------------------- drivers

def run_active_set_hist(cfg: ExperimentConfig):
    """Distribution of ``|S ^ S_i|`` over observations, pooled over replicates.

    Writes ``histogram.csv`` and one ``per_i/rep<r>.csv`` per replicate.
    """
    started = time.perf_counter()
    out = _prepare(cfg)
    (out / "per_i").mkdir(exist_ok=True)
    timer = _Timer()
    records, pooled = [], []
    for r, ds, _, seed in _jobs(cfg):
        phi = cfg.phi or default_phi(ds.family)
        full, a, lo, fits = _fit_and_lo(cfg, ds, timer, ds.p, r, phi)
        diag = active_set_diagnostics(full, fits, ds, cfg.penalty, _diag_config(ds.p))
        sd = diag.sym_diff
        pooled.extend(sd.tolist())
        write_per_obs_csv(out / "per_i" / f"rep{r:03d}.csv", a, lo, sd, diag.theorem_delta)
        records.append(ResultRecord(cfg.experiment, ds.p, ds.n, seed, {
            "alo": a.value, "lo": lo.value, "frac_changed": float(np.mean(sd > 0)),
            "mean_sym_diff": float(np.mean(sd)), "median_sym_diff": float(np.median(sd)),
            "max_sym_diff": int(sd.max()), "d_n": diag.d_n,
            "active_size": len(full.active_set)}))
    hist = histogram(pooled)
    write_csv(out / "histogram.csv", ["bin_lo", "bin_hi", "probability"], hist)
    _finish(cfg, out, records, timer, started)
    return records, hist


def run_scaling(cfg: ExperimentConfig):
    """Growth of the per-observation active-set change with ``p``.

    ``boxplot.csv`` has statistics of ``log(sym_diff)`` over the positive
    values pooled across replicates (``n_zero`` counts the excluded zeros);
    ``summary.json`` holds the log-log OLS slope of the pooled median.
    """
    if cfg.p_grid is None:
        raise InputError("the scaling experiment needs a p_grid")
    started = time.perf_counter()
    out = _prepare(cfg)
    timer = _Timer()
    records = []
    pooled = {p: [] for p in cfg.p_grid}
    for r, ds, _, seed in _jobs(cfg):
        phi = cfg.phi or default_phi(ds.family)
        full = timer.measure("fit", ds.p, r, fit, ds, cfg.penalty, cfg.tol)
        _, fits = timer.measure("lo", ds.p, r, lo_exact, ds, cfg.penalty, phi, cfg.tol,
                                cfg.workers, full)
        diag = active_set_diagnostics(full, fits, ds, cfg.penalty, _diag_config(ds.p))
        sd = diag.sym_diff
        pooled[ds.p].extend(sd.tolist())
        records.append(ResultRecord(cfg.experiment, ds.p, ds.n, seed, {
            "median_sym_diff": float(np.median(sd)), "mean_sym_diff": float(np.mean(sd)),
            "max_sym_diff": int(sd.max()), "frac_changed": float(np.mean(sd > 0)),
            "d_n": diag.d_n, "active_size": len(full.active_set)}))
    rows, medians = [], []
    for p in cfg.p_grid:
        v = np.asarray(pooled[p], dtype=float)
        medians.append(float(np.median(v)))
        pos = v[v > 0]
        if pos.size:
            b = boxplot_stats(np.log(pos))
            rows.append((p, b["q1"], b["median"], b["q3"], b["whisker_lo"], b["whisker_hi"],
                         int(v.size), int(v.size - pos.size)))
        else:
            rows.append((p, None, None, None, None, None, int(v.size), int(v.size)))
    write_csv(out / "boxplot.csv", ["p", "q1", "median", "q3", "whisker_lo", "whisker_hi",
                                    "n_obs", "n_zero"], rows)
    slope, intercept = loglog_slope(cfg.p_grid, medians)
    if slope is None:
        warnings.warn("log-log slope is undefined (need two or more p values with a positive "
                      "median change)", RuntimeWarning, stacklevel=2)
    summary = {"p_grid": cfg.p_grid, "median_sym_diff": medians, "slope": slope,
               "intercept": intercept}
    _write_json(out / "summary.json", summary)
    _finish(cfg, out, records, timer, started)
    return records, summary


def run_alo_vs_lo(cfg: ExperimentConfig):
    """ALO and exact LO side by side across the grid.

    Writes ``alo_vs_lo.csv`` (one row per job) and ``summary.csv`` with the
    per-``p`` median absolute error.
    """
    started = time.perf_counter()
    out = _prepare(cfg)
    timer = _Timer()
    records = []
    for r, ds, _, seed in _jobs(cfg):
        phi = cfg.phi or default_phi(ds.family)
        full, a, lo, fits = _fit_and_lo(cfg, ds, timer, ds.p, r, phi)
        diag = active_set_diagnostics(full, fits, ds, cfg.penalty, _diag_config(ds.p))
        td = diag.theorem_delta
        err = abs(a.value - lo.value)
        records.append(ResultRecord(cfg.experiment, ds.p, ds.n, seed, {
            "alo": a.value, "lo": lo.value, "abs_err": err,
            "rel_err": err / abs(lo.value) if lo.value != 0 else None,
            "d_n": diag.d_n, "mean_theorem_delta": float(np.mean(td)),
            "max_theorem_delta": int(td.max()), "active_size": len(full.active_set)}))
    _write_records_csv(out / "alo_vs_lo.csv", cfg.experiment, records)
    rows = []
    for p in sorted({rec.p for rec in records}):
        errs = [rec.metrics["abs_err"] for rec in records if rec.p == p]
        los = [rec.metrics["lo"] for rec in records if rec.p == p]
        rows.append((p, float(np.median(errs)), float(np.median(los)), len(errs)))
    write_csv(out / "summary.csv", ["p", "median_abs_err", "median_lo", "replicates"], rows)
    _finish(cfg, out, records, timer, started)
    return records


def run_ridge_exactness(cfg: ExperimentConfig):
    """ALO against LO for the pure ridge penalty (``eta`` is forced to 1)."""
    cfg = cfg.replace(penalty=Penalty(cfg.penalty.lam, 1.0))
    started = time.perf_counter()
    out = _prepare(cfg)
    timer = _Timer()
    records = []
    for r, ds, _, seed in _jobs(cfg):
        phi = cfg.phi or default_phi(ds.family)
        _, a, lo, _ = _fit_and_lo(cfg, ds, timer, ds.p, r, phi)
        err = abs(a.value - lo.value)
        records.append(ResultRecord(cfg.experiment, ds.p, ds.n, seed, {
            "alo": a.value, "lo": lo.value, "abs_err": err,
            "rel_err": err / abs(lo.value) if lo.value != 0 else None}))
    _write_records_csv(out / "ridge_exactness.csv", cfg.experiment, records)
    _finish(cfg, out, records, timer, started)
    return records


def run_theory_check(cfg: ExperimentConfig):
    """Fitted coefficients against the fixed-point predictions (gaussian family only)."""
    if isinstance(cfg.spec, dict):
        raise InputError("the theory check needs a synthetic spec (beta_star must be known)")
    if cfg.spec.family.kind != "gaussian":
        raise InputError("the theory check is only defined for the gaussian family")
    started = time.perf_counter()
    out = _prepare(cfg)
    timer = _Timer()
    records = []
    rows = []
    for r, ds, beta_star, seed in _jobs(cfg):
        inp, scale = theory_input_for(beta_star, cfg.penalty, ds.n, ds.family.noise_sd,
                                      cfg.spec.column_variance)
        sol = timer.measure("fixed_point", ds.p, r, solve_fixed_point, inp)
        full = timer.measure("fit", ds.p, r, fit, ds, cfg.penalty, cfg.tol)
        w2 = wasserstein2_to_limit(scale * full.beta, inp, sol)
        emp, pred, gap = sparsity_check(full, sol)
        frac, ref = subgradient_tail_check(full, sol, TAIL_EPS)
        m = {"w2": w2, "sparsity_gap": gap, "tail_excess": frac - ref,
             "tau_star": sol.tau_star, "b_star": sol.b_star, "s_star": sol.s_star,
             "empirical_sparsity": emp, "tail_fraction": frac}
        records.append(ResultRecord(cfg.experiment, ds.p, ds.n, seed, m))
        rows.append((ds.p, seed, w2, gap, frac - ref, sol.tau_star, sol.b_star, sol.s_star))
    write_csv(out / "theory_check.csv", ["p", "seed", "w2", "sparsity_gap", "tail_excess",
                                         "tau_star", "b_star", "s_star"], rows)
    _finish(cfg, out, records, timer, started)
    return records


def _write_records_csv(path, experiment, records):
    names = METRICS[experiment]
    write_csv(path, ["p", "n", "seed", *names],
              [(rec.p, rec.n, rec.seed, *[rec.metrics[k] for k in names]) for rec in records])


RUNNERS = {
    "active-set-hist": run_active_set_hist,
    "scaling": run_scaling,
    "alo-vs-lo": run_alo_vs_lo,
    "ridge-exactness": run_ridge_exactness,
    "theory-check": run_theory_check,
}


def run(cfg: ExperimentConfig):
    return RUNNERS[cfg.experiment](cfg)


def default_config(experiment: str, full: bool = False) -> ExperimentConfig:
    """Desk-scale defaults for each experiment; ``full`` switches to the large grids."""
    base = SyntheticSpec(n=500, p=1000, sparsity=0.2, coef_sd=1.0)
    grid = list(FULL_P_GRID if full else DESK_P_GRID)
    if experiment == "active-set-hist":
        return ExperimentConfig(experiment, base)
    if experiment == "scaling":
        return ExperimentConfig(experiment, base, p_grid=grid, aspect="p=n", replicates=20)
    if experiment == "alo-vs-lo":
        return ExperimentConfig(experiment, base, p_grid=[g for g in grid if g <= (grid[-1] // 2)],
                                aspect="p=2n", replicates=5)
    if experiment == "ridge-exactness":
        return ExperimentConfig(experiment, SyntheticSpec(n=200, p=100), penalty=Penalty(2.0, 1.0),
                                replicates=5)
    if experiment == "theory-check":
        return ExperimentConfig(experiment, base, p_grid=[500, 1000, 2000], aspect=0.5,
                                replicates=5)
    raise InputError(f"unknown experiment {experiment!r}")
