"""Datasets: validation, seeded synthetic generation and CSV ingestion."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import expit

from .errors import InputError
from .families import GlmFamily, softplus


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    y: np.ndarray
    family: GlmFamily = field(default_factory=GlmFamily)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 2:
            raise InputError(f"design matrix must be 2-D, got shape {x.shape}")
        y = np.asarray(self.y, dtype=float).reshape(-1)
        n, p = x.shape
        if n < 2 or p < 1:
            raise InputError(f"need n >= 2 and p >= 1, got n={n}, p={p}")
        if y.shape[0] != n:
            raise InputError(f"x has {n} rows but y has {y.shape[0]} entries")
        if not np.all(np.isfinite(x)):
            raise InputError("design matrix contains non-finite entries")
        y = self.family.validate_response(y)
        # column-major so coordinate updates touch contiguous memory
        object.__setattr__(self, "x", np.asfortranarray(x))
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def gamma0(self) -> float:
        """Aspect ratio n / p."""
        return self.n / self.p

    @classmethod
    def _trusted(cls, x, y, family) -> "Dataset":
        # rows taken from an already validated dataset need no re-checking
        ds = object.__new__(cls)
        object.__setattr__(ds, "x", x)
        object.__setattr__(ds, "y", y)
        object.__setattr__(ds, "family", family)
        return ds

    def drop_row(self, i: int) -> "Dataset":
        if not 0 <= i < self.n:
            raise InputError(f"row index {i} out of range for n={self.n}")
        if self.n < 3:
            raise InputError("cannot drop a row from a dataset with fewer than 3 rows")
        x = np.empty((self.n - 1, self.p), order="F")
        x[:i] = self.x[:i]
        x[i:] = self.x[i + 1:]
        return Dataset._trusted(x, np.delete(self.y, i), self.family)

    def take_rows(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.x[idx], self.y[idx], self.family)


@dataclass(frozen=True)
class SyntheticSpec:
    n: int
    p: int
    sparsity: float = 0.2
    coef_sd: float = 1.0
    column_variance: Optional[float] = None  # None means 1/n
    family: GlmFamily = field(default_factory=GlmFamily)
    seed: int = 0

    def __post_init__(self):
        if int(self.n) < 2 or int(self.p) < 1:
            raise InputError(f"need n >= 2 and p >= 1, got n={self.n}, p={self.p}")
        if not 0.0 <= self.sparsity <= 1.0:
            raise InputError(f"sparsity must lie in [0, 1], got {self.sparsity}")
        if not self.coef_sd > 0:
            raise InputError("coef_sd must be positive")
        if self.column_variance is not None and not self.column_variance > 0:
            raise InputError("column_variance must be positive")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise InputError("seed must be a 64-bit unsigned integer")

    @property
    def variance(self) -> float:
        return 1.0 / self.n if self.column_variance is None else float(self.column_variance)

    @property
    def n_nonzero(self) -> int:
        return int(round(self.sparsity * self.p))

    def replace(self, **changes) -> "SyntheticSpec":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(changes)
        return SyntheticSpec(**d)

    def to_dict(self) -> dict:
        return {
            "n": int(self.n),
            "p": int(self.p),
            "sparsity": float(self.sparsity),
            "coef_sd": float(self.coef_sd),
            "column_variance": None if self.column_variance is None else float(self.column_variance),
            "family": self.family.to_dict(),
            "seed": int(self.seed),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InputError(f"unknown SyntheticSpec fields: {sorted(unknown)}")
        fam = d.get("family", {})
        if isinstance(fam, str):
            fam = {"kind": fam}
        cv = d.get("column_variance")
        return cls(
            n=int(d["n"]),
            p=int(d["p"]),
            sparsity=float(d.get("sparsity", 0.2)),
            coef_sd=float(d.get("coef_sd", 1.0)),
            column_variance=None if cv is None else float(cv),
            family=GlmFamily.from_dict(fam),
            seed=int(d.get("seed", 0)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def sample_response(family: GlmFamily, z: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw ``y`` from the family's conditional law given linear predictors ``z``."""
    if family.kind == "gaussian":
        return z + family.noise_sd * rng.standard_normal(z.shape[0])
    if family.kind == "logistic":
        return (rng.random(z.shape[0]) < expit(z)).astype(float)
    return rng.poisson(softplus(z)).astype(float)


def make_synthetic(spec: SyntheticSpec, rng: Optional[np.random.Generator] = None):
    """Draw ``(dataset, beta_star)`` from ``spec``.

    The generator is seeded from ``spec.seed`` unless ``rng`` is given. The
    support of ``beta_star`` is a uniform random subset of size
    ``round(sparsity * p)``.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    n, p = int(spec.n), int(spec.p)
    x = rng.standard_normal((n, p)) * np.sqrt(spec.variance)
    beta_star = np.zeros(p)
    k = spec.n_nonzero
    if k:
        support = np.sort(rng.choice(p, size=k, replace=False))
        beta_star[support] = spec.coef_sd * rng.standard_normal(k)
    y = sample_response(spec.family, x @ beta_star, rng)
    return Dataset(x, y, spec.family), beta_star


def _read_numeric_csv(path, header: bool) -> np.ndarray:
    rows = []
    width = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for line_no, row in enumerate(reader, start=1):
            if header and line_no == 1:
                continue
            if not row or all(not c.strip() for c in row):
                # trailing blank lines are tolerated
                continue
            vals = []
            for col_no, cell in enumerate(row, start=1):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise InputError(
                        f"{path}: cannot parse {cell!r} at row {line_no}, col {col_no}") from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise InputError(
                    f"{path}: row {line_no} has {len(vals)} columns, expected {width}")
            rows.append(vals)
    if not rows:
        raise InputError(f"{path}: no data rows")
    return np.array(rows, dtype=float)


def load_csv(path_x, path_y, family: GlmFamily, header: bool = False) -> Dataset:
    """Read a design matrix and response vector from comma-separated files.

    Rows and columns in error messages are 1-based file positions.
    """
    for path in (path_x, path_y):
        if not Path(path).is_file():
            raise InputError(f"no such file: {path}")
    x = _read_numeric_csv(path_x, header)
    y = _read_numeric_csv(path_y, header)
    if y.shape[1] != 1:
        raise InputError(f"{path_y}: expected a single column, found {y.shape[1]}")
    if x.shape[0] != y.shape[0]:
        raise InputError(f"row count mismatch: x has {x.shape[0]} rows, y has {y.shape[0]}")
    return Dataset(x, y[:, 0], family)


def snr(beta_star, spec: SyntheticSpec, family: Optional[GlmFamily] = None) -> float:
    """Signal-to-noise ratio ``var(x'beta*) / var(y | x'beta*)``.

    For the gaussian family this is ``column_variance * ||beta*||^2 / sigma^2``.
    For logistic and Poisson the conditional variance depends on ``z``; the
    denominator is its expectation under ``z ~ N(0, column_variance ||beta*||^2)``,
    evaluated by Gauss-Hermite quadrature.
    """
    family = spec.family if family is None else family
    beta_star = np.asarray(beta_star, dtype=float)
    signal = spec.variance * float(beta_star @ beta_star)
    if family.kind == "gaussian":
        return signal / family.noise_sd ** 2
    nodes, weights = np.polynomial.hermite_e.hermegauss(80)
    z = np.sqrt(signal) * nodes
    if family.kind == "logistic":
        mu = expit(z)
        cond_var = mu * (1.0 - mu)
    else:
        cond_var = softplus(z)
    noise = float(weights @ cond_var) / np.sqrt(2.0 * np.pi)
    return signal / noise
