"""Leave-one-out risk: the exact refit oracle and its one-step approximation.

For a fit with active set ``S`` the approximate leave-one-out prediction is

    z_i + (l'_i / l''_i) * H_ii / (1 - H_ii),

    H_ii = l''_i * x_{iS}' (2 lambda eta I + X_S' D X_S)^{-1} x_{iS},

with ``D = diag(l'')`` evaluated at the full-data fit.
"""

from __future__ import annotations

import csv
import json
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, cholesky, solve_triangular

from .data import Dataset
from .errors import InputError, NumericError
from .families import GlmFamily, derivatives
from .solver import (DEFAULT_TOL, FitResult, Penalty, SmoothedFitResult, fit,
                     fit_loo, smoothed_derivatives)

EPS_CURV = 1e-10
EPS_H = 1e-8

PHI_TAGS = ("squared_error", "absolute_error", "loss")
ESTIMATORS = ("alo", "lo", "alo_smoothed", "oo")


def default_phi(family: GlmFamily) -> str:
    return "squared_error" if family.kind == "gaussian" else "loss"


def evaluate_phi(phi: str, family: GlmFamily, y, z) -> np.ndarray:
    """Evaluation loss ``phi(y, z)``; ``"loss"`` is the family's own negative log-likelihood."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if phi == "squared_error":
        return (y - z) ** 2
    if phi == "absolute_error":
        return np.abs(y - z)
    if phi == "loss":
        return derivatives(family, y, z)[0]
    raise InputError(f"unknown phi {phi!r}; expected one of {PHI_TAGS}")


def _resolve_phi(phi: Optional[str], family: GlmFamily) -> str:
    phi = default_phi(family) if phi is None else phi
    if phi not in PHI_TAGS:
        raise InputError(f"unknown phi {phi!r}; expected one of {PHI_TAGS}")
    return phi


@dataclass
class RiskReport:
    estimator: str
    value: float
    per_obs: np.ndarray
    phi: str
    h_diag: Optional[np.ndarray] = None
    curvature_floored: int = 0
    h_clipped: int = 0
    failed: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator,
            "value": float(self.value),
            "per_obs": [float(v) for v in self.per_obs],
            "h_diag": None if self.h_diag is None else [float(v) for v in self.h_diag],
            "phi": self.phi,
            "curvature_floored": int(self.curvature_floored),
            "h_clipped": int(self.h_clipped),
            "failed": [int(i) for i in self.failed],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _require_converged(fit_result, what="fit"):
    if not fit_result.converged:
        raise InputError(f"{what} is not converged; refusing to build a risk estimate on it")


def _h_from_curvature(xs: np.ndarray, d2: np.ndarray, ridge: float) -> np.ndarray:
    """Diagonal of ``D X_S (cI + X_S' D X_S)^{-1} X_S'`` with ``c = 2 * ridge``."""
    n, k = xs.shape
    if k == 0:
        return np.zeros(n)
    c = 2.0 * ridge
    try:
        if k <= n:
            a = xs.T @ (xs * d2[:, None])
            a[np.diag_indices_from(a)] += c
            chol = cholesky(a, lower=True, check_finite=False)
            v = solve_triangular(chol, xs.T, lower=True, check_finite=False)
            return d2 * np.einsum("ij,ij->j", v, v)
        # Woodbury: with M = D^{1/2} X_S, M (cI + M'M)^{-1} M' = I - c (cI + MM')^{-1}
        m = xs * np.sqrt(d2)[:, None]
        kmat = m @ m.T
        kmat[np.diag_indices_from(kmat)] += c
        chol = cholesky(kmat, lower=True, check_finite=False)
        linv = solve_triangular(chol, np.eye(n), lower=True, check_finite=False)
        return 1.0 - c * np.einsum("ij,ij->j", linv, linv)
    except LinAlgError as exc:
        raise NumericError(f"leverage system is singular: {exc}") from None


def _curvature(dataset: Dataset, beta: np.ndarray):
    z = dataset.x @ beta
    _, d1, d2 = derivatives(dataset.family, dataset.y, z)
    floored = d2 < EPS_CURV
    return z, d1, np.where(floored, EPS_CURV, d2), int(floored.sum())


def h_diagonal(fit_result: FitResult, dataset: Dataset, penalty: Penalty) -> np.ndarray:
    """Leverages ``H_ii`` of the active-set Newton step.

    One Cholesky of the ``|S| x |S|`` system when ``|S| <= n``; otherwise the
    ``n x n`` Woodbury form is factored instead. Curvatures below
    ``EPS_CURV`` are floored, as in :func:`alo`.
    """
    beta = np.asarray(fit_result.beta, dtype=float)
    if beta.shape != (dataset.p,):
        raise InputError("fit and dataset disagree on p")
    s = np.asarray(fit_result.active_set, dtype=int)
    _, _, d2, _ = _curvature(dataset, beta)
    return _h_from_curvature(dataset.x[:, s], d2, penalty.ridge_weight)


def _one_step(dataset, phi, z, d1, d2, h, estimator, floored):
    clipped = h > 1.0 - EPS_H
    h = np.clip(h, 0.0, 1.0 - EPS_H)
    z_loo = z + (d1 / d2) * (h / (1.0 - h))
    per_obs = evaluate_phi(phi, dataset.family, dataset.y, z_loo)
    if not np.all(np.isfinite(per_obs)):
        raise NumericError(f"{estimator} produced non-finite per-observation values")
    return RiskReport(estimator=estimator, value=float(np.mean(per_obs)), per_obs=per_obs,
                      phi=phi, h_diag=h, curvature_floored=floored,
                      h_clipped=int(clipped.sum()))


def alo(fit_result: FitResult, dataset: Dataset, penalty: Penalty,
        phi: Optional[str] = None) -> RiskReport:
    """Approximate leave-one-out risk from a single converged fit."""
    _require_converged(fit_result)
    phi = _resolve_phi(phi, dataset.family)
    beta = np.asarray(fit_result.beta, dtype=float)
    z, d1, d2, floored = _curvature(dataset, beta)
    s = np.asarray(fit_result.active_set, dtype=int)
    h = _h_from_curvature(dataset.x[:, s], d2, penalty.ridge_weight)
    return _one_step(dataset, phi, z, d1, d2, h, "alo", floored)


def alo_smoothed(sfit: SmoothedFitResult, dataset: Dataset, penalty: Penalty,
                 phi: Optional[str] = None) -> RiskReport:
    """One-step leave-one-out risk for the smoothed fit, using all ``p`` coordinates.

    The penalty Hessian is ``lambda (1 - eta) r''(beta) + 2 lambda eta``, so
    the ``p x p`` system is positive definite for any design.
    """
    _require_converged(sfit, "smoothed fit")
    phi = _resolve_phi(phi, dataset.family)
    beta = np.asarray(sfit.beta, dtype=float)
    z, d1, d2, floored = _curvature(dataset, beta)
    _, _, ddr = smoothed_derivatives(sfit.alpha, beta)
    x = dataset.x
    a = x.T @ (x * d2[:, None])
    a[np.diag_indices_from(a)] += penalty.l1_weight * ddr + 2.0 * penalty.ridge_weight
    try:
        chol = cholesky(a, lower=True, check_finite=False)
    except LinAlgError as exc:
        raise NumericError(f"smoothed leverage system is singular: {exc}") from None
    v = solve_triangular(chol, x.T, lower=True, check_finite=False)
    h = d2 * np.einsum("ij,ij->j", v, v)
    return _one_step(dataset, phi, z, d1, d2, h, "alo_smoothed", floored)


def default_workers() -> int:
    env = os.environ.get("ALO_ENET_WORKERS")
    if env is None:
        return 1
    try:
        w = int(env)
    except ValueError:
        raise InputError(f"ALO_ENET_WORKERS must be an integer, got {env!r}") from None
    if w < 1:
        raise InputError("ALO_ENET_WORKERS must be at least 1")
    return w


def lo_exact(dataset: Dataset, penalty: Penalty, phi: Optional[str] = None,
             tol: float = DEFAULT_TOL, workers: Optional[int] = None,
             full_fit: Optional[FitResult] = None):
    """Exact leave-one-out risk by ``n`` refits.

    Every refit is warm-started from the full-data solution, so each result
    depends only on its index and the output does not depend on ``workers``.

    Returns
    -------
    report : RiskReport
        ``value`` averages over converged refits only; unconverged indices
        are listed in ``report.failed``.
    fits : list of FitResult
        The ``n`` leave-one-out fits, in index order.
    """
    phi = _resolve_phi(phi, dataset.family)
    workers = default_workers() if workers is None else int(workers)
    if workers < 1:
        raise InputError("workers must be at least 1")
    if full_fit is None:
        full_fit = fit(dataset, penalty, tol)
    start = full_fit.beta

    def one(i):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return fit_loo(dataset, penalty, i, tol, warm_start=start)

    if workers == 1:
        fits = [one(i) for i in range(dataset.n)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            fits = list(pool.map(one, range(dataset.n)))

    betas = np.stack([f.beta for f in fits])
    z_loo = np.einsum("ij,ij->i", dataset.x, betas)
    per_obs = evaluate_phi(phi, dataset.family, dataset.y, z_loo)
    failed = [i for i, f in enumerate(fits) if not f.converged]
    ok = np.ones(dataset.n, dtype=bool)
    ok[failed] = False
    if failed:
        warnings.warn(f"{len(failed)} leave-one-out refits did not converge; "
                      f"LO averages the remaining {int(ok.sum())}", RuntimeWarning, stacklevel=2)
    if not ok.any():
        raise NumericError("no leave-one-out refit converged")
    value = float(np.mean(per_obs[ok]))
    return RiskReport("lo", value, per_obs, phi, failed=failed), fits


def oo_estimate(fit_result: FitResult, test: Dataset, phi: Optional[str] = None) -> RiskReport:
    """Mean evaluation loss of the fitted coefficients on held-out data."""
    beta = np.asarray(fit_result.beta, dtype=float)
    if test.p != beta.shape[0]:
        raise InputError(f"test set has p={test.p}, fit has p={beta.shape[0]}")
    phi = _resolve_phi(phi, test.family)
    per_obs = evaluate_phi(phi, test.family, test.y, test.x @ beta)
    return RiskReport("oo", float(np.mean(per_obs)), per_obs, phi)


def write_per_obs_csv(path, alo_report: RiskReport, lo_report: RiskReport,
                      sym_diff=None, theorem_delta=None) -> None:
    """One row per observation: ``i, h_ii, per_obs_alo, per_obs_lo, sym_diff, theorem_delta``."""
    n = len(alo_report.per_obs)
    h = alo_report.h_diag if alo_report.h_diag is not None else np.full(n, np.nan)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "h_ii", "per_obs_alo", "per_obs_lo", "sym_diff", "theorem_delta"])
        for i in range(n):
            w.writerow([i, repr(float(h[i])), repr(float(alo_report.per_obs[i])),
                        repr(float(lo_report.per_obs[i])),
                        "" if sym_diff is None else int(sym_diff[i]),
                        "" if theorem_delta is None else int(theorem_delta[i])])
