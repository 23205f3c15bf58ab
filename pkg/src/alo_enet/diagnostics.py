"""Active-set perturbation diagnostics between a full fit and its leave-one-out refits.

With thresholds ``kappa1`` (large coefficients) and ``kappa0`` (subgradient
gap), each fit has

    S1 = {k : |beta_k| > kappa1},      S0 = {k : |g_k| <= 1 - kappa0}.

For refit ``i`` the stable sets are ``B1 = S1 & S1_i``, ``B0 = S0 & S0_i`` and
``B1+ = {k in B1 : beta_k * beta_{i,k} > 0}``. ``theorem_delta`` counts the
coordinates outside ``B0 | B1+``; ``sym_diff`` is ``|S ^ S_i|``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import InputError
from .solver import FitResult, Penalty

KAPPA_CAP = 0.999


@dataclass(frozen=True)
class DiagnosticsConfig:
    kappa0: float
    kappa1: float

    def __post_init__(self):
        for name in ("kappa0", "kappa1"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise InputError(f"{name} must lie in (0, 1), got {v}")

    @classmethod
    def default(cls, p: int, c: float = 1.0) -> "DiagnosticsConfig":
        """``kappa0 = (8 log p / (c p))^(1/6)``, ``kappa1 = p^(-1/12) (log p)^(1/4)``.

        For small ``p`` these formulas can reach 1 or more (``kappa0`` does for
        ``p <= 26`` with ``c = 1``); they are then capped at ``KAPPA_CAP`` with
        a warning.
        """
        if p < 2:
            raise InputError("default thresholds need p >= 2")
        if not c > 0:
            raise InputError("c must be positive")
        lp = np.log(p)
        k0 = (8.0 * lp / (c * p)) ** (1.0 / 6.0)
        k1 = p ** (-1.0 / 12.0) * lp ** 0.25
        if k0 >= 1.0 or k1 >= 1.0:
            warnings.warn(f"default kappa thresholds exceed 1 at p={p}; capping at {KAPPA_CAP}",
                          RuntimeWarning, stacklevel=2)
        return cls(kappa0=float(min(k0, KAPPA_CAP)), kappa1=float(min(k1, KAPPA_CAP)))

    def to_dict(self) -> dict:
        return {"kappa0": self.kappa0, "kappa1": self.kappa1}


@dataclass
class ActiveSetDiagnostics:
    s1_full: list
    s0_full: list
    per_i: list
    d_n: int

    @property
    def sym_diff(self) -> np.ndarray:
        return np.array([d["sym_diff"] for d in self.per_i], dtype=int)

    @property
    def theorem_delta(self) -> np.ndarray:
        return np.array([d["theorem_delta"] for d in self.per_i], dtype=int)

    @property
    def sign_changes(self) -> np.ndarray:
        return np.array([d["sign_changes"] for d in self.per_i], dtype=int)

    def to_dict(self) -> dict:
        return {"s1_full": self.s1_full, "s0_full": self.s0_full,
                "per_i": self.per_i, "d_n": int(self.d_n)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _idx(mask) -> list:
    return [int(k) for k in np.flatnonzero(mask)]


def pair_diagnostics(beta, g, beta_i, g_i, cfg: DiagnosticsConfig) -> dict:
    """Set comparison between one pair of fits, given coefficients and subgradients."""
    beta, g = np.asarray(beta, dtype=float), np.asarray(g, dtype=float)
    beta_i, g_i = np.asarray(beta_i, dtype=float), np.asarray(g_i, dtype=float)
    s1 = np.abs(beta) > cfg.kappa1
    s0 = np.abs(g) <= 1.0 - cfg.kappa0
    s1_i = np.abs(beta_i) > cfg.kappa1
    s0_i = np.abs(g_i) <= 1.0 - cfg.kappa0
    b1 = s1 & s1_i
    b0 = s0 & s0_i
    b1_plus = b1 & (beta * beta_i > 0)
    on, on_i = beta != 0.0, beta_i != 0.0
    return {
        "s1_loo": _idx(s1_i),
        "s0_loo": _idx(s0_i),
        "b1": _idx(b1),
        "b0": _idx(b0),
        "b1_plus": _idx(b1_plus),
        "theorem_delta": int(beta.shape[0] - np.count_nonzero(b0 | b1_plus)),
        "sym_diff": int(np.count_nonzero(on ^ on_i)),
        "sign_changes": int(np.count_nonzero(np.sign(beta) != np.sign(beta_i))),
    }


def active_set_diagnostics(fit_result: FitResult, loo_fits, dataset: Dataset,
                           penalty: Penalty, cfg: DiagnosticsConfig = None) -> ActiveSetDiagnostics:
    """Compare the full fit with every leave-one-out refit.

    ``cfg`` defaults to :meth:`DiagnosticsConfig.default` at the dataset's ``p``.
    Each ``per_i`` entry also carries ``sign_changes``, the number of
    coordinates whose sign (including zero) differs between the two fits.
    """
    if cfg is None:
        cfg = DiagnosticsConfig.default(dataset.p)
    if len(loo_fits) != dataset.n:
        raise InputError(f"expected {dataset.n} leave-one-out fits, got {len(loo_fits)}")
    beta, g = fit_result.beta, fit_result.subgrad
    per_i = [pair_diagnostics(beta, g, f.beta, f.subgrad, cfg) for f in loo_fits]
    s1 = np.abs(beta) > cfg.kappa1
    s0 = np.abs(g) <= 1.0 - cfg.kappa0
    d_n = max(d["theorem_delta"] for d in per_i) if per_i else 0
    return ActiveSetDiagnostics(s1_full=_idx(s1), s0_full=_idx(s0), per_i=per_i, d_n=int(d_n))
