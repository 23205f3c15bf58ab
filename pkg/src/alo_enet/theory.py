r"""Scalar fixed-point description of the elastic net in the proportional regime.

With ``Theta`` uniform on the entries of ``beta_star`` and ``Z ~ N(0, 1)``
independent, define for ``tau, b > 0``

    w(tau, b) = c * soft(Theta + tau Z, t) - Theta,
    c = b / (b + 2 * ridge * tau),     t = l1 * tau / b.

The pair ``(tau*, b*)`` solves

    tau^2 = sigma^2 + E[w^2] / gamma0,
    b     = tau - E[Z w] / gamma0,

and the limiting law of the fitted coefficients is that of ``w + Theta``.
Both expectations are Gaussian integrals of a piecewise-linear function of
``Z`` and are evaluated in closed form.

The weights are those of the objective

    sum_i (y_i - x_i' beta)^2 / 2 + l1 ||beta||_1 + ridge ||beta||_2^2

for a design with iid ``N(0, 1/n)`` entries.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from .errors import InputError, NumericError

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)
MAX_DOUBLINGS = 60


def _pdf(x):
    return _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def soft(x, r):
    """Soft threshold ``sign(x) * max(|x| - r, 0)``, elementwise."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise InputError("threshold must be non-negative")
    x = np.asarray(x, dtype=float)
    out = np.sign(x) * np.maximum(np.abs(x) - r, 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class TheoryInput:
    beta_star: np.ndarray
    sigma: float
    gamma0: float
    l1_weight: float
    ridge_weight: float

    def __post_init__(self):
        b = np.asarray(self.beta_star, dtype=float).reshape(-1)
        if b.size == 0 or not np.all(np.isfinite(b)):
            raise InputError("beta_star must be a non-empty finite vector")
        if not self.sigma > 0:
            raise InputError("sigma must be positive")
        if not self.gamma0 > 0:
            raise InputError("gamma0 must be positive")
        if not self.l1_weight >= 0 or not self.ridge_weight >= 0:
            raise InputError("penalty weights must be non-negative")
        object.__setattr__(self, "beta_star", b)
        vals, counts = np.unique(b, return_counts=True)
        # the law of Theta only depends on distinct values and their frequencies
        object.__setattr__(self, "_atoms", vals)
        object.__setattr__(self, "_probs", counts / b.size)

    @property
    def atoms(self) -> np.ndarray:
        return self._atoms

    @property
    def probs(self) -> np.ndarray:
        return self._probs


@dataclass(frozen=True)
class ScalarSolution:
    tau_star: float
    b_star: float
    s_star: float
    residuals: tuple
    bracket: tuple  # (b_min, b_max, tau_max)

    def to_dict(self) -> dict:
        return {
            "tau_star": float(self.tau_star),
            "b_star": float(self.b_star),
            "s_star": float(self.s_star),
            "residuals": [float(r) for r in self.residuals],
            "bracket": [float(v) for v in self.bracket],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _shrink_threshold(inp: TheoryInput, tau: float, b: float):
    c = b / (b + 2.0 * inp.ridge_weight * tau)
    t = inp.l1_weight * tau / b
    return c, t


def _component_integrals(a, r):
    """``E[s]``, ``E[s^2]`` and ``P(s != 0)`` for ``s = soft(a + Z, r)``, per component."""
    m = a - r
    mp = a + r
    cdf_m, cdf_mp = ndtr(m), ndtr(-mp)
    pdf_m, pdf_mp = _pdf(m), _pdf(mp)
    s1 = m * cdf_m + pdf_m + mp * cdf_mp - pdf_mp
    s2 = (m * m + 1.0) * cdf_m + m * pdf_m + (mp * mp + 1.0) * cdf_mp - mp * pdf_mp
    return s1, s2, cdf_m + cdf_mp


def w_hat_f_moments(inp: TheoryInput, tau: float, b: float):
    """Closed-form ``(E[w^2], E[Z w])`` at ``(tau, b)``.

    Returns
    -------
    m2, zcorr : float
    """
    if not (tau > 0 and b > 0):
        raise InputError("tau and b must be positive")
    c, t = _shrink_threshold(inp, tau, b)
    theta, pr = inp.atoms, inp.probs
    s1, s2, nz = _component_integrals(theta / tau, t / tau)
    m2 = c * c * tau * tau * s2 - 2.0 * c * tau * theta * s1 + theta * theta
    # Stein: E[Z soft(theta + tau Z, t)] = tau P(|theta + tau Z| > t)
    zc = c * tau * nz
    return float(pr @ np.maximum(m2, 0.0)), float(pr @ zc)


def fixed_point_residuals(inp: TheoryInput, tau: float, b: float):
    m2, zc = w_hat_f_moments(inp, tau, b)
    return (tau * tau - inp.sigma ** 2 - m2 / inp.gamma0,
            b - tau + zc / inp.gamma0)


def _expand(f, lo, hi, want_positive_at_hi: bool, what: str):
    """Double ``hi`` until ``f(hi)`` has the requested sign."""
    for _ in range(MAX_DOUBLINGS):
        v = f(hi)
        if not np.isfinite(v):
            raise NumericError(f"non-finite value while bracketing {what}")
        if (v > 0) == want_positive_at_hi:
            return hi
        lo, hi = hi, 2.0 * hi
    raise NumericError(f"could not bracket {what} after {MAX_DOUBLINGS} doublings; "
                       "check the scaling of the inputs")


def _tau_of_b(inp: TheoryInput, b: float, tau_cap: float) -> tuple[float, float]:
    """Unique root in ``tau > sigma`` of ``1 - sigma^2/tau^2 - E[w^2]/(gamma0 tau^2)``."""
    sigma = inp.sigma

    def f(tau):
        m2, _ = w_hat_f_moments(inp, tau, b)
        return 1.0 - (sigma * sigma + m2 / inp.gamma0) / (tau * tau)

    f_lo = f(sigma)
    if f_lo >= 0.0:
        # w vanishes at tau = sigma
        return sigma, tau_cap
    cap = _expand(f, sigma, max(tau_cap, 2.0 * sigma), True, "tau")
    tau = brentq(f, sigma, cap, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return tau, cap


def solve_fixed_point(inp: TheoryInput) -> ScalarSolution:
    """Solve the two-equation system for ``(tau*, b*)``.

    For fixed ``b`` the first equation has a unique root ``tau0(b)``, found by
    Brent's method on a bracket whose upper end is doubled as needed. The
    map ``g(b) = tau0(b) - b - E[Z w]/gamma0`` is decreasing, positive as
    ``b -> 0`` and negative for large ``b``; its root is again bracketed by
    doubling and refined by Brent's method.

    Raises
    ------
    NumericError
        If either bracket cannot be closed within ``MAX_DOUBLINGS`` doublings.
    """
    sigma = inp.sigma
    scale = np.sqrt(sigma ** 2 + float(inp.probs @ inp.atoms ** 2) / inp.gamma0)
    state = {"tau_cap": 2.0 * scale}

    def g(b):
        tau, cap = _tau_of_b(inp, b, state["tau_cap"])
        state["tau_cap"] = max(state["tau_cap"], cap)
        _, zc = w_hat_f_moments(inp, tau, b)
        return tau - b - zc / inp.gamma0

    b_min = 1e-12 * sigma
    if not g(b_min) > 0:
        raise NumericError("fixed-point map is not positive near b = 0")
    b_max = _expand(g, b_min, scale, False, "b")
    if g(b_max) == 0.0:
        b_star = b_max
    else:
        b_star = brentq(g, b_min, b_max, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    tau_star, _ = _tau_of_b(inp, b_star, state["tau_cap"])
    res = fixed_point_residuals(inp, tau_star, b_star)
    if not all(np.isfinite(res)):
        raise NumericError("fixed-point residuals are not finite")
    return ScalarSolution(tau_star=float(tau_star), b_star=float(b_star),
                          s_star=s_star(inp, tau_star, b_star),
                          residuals=(float(res[0]), float(res[1])),
                          bracket=(float(b_min), float(b_max), float(state["tau_cap"])))


def s_star(inp: TheoryInput, tau_star: float, b_star: float) -> float:
    """Limiting fraction of nonzero coefficients, ``P(|Theta + tau* Z| > l1 tau*/b*)``."""
    a = inp.atoms / tau_star
    r = inp.l1_weight / b_star
    return float(min(1.0, inp.probs @ (ndtr(a - r) + ndtr(-a - r))))


# ------------------------------------------------------------ limiting law

def limiting_cdf(inp: TheoryInput, sol: ScalarSolution, x):
    """CDF of the limiting coefficient law ``c * soft(Theta + tau* Z, t)``; right-continuous."""
    c, t = _shrink_threshold(inp, sol.tau_star, sol.b_star)
    x = np.asarray(x, dtype=float)
    u = np.where(x >= 0.0, t + x / c, -t + x / c)
    z = (u[..., None] - inp.atoms) / sol.tau_star
    out = ndtr(z) @ inp.probs
    return float(out) if out.ndim == 0 else out


def _cdf_below_zero(inp, sol):
    _, t = _shrink_threshold(inp, sol.tau_star, sol.b_star)
    return float(inp.probs @ ndtr((-t - inp.atoms) / sol.tau_star))


def limiting_quantile(inp: TheoryInput, sol: ScalarSolution, q):
    """Generalised inverse ``inf{x : F(x) >= q}`` of :func:`limiting_cdf`.

    Quantiles inside the atom at zero return exactly 0; others are located
    by bisection to an absolute width of ``1e-12`` times the support scale.
    """
    q = np.asarray(q, dtype=float)
    scalar = q.ndim == 0
    q = np.atleast_1d(q)
    if np.any((q <= 0.0) | (q >= 1.0)):
        raise InputError("quantile levels must lie in (0, 1)")
    c, t = _shrink_threshold(inp, sol.tau_star, sol.b_star)
    f0m = _cdf_below_zero(inp, sol)
    f0 = float(limiting_cdf(inp, sol, 0.0))
    tau = sol.tau_star
    span = c * (np.max(np.abs(inp.atoms)) + t + 40.0 * tau)
    out = np.zeros_like(q)
    in_atom = (q > f0m) & (q <= f0)
    todo = np.flatnonzero(~in_atom)
    for chunk in np.array_split(todo, max(1, todo.size // 4096 + 1)):
        if chunk.size == 0:
            continue
        qq = q[chunk]
        lo = np.where(qq <= f0m, -span, 0.0)
        hi = np.where(qq <= f0m, 0.0, span)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            below = limiting_cdf(inp, sol, mid) < qq
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.max(hi - lo) <= 1e-12 * span:
                break
        out[chunk] = hi
    return float(out[0]) if scalar else out


def sample_limit(inp: TheoryInput, sol: ScalarSolution, size: int, rng) -> np.ndarray:
    """Draw from the limiting coefficient law."""
    c, t = _shrink_threshold(inp, sol.tau_star, sol.b_star)
    theta = rng.choice(inp.atoms, size=size, p=inp.probs)
    return c * soft(theta + sol.tau_star * rng.standard_normal(size), t)


def wasserstein2_to_limit(beta_hat, inp: TheoryInput, sol: ScalarSolution) -> float:
    """W2 between the empirical law of ``beta_hat`` and the limit, by quantile coupling."""
    b = np.sort(np.asarray(beta_hat, dtype=float).reshape(-1))
    p = b.size
    qs = limiting_quantile(inp, sol, (np.arange(1, p + 1) - 0.5) / p)
    return float(np.sqrt(np.mean((b - qs) ** 2)))


def sparsity_check(fit_result, sol: ScalarSolution):
    """``(|S|/p, s*, gap)`` for a fitted model."""
    p = len(fit_result.beta)
    emp = len(fit_result.active_set) / p
    return emp, sol.s_star, abs(emp - sol.s_star)


def subgradient_tail_check(fit_result, sol: ScalarSolution, eps: float):
    """Fraction of coordinates with ``|g_k| >= 1 - eps``, and ``s*`` to compare it with."""
    if not 0.0 < eps <= 1.0:
        raise InputError("eps must lie in (0, 1]")
    g = np.asarray(fit_result.subgrad, dtype=float)
    frac = float(np.mean(np.abs(g) >= 1.0 - eps))
    return frac, sol.s_star


def theory_input_for(beta_star, penalty, n: int, noise_sd: float = 1.0,
                     column_variance: Optional[float] = None):
    """Map a gaussian elastic-net problem onto the fixed-point inputs.

    The loss ``(y - z)^2 / (2 sigma^2)`` times ``sigma^2`` is the unit-scaled
    squared error, so the weights become ``sigma^2 lambda (1 - eta)`` and
    ``sigma^2 lambda eta``. A design with entry variance ``v`` other than
    ``1/n`` is reduced to the ``1/n`` case by rescaling coefficients with
    ``s = sqrt(v n)``.

    Returns
    -------
    inp : TheoryInput
    scale : float
        Multiply fitted coefficients by ``scale`` before comparing them with
        the limiting law.
    """
    beta_star = np.asarray(beta_star, dtype=float)
    p = beta_star.shape[0]
    v = 1.0 / n if column_variance is None else float(column_variance)
    s = np.sqrt(v * n)
    s2 = noise_sd ** 2
    inp = TheoryInput(beta_star=s * beta_star, sigma=float(noise_sd), gamma0=n / p,
                      l1_weight=s2 * penalty.l1_weight / s,
                      ridge_weight=s2 * penalty.ridge_weight / (s * s))
    return inp, float(s)
