"""GLM families with closed-form loss derivatives.

All three losses are negative log-likelihoods in the linear predictor ``z``:

* gaussian: ``(y - z)**2 / (2 sigma**2)``
* logistic: ``log(1 + e^z) - y z`` with ``y`` in {0, 1}
* poisson:  ``log(y!) + s(z) - y log s(z)`` with rate ``s(z) = log(1 + e^z)``

The Poisson family uses the softplus rate rather than the canonical
exponential link.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, gammaln

from .errors import InputError

KINDS = ("gaussian", "logistic", "poisson")


@dataclass(frozen=True)
class GlmFamily:
    kind: str = "gaussian"
    noise_sd: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown family {self.kind!r}; expected one of {KINDS}")
        if self.kind == "gaussian" and not (np.isfinite(self.noise_sd) and self.noise_sd > 0):
            raise InputError("noise_sd must be positive for the gaussian family")

    def validate_response(self, y) -> np.ndarray:
        """Return ``y`` as a float array, raising InputError if it is outside the family domain."""
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise InputError("responses contain non-finite values")
        if self.kind == "logistic":
            bad = np.flatnonzero((y != 0.0) & (y != 1.0))
            if bad.size:
                raise InputError(
                    f"logistic responses must be 0 or 1; got {y[bad[0]]!r} at index {bad[0]}")
        elif self.kind == "poisson":
            bad = np.flatnonzero((y < 0) | (y != np.floor(y)))
            if bad.size:
                raise InputError(
                    f"poisson responses must be non-negative integers; got {y[bad[0]]!r} "
                    f"at index {bad[0]}")
        return y

    def to_dict(self) -> dict:
        return {"kind": self.kind, "noise_sd": float(self.noise_sd)}

    @classmethod
    def from_dict(cls, d: dict) -> "GlmFamily":
        return cls(kind=d.get("kind", "gaussian"), noise_sd=float(d.get("noise_sd", 1.0)))


def softplus(z):
    """``log(1 + e^z)`` without overflow."""
    z = np.asarray(z, dtype=float)
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def _log_softplus(z, s):
    # log(log1p(e^z)) ~ z - e^z / 2 once e^z is below double resolution of s
    return np.where(z < -30.0, z - 0.5 * np.exp(np.minimum(z, -30.0)), np.log(np.where(s > 0, s, 1.0)))


def _sigmoid_over_softplus(z, sig, s):
    # sigma(z) / s(z) -> 1 as z -> -inf, where both underflow
    tail = 1.0 - 0.5 * np.exp(np.minimum(z, -30.0))
    return np.where(z < -30.0, tail, sig / np.where(s > 0, s, 1.0))


def derivatives(family: GlmFamily, y, z):
    """Vectorised ``(loss, d1, d2)`` for arrays ``y`` and ``z``.

    No domain validation is done here; see :func:`loss_derivatives`.
    """
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if family.kind == "gaussian":
        s2 = family.noise_sd ** 2
        r = z - y
        return 0.5 * r * r / s2, r / s2, np.full(np.broadcast(y, z).shape, 1.0 / s2)
    sig = expit(z)
    sp = softplus(z)
    if family.kind == "logistic":
        return sp - y * z, sig - y, sig * (1.0 - sig)
    # poisson with softplus rate
    ratio = _sigmoid_over_softplus(z, sig, sp)
    loss = gammaln(y + 1.0) + sp - y * _log_softplus(z, sp)
    d1 = sig - y * ratio
    d2 = sig * (1.0 - sig) + y * ratio * (ratio - (1.0 - sig))
    return loss, d1, d2


def loss_derivatives(family: GlmFamily, y: float, z: float) -> tuple[float, float, float]:
    """Return ``(loss, d1, d2)`` of the family loss at a single point.

    Raises
    ------
    InputError
        If ``z`` is not finite or ``y`` is outside the family's response domain.
    """
    if not np.isfinite(z):
        raise InputError("linear predictor must be finite")
    family.validate_response(np.array([y]))
    loss, d1, d2 = derivatives(family, y, z)
    return float(loss), float(d1), float(d2)
