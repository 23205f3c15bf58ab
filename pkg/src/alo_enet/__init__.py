"""Approximate leave-one-out risk estimation for elastic-net regularised GLMs."""

from .data import Dataset, SyntheticSpec, load_csv, make_synthetic, snr
from .diagnostics import ActiveSetDiagnostics, DiagnosticsConfig, active_set_diagnostics
from .errors import InputError, NumericError
from .families import GlmFamily, loss_derivatives
from .risk import RiskReport, alo, alo_smoothed, h_diagonal, lo_exact, oo_estimate
from .solver import (FitResult, Penalty, SmoothedFitResult, fit, fit_loo, fit_smoothed,
                     kkt_residual, smoothed_derivatives, subgradient)
from .theory import (ScalarSolution, TheoryInput, limiting_cdf, limiting_quantile, s_star,
                     soft, solve_fixed_point, sparsity_check, subgradient_tail_check,
                     theory_input_for, w_hat_f_moments, wasserstein2_to_limit)

__version__ = "0.1.0"
