"""Exact standardized conditional MSEP under the compound-Poisson model.

Conditional on the observed triangle, the future claims of accident year i
form an independent compound-Poisson sum S = Z_1 + ... + Z_N with
N ~ Poisson(alpha * lam[i] * P(D > T-i+1)), so the standardized conditional
MSEP of the chain-ladder prediction is a closed-form function of the
triangle:

    L = E[S^2]/C - 2 (g_hat - 1) E[S] + C (g_hat - 1)^2,

    C      = C[i, T-i+1]              (observed diagonal cell)
    g_hat  = prod_{s=T-i+1}^{T-1} f_hat[s]
    E[S]   = E[N] E[Z]
    E[S^2] = E[N] var(Z) + E[N] E[Z]^2 + E[N]^2 E[Z]^2.

Splitting the prediction error around the limit factors g = prod f[s]
gives the exact decomposition L = term1 + term2 + term3 with

    term1 = (alpha/C) (lam[i] E[Z^2] P(D>T-i+1) + H^2 (g-1)^2),
            H^2 = (C - E[C])^2 / alpha
    term2 = C (g - g_hat)^2
    term3 = 2 (E[N] E[Z] - C (g-1)) (g - g_hat).

All quantities are analytic; no inner simulation is involved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .asymptotics import limit_dev_factors
from .exceptions import SpecError
from .models import ModelSpec, dist_moments
from .triangle import Triangle


@dataclass(frozen=True)
class OracleResult:
    i: int
    L_alpha: float
    term1: float
    term2: float
    term3: float
    future_count_mean: float

    def to_json(self) -> dict:
        return {
            "i": self.i,
            "L_alpha": self.L_alpha,
            "term1": self.term1,
            "term2": self.term2,
            "term3": self.term3,
            "future_count_mean": self.future_count_mean,
        }


def _check_special(spec: ModelSpec, i: int):
    if spec.counting != "poisson" or not spec.independent_delay:
        raise SpecError("the exact MSEP oracle requires poisson counting and "
                        "independent (D, Z)")
    if i < 2 or i > spec.T:
        raise SpecError(f"accident year i must be in 2..{spec.T}")


def oracle_result(tri: Triangle, spec: ModelSpec, f_hat: np.ndarray, i: int) -> OracleResult:
    """Exact standardized conditional MSEP and its three-term split for year i."""
    _check_special(spec, i)
    T = spec.T
    if tri.T != T:
        raise SpecError("triangle size does not match spec")
    mom = dist_moments(spec)
    m = T - i + 1
    c_diag = float(tri.cells[i - 1, m - 1])
    if c_diag <= 0.0:
        raise SpecError(f"C[{i}, {m}] must be positive for the oracle")
    f_hat = np.asarray(f_hat, dtype=np.float64)
    g_hat = float(np.prod(f_hat[m - 1:T - 1]))
    p_gt = float(np.sum(mom.p_delay[m:]))
    en = spec.alpha * mom.lam[i - 1] * p_gt
    e_sum = en * mom.ez
    e_sum2 = en * mom.varz + en * mom.ez ** 2 + en * en * mom.ez ** 2
    L = e_sum2 / c_diag - 2.0 * (g_hat - 1.0) * e_sum + c_diag * (g_hat - 1.0) ** 2

    f_lim = limit_dev_factors(spec)
    g = float(np.prod(f_lim[m - 1:T - 1]))
    ec = spec.alpha * mom.lam[i - 1] * mom.ez * mom.cdf_delay[m - 1]
    h2 = (c_diag - ec) ** 2 / spec.alpha if spec.alpha > 0 else 0.0
    term1 = (spec.alpha / c_diag) * (mom.lam[i - 1] * mom.ez2 * p_gt
                                     + h2 * (g - 1.0) ** 2) if spec.alpha > 0 else 0.0
    term2 = c_diag * (g - g_hat) ** 2
    term3 = 2.0 * (e_sum - c_diag * (g - 1.0)) * (g - g_hat)
    return OracleResult(i=i, L_alpha=L, term1=term1, term2=term2, term3=term3,
                        future_count_mean=en)


def true_std_cmsep(tri: Triangle, spec: ModelSpec, f_hat: np.ndarray, i: int) -> float:
    """Exact standardized conditional MSEP of the chain-ladder prediction."""
    return oracle_result(tri, spec, f_hat, i).L_alpha


def decompose(tri: Triangle, spec: ModelSpec, f_hat: np.ndarray, i: int):
    """The (term1, term2, term3) split; the terms sum to true_std_cmsep."""
    res = oracle_result(tri, spec, f_hat, i)
    return res.term1, res.term2, res.term3
