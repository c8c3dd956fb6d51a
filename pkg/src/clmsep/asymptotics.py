"""Closed-form large-exposure limits and derived parameters.

As exposure grows, the chain-ladder development factors converge to

    f[t] = E[Z 1{D<=t+1}] / E[Z 1{D<=t}],

the variance estimators converge in distribution to

    sigma2[t] * chi2(T-t-1)/(T-t-1),
    sigma2[t] = (f[t]-1) (E[Z^2 1{D=t+1}]/E[Z 1{D=t+1}]
                          + (f[t]-1) E[Z^2 1{D<=t}]/E[Z 1{D<=t}]),

and the scaled estimation-error statistic C (prod f - prod f_hat)^2
converges to gamma2[i] * chi2(1). This module evaluates those limits, the
delay-weight transform of the factors, the expectation identity for the
conditional process term, and the covariance structure of the renewal
central limit theorem.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .exceptions import SpecError
from .models import ModelSpec, dist_moments


def limit_dev_factors(spec: ModelSpec) -> np.ndarray:
    """Limits f[1..T-1] of the development-factor estimators."""
    mom = dist_moments(spec)
    cum = np.cumsum(mom.ez_ind)
    if np.any(cum <= 0):
        raise SpecError("E[Z 1{D<=t}] must be positive for every t")
    return cum[1:] / cum[:-1]


def limit_sigma2(spec: ModelSpec) -> np.ndarray:
    """Limit variance parameters sigma2[1..T-1].

    When a development year has no claim mass (E[Z 1{D=t+1}] = 0) the
    expression is 0/0 with a vanishing (f[t]-1) prefactor; the limit is
    defined as 0 by continuity.
    """
    mom = dist_moments(spec)
    cum_ez = np.cumsum(mom.ez_ind)
    cum_ez2 = np.cumsum(mom.ez2_ind)
    f = limit_dev_factors(spec)
    out = np.zeros(spec.T - 1)
    for t in range(spec.T - 1):
        if mom.ez_ind[t + 1] == 0.0:
            continue
        first = mom.ez2_ind[t + 1] / mom.ez_ind[t + 1]
        second = (f[t] - 1.0) * cum_ez2[t] / cum_ez[t]
        out[t] = (f[t] - 1.0) * (first + second)
    return out


def f_to_qtilde(f: Sequence[float]) -> np.ndarray:
    """Transform development factors into size-weighted delay probabilities.

    q_tilde[1]   = 1 / prod(f)
    q_tilde[t+1] = (f[t] - 1) * prod_{s<t} f[s] / prod(f)

    The entries telescope to sum 1 for any positive factors.
    """
    f = np.asarray(f, dtype=np.float64)
    if np.any(f <= 0):
        raise SpecError("development factors must be positive")
    total = float(np.prod(f))
    out = np.empty(len(f) + 1)
    out[0] = 1.0 / total
    prefix = 1.0
    for t in range(len(f)):
        out[t + 1] = (f[t] - 1.0) * prefix / total
        prefix *= f[t]
    return out


def gamma2(spec: ModelSpec, i: int) -> float:
    """Limit scale of the estimation-error term for accident year i >= 2.

    Closed form (independent (D, Z) only):

        gamma2[i] = lam[i] E[Z] P(D<=T-i+1) * prod_{s=T-i+1}^{T-1} f[s]^2
                    * sum_{t=T-i+1}^{T-1} (sigma2[t]/f[t]^2)
                      / sum_{j<=T-t} lam[j] E[Z] P(D<=t)
    """
    if not spec.independent_delay:
        raise SpecError("gamma2 has a closed form only for independent (D, Z); "
                        "use the Monte Carlo harness for joint laws")
    if i < 2 or i > spec.T:
        raise SpecError(f"accident year i must be in 2..{spec.T}")
    mom = dist_moments(spec)
    f = limit_dev_factors(spec)
    s2 = limit_sigma2(spec)
    T = spec.T
    m = T - i + 1
    acc = 0.0
    for t in range(m, T):  # 1-based t
        den = 0.0
        for j in range(T - t):
            den += mom.lam[j] * mom.ez * mom.cdf_delay[t - 1]
        acc += (s2[t - 1] / (f[t - 1] ** 2)) / den
    prod2 = float(np.prod(f[m - 1:T - 1])) ** 2
    return mom.lam[i - 1] * mom.ez * mom.cdf_delay[m - 1] * prod2 * acc


def process_term_expectation(spec: ModelSpec, i: int) -> Tuple[float, float]:
    """Both closed forms of the limit mean of the conditional process term.

    lhs uses the raw model quantities,

        (lam[i] E[Z^2] P(D>T-i+1) + lam[i] E[Z^2] P(D<=T-i+1) (g-1)^2)
        / (lam[i] E[Z] P(D<=T-i+1)),   g = prod_{s=T-i+1}^{T-1} f[s],

    rhs the development-pattern form,

        sum_{t=T-i+1}^{T-1} f[T-i+1] ... f[t-1] * sigma2[t] * f[t+1]^2 ... f[T-1]^2.

    They are equal; both are returned so tests can assert the identity.
    Requires the compound-Poisson setting (poisson counting, independent
    (D, Z)).
    """
    if spec.counting != "poisson" or not spec.independent_delay:
        raise SpecError("process_term_expectation requires poisson counting "
                        "and independent (D, Z)")
    if i < 2 or i > spec.T:
        raise SpecError(f"accident year i must be in 2..{spec.T}")
    mom = dist_moments(spec)
    f = limit_dev_factors(spec)
    s2 = limit_sigma2(spec)
    T = spec.T
    m = T - i + 1
    p_le = mom.cdf_delay[m - 1]
    p_gt = float(np.sum(mom.p_delay[m:]))
    g = float(np.prod(f[m - 1:T - 1]))
    lam_i = mom.lam[i - 1]
    lhs = (lam_i * mom.ez2 * p_gt + lam_i * mom.ez2 * p_le * (g - 1.0) ** 2) \
        / (lam_i * mom.ez * p_le)
    rhs = 0.0
    for t in range(m, T):  # 1-based t
        left = float(np.prod(f[m - 1:t - 1]))
        right = float(np.prod(f[t:T - 1])) ** 2
        rhs += left * s2[t - 1] * right
    return lhs, rhs


def renewal_clt_cov(spec: ModelSpec, j: int) -> np.ndarray:
    """Limit covariance of the scaled incremental-claims vector of year j.

    Sigma[s, t] = lam[j] E[Z^2 1{D=s} 1{D=t}]
                  + lam[j] (lam[j]^2 var(Y) - 1) E[Z 1{D=s}] E[Z 1{D=t}]

    The first term is diagonal (a claim has one delay year). Poisson
    counting has lam^2 var(Y) = 1, killing the correction.
    """
    if j < 1 or j > spec.T:
        raise SpecError(f"accident year j must be in 1..{spec.T}")
    mom = dist_moments(spec)
    lam = mom.lam[j - 1]
    correction = lam * (lam * lam * mom.var_y[j - 1] - 1.0)
    sigma = np.diag(lam * mom.ez2_ind)
    sigma = sigma + correction * np.outer(mom.ez_ind, mom.ez_ind)
    return sigma


@dataclass(frozen=True)
class HFMoments:
    """Joint normal limit of the scaled (observed diagonal, future) pair."""

    var_h: float
    var_f: float
    cov_hf: float


def hf_moments(spec: ModelSpec, j: int, split_year: int) -> HFMoments:
    """Limit moments of (H, F) for year j split after development year t."""
    if not 1 <= split_year <= spec.T:
        raise SpecError(f"split year must be in 1..{spec.T}")
    mom = dist_moments(spec)
    lam = mom.lam[j - 1]
    correction = lam * (lam * lam * mom.var_y[j - 1] - 1.0)
    ez_le = float(np.sum(mom.ez_ind[:split_year]))
    ez_gt = float(np.sum(mom.ez_ind[split_year:]))
    ez2_le = float(np.sum(mom.ez2_ind[:split_year]))
    ez2_gt = float(np.sum(mom.ez2_ind[split_year:]))
    return HFMoments(
        var_h=lam * ez2_le + correction * ez_le * ez_le,
        var_f=lam * ez2_gt + correction * ez_gt * ez_gt,
        cov_hf=correction * ez_le * ez_gt,
    )


def quadratic_form_eigs(cov: np.ndarray, atol: float = 1e-10) -> np.ndarray:
    """Eigenvalues of a symmetric PSD matrix, descending.

    The squared norm of a centered Gaussian vector with covariance ``cov``
    is distributed as the eigenvalue-weighted sum of independent chi2(1)
    variables, so these eigenvalues characterize quadratic-form limits.
    """
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise SpecError("covariance must be square")
    if np.max(np.abs(cov - cov.T)) > atol:
        raise SpecError("covariance must be symmetric")
    return np.linalg.eigvalsh(cov)[::-1]


@dataclass(frozen=True)
class AsymptoticQuantities:
    f_limit: np.ndarray
    sigma2_limit: np.ndarray
    q_tilde: np.ndarray
    gamma2: Dict[int, float]
    clt_cov: Optional[np.ndarray] = None
    hf: Optional[HFMoments] = None

    def to_json(self) -> dict:
        out = {
            "f_limit": list(self.f_limit),
            "sigma2_limit": list(self.sigma2_limit),
            "q_tilde": list(self.q_tilde),
            "gamma2": {str(k): v for k, v in self.gamma2.items()},
        }
        if self.clt_cov is not None:
            out["clt_cov"] = [list(row) for row in self.clt_cov]
        if self.hf is not None:
            out["hf_moments"] = {
                "var_h": self.hf.var_h,
                "var_f": self.hf.var_f,
                "cov_hf": self.hf.cov_hf,
            }
        return out


def asymptotic_quantities(spec: ModelSpec, years: Optional[Sequence[int]] = None,
                          clt_year: Optional[int] = None,
                          split_year: Optional[int] = None) -> AsymptoticQuantities:
    """Bundle the limits used by the experiment harness."""
    f = limit_dev_factors(spec)
    gammas: Dict[int, float] = {}
    if years and spec.independent_delay:
        gammas = {int(i): gamma2(spec, int(i)) for i in years}
    cov = renewal_clt_cov(spec, clt_year) if clt_year is not None else None
    hf = (hf_moments(spec, clt_year, split_year)
          if clt_year is not None and split_year is not None else None)
    return AsymptoticQuantities(
        f_limit=f,
        sigma2_limit=limit_sigma2(spec),
        q_tilde=f_to_qtilde(f),
        gamma2=gammas,
        clt_cov=cov,
        hf=hf,
    )
