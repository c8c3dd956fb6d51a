"""Chain-ladder development factors, variance estimators and Mack's MSEP.

All sums run in a fixed order (ascending accident year, then ascending
development year) with plain scalar accumulation, so results are
bit-reproducible and identical to the batch kernels in ``_kernels``.

Formulas, with C[i, t] cumulative and all indices 1-based:

    f_hat[t]      = sum_{i<=T-t} C[i, t+1] / sum_{i<=T-t} C[i, t]
    sigma2_hat[t] = (T-t-1)^-1 sum_{i<=T-t} C[i, t] (C[i, t+1]/C[i, t] - f_hat[t])^2
                    for t <= T-2; the last entry t = T-1 comes from a tail rule.
    C_hat[i, t]   = C[i, T-i+1] * prod_{s=T-i+1}^{t-1} f_hat[s]
    msep[i]       = C_hat[i, T]^2 * sum_{t=T-i+1}^{T-1} (sigma2_hat[t]/f_hat[t]^2)
                    * (1/C_hat[i, t] + 1/sum_{j<=T-t} C[j, t])

The 1/C_hat addends form the process part, the 1/colsum addends the
estimation-error part; their sum is the reported MSEP.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .exceptions import EstimationError
from .triangle import Triangle

TAIL_MACK = "mack_extrapolation"
TAIL_RATIO = "ratio_extrapolation"
TAIL_USER = "user_supplied"


@dataclass(frozen=True)
class TailRule:
    """How sigma2_hat[T-1] is produced.

    mack  - Mack's minimum extrapolation
            min(sigma2[T-2]^2 / sigma2[T-3], sigma2[T-3], sigma2[T-2]),
            0 when the sigma2[T-3] divisor is 0. For T = 3 the required
            sigma2[T-3] does not exist and the rule degenerates to carrying
            sigma2[T-2] forward.
    ratio - scales sigma2[T-2] by the factor-pattern ratio
            (f[T-1]-1) f[T-1] / ((f[T-2]-1) f[T-2]), clamped at 0. Under an
            independent (delay, size) law the large-exposure limit of this
            entry has mean equal to the limit variance parameter, which the
            minimum rule does not achieve.
    user  - a fixed supplied value.
    """

    kind: str = TAIL_MACK
    value: Optional[float] = None

    def __post_init__(self):
        if self.kind not in (TAIL_MACK, TAIL_RATIO, TAIL_USER):
            raise EstimationError(f"unknown tail rule {self.kind!r}")
        if self.kind == TAIL_USER:
            if self.value is None or self.value < 0:
                raise EstimationError("user-supplied tail needs a value >= 0")
        elif self.value is not None:
            raise EstimationError(f"{self.kind} takes no value")

    @classmethod
    def mack(cls) -> "TailRule":
        return cls(TAIL_MACK)

    @classmethod
    def ratio(cls) -> "TailRule":
        return cls(TAIL_RATIO)

    @classmethod
    def user(cls, value: float) -> "TailRule":
        return cls(TAIL_USER, float(value))

    @classmethod
    def parse(cls, text: str) -> "TailRule":
        """Parse CLI syntax: 'mack', 'ratio' or 'value:<x>'."""
        if text == "mack":
            return cls.mack()
        if text == "ratio":
            return cls.ratio()
        if text.startswith("value:"):
            return cls.user(float(text.split(":", 1)[1]))
        raise EstimationError(f"cannot parse tail rule {text!r}")

    def label(self) -> str:
        if self.kind == TAIL_USER:
            return f"user_supplied({self.value!r})"
        return self.kind


@dataclass(frozen=True)
class DevEstimates:
    f_hat: np.ndarray
    sigma2_hat: np.ndarray
    tail_rule: TailRule


@dataclass(frozen=True)
class MsepRow:
    i: int
    cl_prediction: float
    mack_msep: float
    standardized_msep: float
    process_part: float
    estimation_error_part: float
    predicted_path: np.ndarray  # C_hat[i, t] for t = T-i+1 .. T

    def to_json(self) -> dict:
        return {
            "i": self.i,
            "cl_prediction": self.cl_prediction,
            "mack_msep": self.mack_msep,
            "standardized_msep": self.standardized_msep,
            "process_part": self.process_part,
            "estimation_error_part": self.estimation_error_part,
        }


@dataclass(frozen=True)
class MsepReport:
    rows: List[MsepRow]
    f_hat: np.ndarray
    sigma2_hat: np.ndarray
    tail_rule: TailRule

    def row(self, i: int) -> MsepRow:
        for r in self.rows:
            if r.i == i:
                return r
        raise KeyError(f"no MSEP row for accident year {i}")

    def to_json(self) -> dict:
        return {
            "rows": [r.to_json() for r in self.rows],
            "f_hat": list(self.f_hat),
            "sigma2_hat": list(self.sigma2_hat),
            "tail_rule": self.tail_rule.label(),
        }


def dev_factors(tri: Triangle) -> np.ndarray:
    """Column-sum ratio development factors f_hat[1..T-1] from the observed triangle."""
    T = tri.T
    cells = tri.cells
    f_hat = np.empty(T - 1)
    for t in range(T - 1):
        num = 0.0
        den = 0.0
        for i in range(T - t - 1):
            num += cells[i, t + 1]
            den += cells[i, t]
        if den == 0.0:
            raise EstimationError(f"zero column sum at t={t + 1}: f_hat[{t + 1}] undefined")
        f_hat[t] = num / den
    return f_hat


def _tail_value(sigma2: np.ndarray, f_hat: np.ndarray, tail_rule: TailRule, T: int) -> float:
    if tail_rule.kind == TAIL_USER:
        return tail_rule.value
    if tail_rule.kind == TAIL_MACK:
        if T == 3:
            return sigma2[T - 3]
        prev2 = sigma2[T - 4]
        prev1 = sigma2[T - 3]
        if prev2 == 0.0:
            return 0.0
        return min(prev1 * prev1 / prev2, prev2, prev1)
    # ratio extrapolation
    denom = (f_hat[T - 3] - 1.0) * f_hat[T - 3]
    if denom == 0.0:
        return 0.0
    return max(sigma2[T - 3] * (f_hat[T - 2] - 1.0) * f_hat[T - 2] / denom, 0.0)


def sigma2(tri: Triangle, tail_rule: TailRule = TailRule.mack(),
           f_hat: Optional[np.ndarray] = None) -> np.ndarray:
    """Variance estimators sigma2_hat[1..T-1]; the last entry follows tail_rule."""
    T = tri.T
    if T < 3:
        raise EstimationError("sigma2 needs T >= 3")
    cells = tri.cells
    if f_hat is None:
        f_hat = dev_factors(tri)
    out = np.empty(T - 1)
    for t in range(T - 2):
        acc = 0.0
        for i in range(T - t - 1):
            c = cells[i, t]
            if c == 0.0:
                raise EstimationError(
                    f"zero cell at (i={i + 1}, t={t + 1}): ratio in sigma2_hat[{t + 1}] undefined"
                )
            r = cells[i, t + 1] / c - f_hat[t]
            acc += c * r * r
        out[t] = acc / (T - t - 2)
    out[T - 2] = _tail_value(out, f_hat, tail_rule, T)
    return out


def estimate(tri: Triangle, tail_rule: TailRule = TailRule.mack()) -> DevEstimates:
    f_hat = dev_factors(tri)
    return DevEstimates(f_hat=f_hat, sigma2_hat=sigma2(tri, tail_rule, f_hat),
                        tail_rule=tail_rule)


def cl_predict(tri: Triangle, f_hat: np.ndarray):
    """Complete the square with the chain-ladder predictor.

    Returns (square, ultimates): the square keeps observed cells untouched
    and fills t > T-i+1 with C[i, T-i+1] * prod f_hat; ultimates is the
    per-row prediction C_hat[i, T].
    """
    T = tri.T
    if len(f_hat) != T - 1:
        raise EstimationError(f"f_hat must have length {T - 1}")
    square = tri.cells.copy()
    ultimates = np.empty(T)
    for i in range(T):
        first_unobs = T - i  # 0-based column of the first predicted cell
        value = square[i, first_unobs - 1]
        for t in range(first_unobs, T):
            value = value * f_hat[t - 1]
            square[i, t] = value
        ultimates[i] = square[i, T - 1]
    return square, ultimates


def mack_msep(tri: Triangle, f_hat: np.ndarray, sigma2_hat: np.ndarray,
              tail_rule: TailRule = TailRule.mack()) -> MsepReport:
    """Mack's conditional-MSEP estimator for every accident year i >= 2."""
    T = tri.T
    cells = tri.cells
    if len(f_hat) != T - 1 or len(sigma2_hat) != T - 1:
        raise EstimationError(f"f_hat and sigma2_hat must have length {T - 1}")
    colsum = np.empty(T - 1)
    for t in range(T - 1):
        acc = 0.0
        for i in range(T - t - 1):
            acc += cells[i, t]
        colsum[t] = acc
    rows = []
    for i in range(2, T + 1):
        m = T - i + 1  # 1-based diagonal column
        c_diag = cells[i - 1, m - 1]
        path = np.empty(i)  # C_hat[i, t] for t = m .. T
        path[0] = c_diag
        for k, t in enumerate(range(m + 1, T + 1), start=1):
            path[k] = path[k - 1] * f_hat[t - 2]
        process = 0.0
        estim = 0.0
        for t in range(m, T):  # 1-based t = m .. T-1
            fh = f_hat[t - 1]
            if fh <= 0.0:
                raise EstimationError(f"f_hat[{t}] <= 0: MSEP undefined for i={i}")
            c_hat = path[t - m]
            if c_hat == 0.0:
                raise EstimationError(f"zero predicted value at (i={i}, t={t})")
            if colsum[t - 1] == 0.0:
                raise EstimationError(f"zero column sum at t={t} in MSEP for i={i}")
            w = sigma2_hat[t - 1] / (fh * fh)
            process += w * (1.0 / c_hat)
            estim += w * (1.0 / colsum[t - 1])
        ult2 = path[i - 1] * path[i - 1]
        process *= ult2
        estim *= ult2
        msep = process + estim
        rows.append(MsepRow(
            i=i,
            cl_prediction=path[i - 1],
            mack_msep=msep,
            standardized_msep=msep / c_diag if c_diag != 0.0 else float("nan"),
            process_part=process,
            estimation_error_part=estim,
            predicted_path=path,
        ))
    return MsepReport(rows=rows, f_hat=np.asarray(f_hat, dtype=np.float64),
                      sigma2_hat=np.asarray(sigma2_hat, dtype=np.float64),
                      tail_rule=tail_rule)
