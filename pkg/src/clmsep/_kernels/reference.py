"""Pure-Python batch kernels (reference backend).

These loops define the exact operation order for per-replication estimator
chains; the compiled backend in ``_fast.pyx`` mirrors them statement for
statement so both produce bit-identical results. Keep the two files in
sync.

Failing replications (zero denominators anywhere in the chain) get ok=0
and NaN outputs instead of raising; the harness counts them.
"""

import math

import numpy as np

TAIL_MACK = 0
TAIL_RATIO = 1
TAIL_USER = 2

# year_stats output columns
COL_L_HAT = 0
COL_L_TRUE = 1
COL_TERM1 = 2
COL_TERM2 = 3
COL_TERM3 = 4
COL_C_DIAG = 5
COL_GAMMA2_PLUGIN = 6
COL_A1 = 7
COL_A2 = 8
COL_PRED_RATIO = 9
NCOLS = 10

_NAN = float("nan")


def chain_stats(cum, tail_kind, tail_value):
    """Development factors, variance estimators and column sums per replication.

    cum: (R, T, T) float64 cumulative squares.
    Returns (f_hat, sigma2, colsum, ok) with shapes (R, T-1) x3 and (R,).
    """
    R, T, _ = cum.shape
    f_hat = np.full((R, T - 1), _NAN)
    sigma2 = np.full((R, T - 1), _NAN)
    colsum = np.full((R, T - 1), _NAN)
    ok = np.ones(R, dtype=np.uint8)
    for r in range(R):
        good = True
        for t in range(T - 1):
            num = 0.0
            den = 0.0
            for i in range(T - t - 1):
                num += cum[r, i, t + 1]
                den += cum[r, i, t]
            colsum[r, t] = den
            if den == 0.0:
                good = False
                break
            f_hat[r, t] = num / den
        if good:
            for t in range(T - 2):
                acc = 0.0
                for i in range(T - t - 1):
                    c = cum[r, i, t]
                    if c == 0.0:
                        good = False
                        break
                    rr = cum[r, i, t + 1] / c - f_hat[r, t]
                    acc += c * rr * rr
                if not good:
                    break
                sigma2[r, t] = acc / (T - t - 2)
        if good:
            if tail_kind == TAIL_USER:
                sigma2[r, T - 2] = tail_value
            elif tail_kind == TAIL_MACK:
                if T == 3:
                    sigma2[r, T - 2] = sigma2[r, T - 3]
                else:
                    prev2 = sigma2[r, T - 4]
                    prev1 = sigma2[r, T - 3]
                    if prev2 == 0.0:
                        sigma2[r, T - 2] = 0.0
                    else:
                        v = prev1 * prev1 / prev2
                        if prev2 < v:
                            v = prev2
                        if prev1 < v:
                            v = prev1
                        sigma2[r, T - 2] = v
            else:
                denom = (f_hat[r, T - 3] - 1.0) * f_hat[r, T - 3]
                if denom == 0.0:
                    sigma2[r, T - 2] = 0.0
                else:
                    v = sigma2[r, T - 3] * (f_hat[r, T - 2] - 1.0) * f_hat[r, T - 2] / denom
                    sigma2[r, T - 2] = v if v > 0.0 else 0.0
        if not good:
            ok[r] = 0
            for t in range(T - 1):
                f_hat[r, t] = _NAN
                sigma2[r, t] = _NAN
    return f_hat, sigma2, colsum, ok


def year_stats(cum, f_hat, sigma2, colsum, ok, year, alpha,
               esum, esum2, ec, g, pgt_term):
    """Per-replication MSEP statistics for one accident year.

    year is 1-based (>= 2). Scalar inputs are precomputed model quantities:
    esum = E[N] E[Z], esum2 = E[(sum Z)^2], ec = E[C diagonal],
    g = product of limit factors, pgt_term = lam_i E[Z^2] P(D > T-i+1).
    Returns (R, NCOLS) float64; failing rows are NaN with ok_out=0.
    """
    R, T, _ = cum.shape
    out = np.full((R, NCOLS), _NAN)
    ok_out = np.zeros(R, dtype=np.uint8)
    i0 = year - 1
    m = T - year + 1  # 1-based diagonal column
    sqrt_alpha = math.sqrt(alpha) if alpha > 0.0 else 0.0
    for r in range(R):
        if not ok[r]:
            continue
        c_diag = cum[r, i0, m - 1]
        if c_diag <= 0.0:
            continue
        good = True
        chat = c_diag
        ghat = 1.0
        process = 0.0
        estim_raw = 0.0
        for t in range(m, T):  # 1-based t = m .. T-1
            fh = f_hat[r, t - 1]
            if fh <= 0.0 or chat == 0.0 or colsum[r, t - 1] == 0.0:
                good = False
                break
            w = sigma2[r, t - 1] / (fh * fh)
            process += w * (1.0 / chat)
            estim_raw += w * (1.0 / colsum[r, t - 1])
            chat = chat * fh
            ghat = ghat * fh
        if not good:
            continue
        ult2 = chat * chat
        process = process * ult2
        estim = estim_raw * ult2
        msep = process + estim
        l_hat = msep / c_diag
        gm1 = ghat - 1.0
        l_true = esum2 / c_diag - 2.0 * gm1 * esum + c_diag * gm1 * gm1
        dc = c_diag - ec
        if alpha > 0.0:
            term1 = (alpha / c_diag) * (pgt_term + (dc * dc / alpha) * (g - 1.0) * (g - 1.0))
        else:
            term1 = 0.0
        dg = g - ghat
        term2 = c_diag * dg * dg
        term3 = 2.0 * (esum - c_diag * (g - 1.0)) * dg
        out[r, COL_L_HAT] = l_hat
        out[r, COL_L_TRUE] = l_true
        out[r, COL_TERM1] = term1
        out[r, COL_TERM2] = term2
        out[r, COL_TERM3] = term3
        out[r, COL_C_DIAG] = c_diag
        out[r, COL_GAMMA2_PLUGIN] = c_diag * ghat * ghat * estim_raw
        out[r, COL_A1] = (esum - c_diag * (g - 1.0)) / sqrt_alpha if alpha > 0.0 else 0.0
        out[r, COL_A2] = sqrt_alpha * dg
        true_ult = cum[r, i0, T - 1]
        out[r, COL_PRED_RATIO] = chat / true_ult if true_ult > 0.0 else _NAN
        ok_out[r] = 1
    return out, ok_out
