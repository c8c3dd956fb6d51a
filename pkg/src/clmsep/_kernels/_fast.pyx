# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled batch kernels.

Statement-for-statement mirror of ``reference.py`` (same IEEE operation
order, so results are bit-identical to the pure-Python backend). cdivision
is safe here: every divisor is checked against zero before use, matching
the reference's failure handling.
"""

from libc.math cimport sqrt, NAN

import numpy as np

cimport numpy as cnp

cnp.import_array()

TAIL_MACK = 0
TAIL_RATIO = 1
TAIL_USER = 2

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


def chain_stats(cum, int tail_kind, double tail_value):
    cum = np.ascontiguousarray(cum, dtype=np.float64)
    cdef double[:, :, ::1] c = cum
    cdef Py_ssize_t R = c.shape[0]
    cdef Py_ssize_t T = c.shape[1]
    f_hat_arr = np.full((R, T - 1), np.nan)
    sigma2_arr = np.full((R, T - 1), np.nan)
    colsum_arr = np.full((R, T - 1), np.nan)
    ok_arr = np.ones(R, dtype=np.uint8)
    cdef double[:, ::1] f_hat = f_hat_arr
    cdef double[:, ::1] sigma2 = sigma2_arr
    cdef double[:, ::1] colsum = colsum_arr
    cdef unsigned char[::1] ok = ok_arr
    cdef Py_ssize_t r, t, i
    cdef double num, den, acc, cc, rr, prev1, prev2, v, denom
    cdef bint good
    with nogil:
        for r in range(R):
            good = True
            for t in range(T - 1):
                num = 0.0
                den = 0.0
                for i in range(T - t - 1):
                    num += c[r, i, t + 1]
                    den += c[r, i, t]
                colsum[r, t] = den
                if den == 0.0:
                    good = False
                    break
                f_hat[r, t] = num / den
            if good:
                for t in range(T - 2):
                    acc = 0.0
                    for i in range(T - t - 1):
                        cc = c[r, i, t]
                        if cc == 0.0:
                            good = False
                            break
                        rr = c[r, i, t + 1] / cc - f_hat[r, t]
                        acc += cc * rr * rr
                    if not good:
                        break
                    sigma2[r, t] = acc / (T - t - 2)
            if good:
                if tail_kind == 2:  # user
                    sigma2[r, T - 2] = tail_value
                elif tail_kind == 0:  # mack
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
                else:  # ratio
                    denom = (f_hat[r, T - 3] - 1.0) * f_hat[r, T - 3]
                    if denom == 0.0:
                        sigma2[r, T - 2] = 0.0
                    else:
                        v = sigma2[r, T - 3] * (f_hat[r, T - 2] - 1.0) * f_hat[r, T - 2] / denom
                        sigma2[r, T - 2] = v if v > 0.0 else 0.0
            if not good:
                ok[r] = 0
                for t in range(T - 1):
                    f_hat[r, t] = NAN
                    sigma2[r, t] = NAN
    return f_hat_arr, sigma2_arr, colsum_arr, ok_arr


def year_stats(cum, f_hat, sigma2, colsum, ok, int year, double alpha,
               double esum, double esum2, double ec, double g, double pgt_term):
    cum = np.ascontiguousarray(cum, dtype=np.float64)
    cdef double[:, :, ::1] c = cum
    cdef double[:, ::1] fh_v = np.ascontiguousarray(f_hat, dtype=np.float64)
    cdef double[:, ::1] s2_v = np.ascontiguousarray(sigma2, dtype=np.float64)
    cdef double[:, ::1] cs_v = np.ascontiguousarray(colsum, dtype=np.float64)
    cdef unsigned char[::1] ok_v = np.ascontiguousarray(ok, dtype=np.uint8)
    cdef Py_ssize_t R = c.shape[0]
    cdef Py_ssize_t T = c.shape[1]
    out_arr = np.full((R, NCOLS), np.nan)
    ok_out_arr = np.zeros(R, dtype=np.uint8)
    cdef double[:, ::1] out = out_arr
    cdef unsigned char[::1] ok_out = ok_out_arr
    cdef Py_ssize_t i0 = year - 1
    cdef Py_ssize_t m = T - year + 1
    cdef double sqrt_alpha = sqrt(alpha) if alpha > 0.0 else 0.0
    cdef Py_ssize_t r, t
    cdef double c_diag, chat, ghat, process, estim_raw, fh, w, ult2, estim
    cdef double msep, l_hat, gm1, l_true, dc, term1, dg, term2, term3, true_ult
    cdef bint good
    with nogil:
        for r in range(R):
            if not ok_v[r]:
                continue
            c_diag = c[r, i0, m - 1]
            if c_diag <= 0.0:
                continue
            good = True
            chat = c_diag
            ghat = 1.0
            process = 0.0
            estim_raw = 0.0
            for t in range(m, T):
                fh = fh_v[r, t - 1]
                if fh <= 0.0 or chat == 0.0 or cs_v[r, t - 1] == 0.0:
                    good = False
                    break
                w = s2_v[r, t - 1] / (fh * fh)
                process += w * (1.0 / chat)
                estim_raw += w * (1.0 / cs_v[r, t - 1])
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
            out[r, 0] = l_hat
            out[r, 1] = l_true
            out[r, 2] = term1
            out[r, 3] = term2
            out[r, 4] = term3
            out[r, 5] = c_diag
            out[r, 6] = c_diag * ghat * ghat * estim_raw
            out[r, 7] = (esum - c_diag * (g - 1.0)) / sqrt_alpha if alpha > 0.0 else 0.0
            out[r, 8] = sqrt_alpha * dg
            true_ult = c[r, i0, T - 1]
            out[r, 9] = chat / true_ult if true_ult > 0.0 else NAN
            ok_out[r] = 1
    return out_arr, ok_out_arr
