# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled reversible-jump kernel; same contract as ``_pykernels.run_kernel``."""

from libc.math cimport log, fabs, NAN, INFINITY

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef double LOG_SQRT_2PI = 0.91893853320467274178


cdef inline double _logpdf1(double x, double tau, double lam, double log_phi_tau,
                            double log_tau, double loglog_tau) nogil:
    cdef double ax = fabs(x)
    cdef double la
    if ax <= tau:
        return -0.5 * x * x - LOG_SQRT_2PI
    la = log(ax)
    return log_phi_tau + log_tau - la + (lam + 1.0) * (loglog_tau - log(la))


cdef double _log_target(const double[::1] y, const double[:, ::1] X, Py_ssize_t d,
                        const double[::1] theta, int error_model, double tau, double lam,
                        double log_phi_tau, double log_tau, double loglog_tau) nogil:
    cdef Py_ssize_t n = y.shape[0]
    cdef Py_ssize_t i, j
    cdef double sigma = theta[0]
    cdef double inv, r, z, az, la, total = 0.0
    if not sigma > 0.0:
        return -INFINITY
    inv = 1.0 / sigma
    for i in range(n):
        r = y[i]
        for j in range(d):
            r -= X[i, j] * theta[j + 1]
        z = r * inv
        if error_model == 1:
            total += -0.5 * z * z - LOG_SQRT_2PI
        else:
            az = fabs(z)
            if az <= tau:
                total += -0.5 * z * z - LOG_SQRT_2PI
            else:
                la = log(az)
                total += log_phi_tau + log_tau - la + (lam + 1.0) * (loglog_tau - log(la))
    return total - (n + 1) * log(sigma)


def log_target(y, X, Py_ssize_t d, theta, int error_model, double tau, double lam,
               double log_phi_tau, double log_tau, double loglog_tau):
    return _log_target(y, X, d, np.ascontiguousarray(theta, dtype=np.float64), error_model,
                       tau, lam, log_phi_tau, log_tau, loglog_tau)


def run_kernel(const double[::1] y, const double[:, ::1] X, const cnp.int64_t[::1] dims,
               const double[::1] ell, const double[:, ::1] shift,
               const double[::1] birth_loc, const double[::1] birth_scale,
               const double[::1] log_prior, double vartheta, lp, int error_model,
               const double[::1] u_move, const double[::1] log_u_acc,
               const double[:, ::1] z, cnp.int64_t k, double[::1] theta, double lt_cur,
               cnp.int64_t[::1] out_k, double[::1] out_sigma, double[:, ::1] out_beta,
               cnp.int64_t[:, ::1] proposed, cnp.int64_t[:, ::1] accepted, Py_ssize_t t0):
    cdef double tau = lp[0], lam = lp[1], log_phi_tau = lp[2]
    cdef double log_tau = lp[3], loglog_tau = lp[4]
    cdef Py_ssize_t kmax = dims.shape[0] - 1
    cdef double birth_cut = vartheta + 0.5 * (1.0 - vartheta)
    cdef Py_ssize_t D = X.shape[1]
    cdef Py_ssize_t T = u_move.shape[0]
    cdef double[::1] cand = np.empty(D + 1)
    cdef Py_ssize_t t, j, dk, row
    cdef cnp.int64_t kn
    cdef int move
    cdef double u, step, s, unew, logq, lt_new, lr
    with nogil:
        for t in range(T):
            u = u_move[t]
            dk = dims[k]
            if u <= vartheta:
                move = 0
            elif u <= birth_cut:
                move = 1
            else:
                move = 2
            proposed[k, move] += 1
            if move == 0:
                step = ell[k]
                for j in range(dk + 1):
                    cand[j] = theta[j] + step * z[t, j]
                lt_new = _log_target(y, X, dk, cand, error_model, tau, lam,
                                     log_phi_tau, log_tau, loglog_tau)
                if log_u_acc[t] <= lt_new - lt_cur:
                    accepted[k, move] += 1
                    for j in range(dk + 1):
                        theta[j] = cand[j]
                    lt_cur = lt_new
            elif move == 1 and k < kmax:
                kn = k + 1
                for j in range(dk + 1):
                    cand[j] = theta[j] + shift[kn, j]
                s = birth_scale[kn]
                unew = birth_loc[kn] + s * z[t, 0]
                cand[dk + 1] = unew
                logq = _logpdf1((unew - birth_loc[kn]) / s, tau, lam, log_phi_tau,
                                log_tau, loglog_tau) - log(s)
                lt_new = _log_target(y, X, dk + 1, cand, error_model, tau, lam,
                                     log_phi_tau, log_tau, loglog_tau)
                lr = log_prior[kn] - log_prior[k] + lt_new - lt_cur - logq
                if log_u_acc[t] <= lr:
                    accepted[k, move] += 1
                    for j in range(dk + 2):
                        theta[j] = cand[j]
                    k = kn
                    lt_cur = lt_new
            elif move == 2 and k > 0:
                kn = k - 1
                for j in range(dk):
                    cand[j] = theta[j] - shift[k, j]
                s = birth_scale[k]
                logq = _logpdf1((theta[dk] - birth_loc[k]) / s, tau, lam, log_phi_tau,
                                log_tau, loglog_tau) - log(s)
                lt_new = _log_target(y, X, dk - 1, cand, error_model, tau, lam,
                                     log_phi_tau, log_tau, loglog_tau)
                lr = log_prior[kn] - log_prior[k] + lt_new + logq - lt_cur
                if log_u_acc[t] <= lr:
                    accepted[k, move] += 1
                    for j in range(dk):
                        theta[j] = cand[j]
                    k = kn
                    lt_cur = lt_new
            row = t0 + t
            dk = dims[k]
            out_k[row] = k
            out_sigma[row] = theta[0]
            for j in range(D):
                if j < dk:
                    out_beta[row, j] = theta[j + 1]
                else:
                    out_beta[row, j] = NAN
    return k, lt_cur
