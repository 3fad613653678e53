"""Pure-Python reversible-jump kernel.

Mirrors ``_kernels.pyx`` statement for statement; both consume the same
pre-generated random numbers, so traces agree up to floating-point summation
order.
"""
from __future__ import annotations

import math

import numpy as np

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

UPDATE, BIRTH, DEATH = 0, 1, 2


def log_density_sum(z, error_model, tau, lam, log_phi_tau, log_tau, loglog_tau):
    """Sum of standard log densities at ``z`` (LPTN when ``error_model == 0``)."""
    if error_model == 1:
        return float(-0.5 * (z @ z) - z.shape[0] * LOG_SQRT_2PI)
    az = np.abs(z)
    core = az <= tau
    zc = z[core]
    total = -0.5 * float(zc @ zc) - zc.shape[0] * LOG_SQRT_2PI
    at = az[~core]
    if at.shape[0]:
        la = np.log(at)
        total += float(
            np.sum(log_phi_tau + log_tau - la + (lam + 1.0) * (loglog_tau - np.log(la)))
        )
    return total


def log_target(y, X, d, theta, error_model, tau, lam, log_phi_tau, log_tau, loglog_tau):
    """``-log sigma + log f(y | sigma, beta)`` for a model using the first
    ``d`` columns; ``-inf`` when ``sigma <= 0``."""
    sigma = theta[0]
    if not sigma > 0.0:
        return -math.inf
    r = y - X[:, :d] @ theta[1 : d + 1]
    z = r / sigma
    n = y.shape[0]
    ll = log_density_sum(z, error_model, tau, lam, log_phi_tau, log_tau, loglog_tau)
    return ll - (n + 1) * math.log(sigma)


def _lptn_logpdf1(x, tau, lam, log_phi_tau, log_tau, loglog_tau):
    ax = abs(x)
    if ax <= tau:
        return -0.5 * x * x - LOG_SQRT_2PI
    la = math.log(ax)
    return log_phi_tau + log_tau - la + (lam + 1.0) * (loglog_tau - math.log(la))


def run_kernel(
    y,
    X,
    dims,
    ell,
    shift,
    birth_loc,
    birth_scale,
    log_prior,
    vartheta,
    lp,
    error_model,
    u_move,
    log_u_acc,
    z,
    k,
    theta,
    lt_cur,
    out_k,
    out_sigma,
    out_beta,
    proposed,
    accepted,
    t0,
):
    """Advance the chain ``len(u_move)`` iterations.

    ``theta`` holds ``(sigma, beta_1, ..., beta_D)`` and is updated in place;
    entries past ``dims[k]`` are ignored.  Returns the final ``(k, lt_cur)``.
    """
    tau, lam, log_phi_tau, log_tau, loglog_tau = lp
    kmax = dims.shape[0] - 1
    birth_cut = vartheta + 0.5 * (1.0 - vartheta)
    D = X.shape[1]
    cand = np.empty(D + 1)
    for t in range(u_move.shape[0]):
        u = u_move[t]
        dk = dims[k]
        if u <= vartheta:
            move = UPDATE
        elif u <= birth_cut:
            move = BIRTH
        else:
            move = DEATH
        proposed[k, move] += 1
        if move == UPDATE:
            step = ell[k]
            for j in range(dk + 1):
                cand[j] = theta[j] + step * z[t, j]
            lt_new = log_target(y, X, dk, cand, error_model, *lp)
            if log_u_acc[t] <= lt_new - lt_cur:
                accepted[k, move] += 1
                theta[: dk + 1] = cand[: dk + 1]
                lt_cur = lt_new
        elif move == BIRTH and k < kmax:
            kn = k + 1
            for j in range(dk + 1):
                cand[j] = theta[j] + shift[kn, j]
            s = birth_scale[kn]
            unew = birth_loc[kn] + s * z[t, 0]
            cand[dk + 1] = unew
            logq = _lptn_logpdf1((unew - birth_loc[kn]) / s, *lp) - math.log(s)
            lt_new = log_target(y, X, dk + 1, cand, error_model, *lp)
            lr = log_prior[kn] - log_prior[k] + lt_new - lt_cur - logq
            if log_u_acc[t] <= lr:
                accepted[k, move] += 1
                theta[: dk + 2] = cand[: dk + 2]
                k = kn
                lt_cur = lt_new
        elif move == DEATH and k > 0:
            kn = k - 1
            for j in range(dk):
                cand[j] = theta[j] - shift[k, j]
            s = birth_scale[k]
            logq = _lptn_logpdf1((theta[dk] - birth_loc[k]) / s, *lp) - math.log(s)
            lt_new = log_target(y, X, dk - 1, cand, error_model, *lp)
            lr = log_prior[kn] - log_prior[k] + lt_new + logq - lt_cur
            if log_u_acc[t] <= lr:
                accepted[k, move] += 1
                theta[:dk] = cand[:dk]
                k = kn
                lt_cur = lt_new
        row = t0 + t
        dk = dims[k]
        out_k[row] = k
        out_sigma[row] = theta[0]
        for j in range(D):
            out_beta[row, j] = theta[j + 1] if j < dk else math.nan
    return k, lt_cur
