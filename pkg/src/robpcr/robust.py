"""MAP estimation for location-scale and linear regression models with LPTN errors.

The estimates maximize the LPTN likelihood over ``(beta, log sigma)``.  With
the ``1 / sigma`` scale prior the posterior is flat in ``log sigma``, so this
is the MAP in those coordinates and coincides with the MLE.

The negative log-likelihood is smooth except where a standardized residual
crosses ``|z| = tau``: there the slope of ``-log f`` jumps upward (a convex
kink), and optima frequently sit exactly on it.  Plain BFGS stalls at such
points, so each fit ends with a polish in which residuals near the kink are
represented through epigraph variables (locally ``-log f = max(core, tail)``)
and the resulting smooth program is solved by SLSQP.  Convergence is judged
by a subgradient certificate rather than by the raw gradient norm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import lsq_linear, minimize

from .errors import ConvergenceError, DegenerateScaleError, DesignError, ExactFitError
from .lptn import LOG_SQRT_2PI, LptnParams

__all__ = [
    "RobustFit",
    "ResidualReport",
    "negative_log_posterior",
    "map_location_scale",
    "map_regression",
    "standardized_residuals",
    "OUTLIER_THRESHOLD",
]

OUTLIER_THRESHOLD = 2.5
MAX_ITER = 500
GTOL = 1e-8
# certificate tolerance on the (scaled) subgradient residual
KKT_TOL = 1e-6
_KINK_WINDOW = 0.05
_MAX_POLISH = 8


@dataclass(frozen=True)
class RobustFit:
    """Result of a MAP fit.

    Attributes
    ----------
    beta : ndarray
        Coefficients, in the column order of the design (intercept first).
    sigma : float
        Error scale.
    converged : bool
    objective : float
        Negative log-posterior at ``(beta, log sigma)``.
    iterations : int
        Optimizer iterations summed over all stages of the winning start.
    """

    beta: np.ndarray
    sigma: float
    converged: bool
    objective: float
    iterations: int

    @property
    def loc(self) -> float:
        """Location estimate (the intercept)."""
        return float(self.beta[0])


@dataclass(frozen=True)
class ResidualReport:
    """Standardized residuals ``(y - X beta) / sigma`` and outlier flags."""

    z: np.ndarray
    flags: np.ndarray
    threshold: float = OUTLIER_THRESHOLD

    @property
    def flagged(self) -> np.ndarray:
        return np.flatnonzero(self.flags)


# -- objective ---------------------------------------------------------------


def _rho_core(az):
    return 0.5 * az * az + LOG_SQRT_2PI


def _rho_tail(az, p: LptnParams):
    # analytic continuation of the tail branch; only valid for az > 1
    with np.errstate(divide="ignore", invalid="ignore"):
        la = np.log(az)
        return -(p.log_phi_tau + p.log_tau - la + (p.lam + 1.0) * (p.loglog_tau - np.log(la)))


def _drho_core(az):
    return az


def _drho_tail(az, p: LptnParams):
    with np.errstate(divide="ignore", invalid="ignore"):
        return (1.0 + (p.lam + 1.0) / np.log(az)) / az


def _terms(theta, X, y, p):
    s = theta[-1]
    inv = math.exp(-s)
    z = (y - X @ theta[:-1]) * inv
    az = np.abs(z)
    core = az <= p.tau
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(core, _rho_core(az), _rho_tail(az, p))
        drho = np.sign(z) * np.where(core, _drho_core(az), _drho_tail(az, p))
    return z, inv, rho, drho


def negative_log_posterior(theta, X, y, p: LptnParams):
    """Objective and gradient in ``theta = (beta, log sigma)``.

    The gradient uses the core-side derivative at ``|z| = tau``.
    """
    theta = np.asarray(theta, dtype=float)
    z, inv, rho, drho = _terms(theta, X, y, p)
    n = y.shape[0]
    f = float(rho.sum()) + n * theta[-1]
    g = np.empty_like(theta)
    g[:-1] = -inv * (X.T @ drho)
    g[-1] = n - float(drho @ z)
    if not np.isfinite(f):
        return np.inf, np.zeros_like(theta)
    return f, g


# -- optimality certificate --------------------------------------------------


def _kkt_residual(theta, X, y, p, tol_kink=1e-7):
    """Distance of ``0`` from the (convexified) subdifferential at ``theta``.

    Residuals lying on the kink may carry any slope between the core and the
    tail one-sided derivatives; the best combination is found by a bounded
    least-squares solve.
    """
    z, inv, rho, drho = _terms(theta, X, y, p)
    az = np.abs(z)
    on_kink = np.abs(az - p.tau) <= tol_kink * p.tau
    n = y.shape[0]
    # gradient of z_i w.r.t. theta
    dz = np.empty((n, theta.size))
    dz[:, :-1] = -inv * X
    dz[:, -1] = -z
    g0 = np.zeros(theta.size)
    g0[-1] = n
    off = ~on_kink
    g0 += dz[off].T @ drho[off]
    if not on_kink.any():
        return float(np.linalg.norm(g0))
    sgn = np.sign(z[on_kink])
    lo = p.tau
    hi = float(_drho_tail(p.tau, p))
    # slope_i = sgn_i * (lo + w_i), 0 <= w_i <= hi - lo
    D = dz[on_kink].T * sgn
    base = g0 + D @ np.full(D.shape[1], lo)
    w = lsq_linear(D, -base, bounds=(0.0, hi - lo)).x
    return float(np.linalg.norm(base + D @ w))


# -- optimization ------------------------------------------------------------


def _bfgs(theta0, X, y, p, maxiter):
    res = minimize(
        negative_log_posterior,
        theta0,
        args=(X, y, p),
        jac=True,
        method="BFGS",
        options={"gtol": GTOL, "maxiter": maxiter},
    )
    return res.x, int(res.nit), res.status == 1


def _polish(theta0, X, y, p, maxiter):
    """SLSQP with epigraph variables for residuals near the kink."""
    z = (y - X @ theta0[:-1]) * math.exp(-theta0[-1])
    near = np.flatnonzero(np.abs(np.abs(z) - p.tau) < _KINK_WINDOW * p.tau)
    if near.size == 0:
        return theta0, 0
    m = theta0.size
    far = np.ones(y.shape[0], dtype=bool)
    far[near] = False
    Xf, yf = X[far], y[far]
    Xn, yn = X[near], y[near]
    n = y.shape[0]

    def zn(v):
        return (yn - Xn @ v[: m - 1]) * math.exp(-v[m - 1])

    def fun(v):
        th = v[:m]
        f_far, g_far = negative_log_posterior(th, Xf, yf, p)
        # n log sigma is counted once, for all observations
        f = f_far + (n - yf.shape[0]) * th[-1] + v[m:].sum()
        g = np.concatenate([g_far, np.ones(near.size)])
        g[m - 1] += n - yf.shape[0]
        return f, g

    def jac_z(v):
        inv = math.exp(-v[m - 1])
        zz = zn(v)
        J = np.empty((near.size, m))
        J[:, :-1] = -inv * Xn
        J[:, -1] = -zz
        return zz, J

    def cons(v):
        zz = np.abs(zn(v))
        t = v[m:]
        return np.concatenate([t - _rho_core(zz), t - _rho_tail(zz, p)])

    def cons_jac(v):
        zz, J = jac_z(v)
        az = np.abs(zz)
        sg = np.sign(zz)[:, None]
        eye = np.eye(near.size)
        Jc = -(sg * _drho_core(az)[:, None]) * J
        Jt = -(sg * _drho_tail(az, p)[:, None]) * J
        return np.vstack([np.hstack([Jc, eye]), np.hstack([Jt, eye])])

    az0 = np.abs(z[near])
    t0 = np.maximum(_rho_core(az0), _rho_tail(az0, p))
    v0 = np.concatenate([theta0, t0])
    res = minimize(
        fun,
        v0,
        jac=True,
        method="SLSQP",
        constraints=[{"type": "ineq", "fun": cons, "jac": cons_jac}],
        options={"ftol": 1e-15, "maxiter": maxiter},
    )
    th = res.x[:m]
    f_new = negative_log_posterior(th, X, y, p)[0]
    if not np.isfinite(f_new) or f_new > negative_log_posterior(theta0, X, y, p)[0] + 1e-12:
        return theta0, int(res.nit)
    return th, int(res.nit)


def _d2rho(az, p):
    core = az <= p.tau
    with np.errstate(divide="ignore", invalid="ignore"):
        la = np.log(az)
        tail = -(1.0 + (p.lam + 1.0) / la) / az**2 - (p.lam + 1.0) / (az**2 * la**2)
    return np.where(core, 1.0, tail)


def _manifold_newton(theta, X, y, p, iters=20):
    """Newton refinement with the on-kink residuals held on the kink.

    In ``(beta, sigma)`` coordinates the constraints ``y_i - x_i beta =
    s_i tau sigma`` are linear, so the step is a plain null-space Newton step.
    """
    beta, sigma = theta[:-1].copy(), math.exp(theta[-1])
    z = (y - X @ beta) / sigma
    act = np.flatnonzero(np.abs(np.abs(z) - p.tau) <= 1e-6 * p.tau)
    m = theta.size
    v = np.r_[beta, sigma]
    if act.size:
        sg = np.sign(z[act])
        A = np.hstack([X[act], (sg * p.tau)[:, None]])
        if act.size >= m:
            return theta
        # project onto the constraint set
        v = v + np.linalg.lstsq(A, y[act] - A @ v, rcond=None)[0]
        _, sv, Vt = np.linalg.svd(A)
        rank = int(np.sum(sv > 1e-12 * sv[0]))
        N = Vt[rank:].T
    else:
        N = np.eye(m)
    n = y.shape[0]

    def f_only(v):
        if v[-1] <= 0:
            return np.inf
        return negative_log_posterior(np.r_[v[:-1], math.log(v[-1])], X, y, p)[0]

    off = np.ones(n, dtype=bool)
    off[act] = False
    f = f_only(v)
    for _ in range(iters):
        b, s = v[:-1], v[-1]
        zz = (y - X @ b) / s
        az = np.abs(zz)
        core = az <= p.tau
        with np.errstate(divide="ignore", invalid="ignore"):
            d1 = np.sign(zz) * np.where(core, az, _drho_tail(az, p))
        d2 = _d2rho(az, p)
        d1, d2, zo, Xo = d1[off], d2[off], zz[off], X[off]
        # dz/dbeta = -x / s, dz/ds = -z / s
        Jz = np.hstack([-Xo / s, (-zo / s)[:, None]])
        g = Jz.T @ d1
        g[-1] += n / s
        H = (Jz * d2[:, None]).T @ Jz
        # second derivatives of z: d2z/dbeta ds = x / s^2, d2z/ds2 = 2 z / s^2
        cross = Xo.T @ d1 / s**2
        H[:-1, -1] += cross
        H[-1, :-1] += cross
        H[-1, -1] += 2.0 * (d1 @ zo) / s**2 - n / s**2
        # on-kink residuals keep z fixed; their rho is constant on the manifold
        gr = N.T @ g
        Hr = N.T @ H @ N
        try:
            evals = np.linalg.eigvalsh(Hr)
        except np.linalg.LinAlgError:
            break
        if evals.size and evals[0] <= 0:
            break
        step = -N @ np.linalg.solve(Hr, gr)
        t = 1.0
        while t > 1e-8:
            cand = v + t * step
            fc = f_only(cand)
            if fc <= f:
                break
            t *= 0.5
        else:
            break
        # a residual crossing the kink changes the active set; stop there
        zc = (y - X @ cand[:-1]) / cand[-1]
        if np.any((np.abs(zc[off]) <= p.tau) != core[off]):
            break
        moved = np.max(np.abs(cand - v))
        v, f = cand, fc
        if moved < 1e-15 * max(1.0, np.max(np.abs(v))):
            break
    if not v[-1] > 0:
        return theta
    out = np.r_[v[:-1], math.log(v[-1])]
    return out if f_only(v) <= negative_log_posterior(theta, X, y, p)[0] + 1e-12 else theta


def _optimize(theta0, X, y, p, maxiter=MAX_ITER):
    theta, nit, capped = _bfgs(theta0, X, y, p, maxiter)
    scale = max(1.0, math.sqrt(y.shape[0]))
    for _ in range(_MAX_POLISH):
        theta = _manifold_newton(theta, X, y, p)
        if _kkt_residual(theta, X, y, p) <= KKT_TOL * scale:
            return theta, nit, True
        polished, k = _polish(theta, X, y, p, maxiter)
        nit += k
        polished = _manifold_newton(polished, X, y, p)
        if _kkt_residual(polished, X, y, p) <= KKT_TOL * scale:
            return polished, nit, True
        theta2, k, capped = _bfgs(polished, X, y, p, maxiter)
        nit += k
        f1 = negative_log_posterior(polished, X, y, p)[0]
        f2 = negative_log_posterior(theta2, X, y, p)[0]
        moved = np.max(np.abs(theta2 - theta))
        theta = theta2 if f2 <= f1 else polished
        if moved < 1e-13 or nit >= maxiter:
            break
    ok = _kkt_residual(theta, X, y, p) <= KKT_TOL * scale
    return theta, nit, ok and not (capped and nit >= maxiter)


def _lad_start(X, y, iters=50):
    """Least absolute deviations by iteratively reweighted least squares."""
    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    for _ in range(iters):
        r = np.abs(y - X @ beta)
        w = 1.0 / np.maximum(r, 1e-6 * (np.median(r) + 1e-300))
        sw = np.sqrt(w)
        new = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)[0]
        if np.max(np.abs(new - beta)) < 1e-10:
            beta = new
            break
        beta = new
    return beta


def _starts(X, y):
    n, d = X.shape
    b_ols = np.linalg.lstsq(X, y, rcond=None)[0]
    r = y - X @ b_ols
    s_ols = math.sqrt(max(r @ r / max(n - d, 1), 1e-300))
    if d == 1 and np.all(X[:, 0] == X[0, 0]):
        b_med = np.array([np.median(y) / X[0, 0]])
    else:
        b_med = _lad_start(X, y)
    rm = np.abs(y - X @ b_med)
    s_med = 1.4826 * np.median(rm)
    if not s_med > 0:
        s_med = s_ols
    return [np.r_[b_ols, math.log(s_ols)], np.r_[b_med, math.log(s_med)]]


def _fit(X, y, p: LptnParams, maxiter=MAX_ITER) -> RobustFit:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise DesignError(f"incompatible shapes X{X.shape} and y{y.shape}")
    n, d = X.shape
    if n <= d:
        raise DesignError(f"need n > d; got n={n}, d={d}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DesignError("non-finite values in X or y")
    if np.linalg.matrix_rank(X) < d:
        raise DesignError(f"design matrix is rank deficient (d={d})")
    # Work on a normalized copy: exact location/scale equivariance and better
    # conditioning.  y -> (y - loc0) / scale0, column j -> X_j / c_j.
    has_icpt = bool(np.all(X[:, 0] == 1.0))
    loc0 = float(np.median(y)) if has_icpt else 0.0
    scale0 = 1.4826 * float(np.median(np.abs(y - loc0)))
    if not scale0 > 0:
        scale0 = float(np.std(y))
    if not scale0 > 0:
        raise DegenerateScaleError("response has no spread; the scale is not identifiable")
    colscale = np.ones(d)
    for j in range(d):
        if has_icpt and j == 0:
            continue
        c = float(np.sqrt(np.mean(X[:, j] ** 2)))
        colscale[j] = c if c > 0 else 1.0
    Xs = X / colscale
    ys = (y - loc0) / scale0
    b_ols = np.linalg.lstsq(Xs, ys, rcond=None)[0]
    if np.max(np.abs(ys - Xs @ b_ols)) <= 1e-12 * max(1.0, np.max(np.abs(ys))):
        # likelihood unbounded as sigma -> 0: no MAP exists
        raise ExactFitError("the design fits the response exactly; the scale MAP does not exist")

    best = None
    for t0 in _starts(Xs, ys):
        theta, nit, ok = _optimize(t0, Xs, ys, p, maxiter)
        f = negative_log_posterior(theta, Xs, ys, p)[0]
        cand = (f, float(np.linalg.norm(theta[:-1])), theta, nit, ok)
        if best is None or _better(cand, best):
            best = cand
    f, _, theta, nit, ok = best
    beta = theta[:-1] / colscale * scale0
    if has_icpt:
        beta[0] += loc0
    sigma = math.exp(theta[-1]) * scale0
    objective = f + n * math.log(scale0)
    fit = RobustFit(beta=beta, sigma=sigma, converged=ok, objective=objective, iterations=nit)
    if not ok and nit >= maxiter:
        raise ConvergenceError(f"MAP optimization did not converge in {maxiter} iterations", best=fit)
    return fit


def _better(a, b):
    """Lower objective wins; near-ties go to the certified optimum, then to
    the smaller coefficient norm."""
    fa, na, oka = a[0], a[1], a[4]
    fb, nb, okb = b[0], b[1], b[4]
    if abs(fa - fb) <= 1e-10 * max(1.0, abs(fa), abs(fb)):
        if oka != okb:
            return oka
        return na < nb
    return fa < fb


def map_location_scale(x, p: LptnParams) -> RobustFit:
    """Robust location and scale of a sample (intercept-only regression).

    Raises
    ------
    DegenerateScaleError
        If all values are identical.
    DesignError
        If fewer than three values are given.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.size < 3:
        raise DesignError(f"need at least 3 observations; got {x.size}")
    if np.all(x == x[0]):
        raise DegenerateScaleError("constant sample: the scale is not identifiable")
    return _fit(np.ones((x.size, 1)), x, p)


def map_regression(X, y, p: LptnParams) -> RobustFit:
    """MAP of ``(beta, sigma)`` in ``y = X beta + sigma * eps``, ``eps ~ LPTN``.

    ``X`` should carry its intercept column first; the fit is then exactly
    equivariant under ``y -> a * y + b``.

    Raises
    ------
    DesignError
        Shape mismatch, ``n <= d``, non-finite entries or rank deficiency.
    ExactFitError
        If ``X`` reproduces ``y`` exactly.
    ConvergenceError
        If the iteration cap is hit; ``.best`` holds the last iterate.
    """
    return _fit(X, y, p)


def standardized_residuals(fit: RobustFit, X, y, threshold: float = OUTLIER_THRESHOLD) -> ResidualReport:
    """``z_i = (y_i - x_i . beta) / sigma`` with ``|z_i| > threshold`` flagged."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.shape[1] != fit.beta.shape[0]:
        raise DesignError(f"fit has {fit.beta.shape[0]} coefficients but X has {X.shape[1]} columns")
    z = (y - X @ fit.beta) / fit.sigma
    return ResidualReport(z=z, flags=np.abs(z) > threshold, threshold=float(threshold))
