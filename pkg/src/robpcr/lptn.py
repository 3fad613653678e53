"""Log-Pareto-tailed standard normal (LPTN) distribution.

The density equals the standard normal density on ``[-tau, tau]`` and decays
like ``1 / (|x| (log |x|)**(lam + 1))`` outside.  ``rho`` is the probability
mass of the normal core; ``tau`` and ``lam`` are derived from it so that the
density is continuous and integrates to one.

Everything here works on log densities: the tails underflow quickly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import DomainError

__all__ = [
    "LptnParams",
    "lptn_params",
    "lptn_logpdf",
    "lptn_score",
    "lptn_cdf",
    "lptn_quantile",
    "lptn_sample",
    "RHO_MIN",
    "DEFAULT_RHO",
]

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
RHO_MIN = 2.0 * float(ndtr(1.0)) - 1.0  # tau == 1 at this rho, lam == 0
DEFAULT_RHO = 0.95


@dataclass(frozen=True)
class LptnParams:
    """Parameters of the LPTN density.

    Attributes
    ----------
    rho : float
        Mass of the normal core, in ``(2 Phi(1) - 1, 1)``.
    tau : float
        Core/tail boundary, ``Phi^{-1}((1 + rho) / 2)``.
    lam : float
        Tail decay exponent, ``2 phi(tau) tau log(tau) / (1 - rho)``.
    """

    rho: float
    tau: float
    lam: float

    @property
    def log_tau(self) -> float:
        return math.log(self.tau)

    @property
    def loglog_tau(self) -> float:
        return math.log(math.log(self.tau))

    @property
    def log_phi_tau(self) -> float:
        return -0.5 * self.tau * self.tau - LOG_SQRT_2PI


def lptn_params(rho: float = DEFAULT_RHO) -> LptnParams:
    """Derive ``(tau, lam)`` from the core mass ``rho``.

    Raises
    ------
    DomainError
        If ``rho`` is not strictly inside ``(2 Phi(1) - 1, 1)``.
    """
    rho = float(rho)
    if not (RHO_MIN < rho < 1.0):
        raise DomainError(
            f"rho must lie in the open interval ({RHO_MIN:.6f}, 1); got {rho!r}"
        )
    tau = float(ndtri(0.5 * (1.0 + rho)))
    phi_tau = math.exp(-0.5 * tau * tau - LOG_SQRT_2PI)
    lam = 2.0 / (1.0 - rho) * phi_tau * tau * math.log(tau)
    return LptnParams(rho=rho, tau=tau, lam=lam)


def lptn_logpdf(x, p: LptnParams):
    """Log density, evaluated elementwise.  Returns a float for scalar input."""
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    core = ax <= p.tau
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        la = np.log(ax)
        tail = (
            p.log_phi_tau
            + p.log_tau
            - la
            + (p.lam + 1.0) * (p.loglog_tau - np.log(la))
        )
        out = np.where(core, -0.5 * x * x - LOG_SQRT_2PI, tail)
    out = np.where(np.isinf(x), -np.inf, out)
    return out if out.ndim else float(out)


def lptn_score(x, p: LptnParams):
    """Derivative of the log density.

    The derivative jumps at ``|x| = tau``; the core (left-sided in ``|x|``)
    value is returned there.
    """
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        tail = -np.sign(x) * (1.0 + (p.lam + 1.0) / np.log(ax)) / ax
        out = np.where(ax <= p.tau, -x, tail)
    return out if out.ndim else float(out)


def lptn_cdf(x, p: LptnParams):
    """Cumulative distribution function (closed form in the tails)."""
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    half_tail = 0.5 * (1.0 - p.rho)
    with np.errstate(divide="ignore", invalid="ignore"):
        # mass beyond |x| on one side, for |x| > tau
        beyond = half_tail * (p.log_tau / np.log(ax)) ** p.lam
        lower = np.where(x < 0, beyond, 1.0 - beyond)
        out = np.where(ax <= p.tau, ndtr(x), lower)
    return out if out.ndim else float(out)


def lptn_quantile(u, p: LptnParams):
    """Inverse CDF.

    Tail quantiles beyond the double range are returned as ``-inf``/``inf``;
    this happens for moderate ``u`` only when ``rho`` is near its lower
    bound and ``lam`` is tiny.

    Raises
    ------
    DomainError
        If any ``u`` lies outside the open interval ``(0, 1)``.
    """
    u = np.asarray(u, dtype=float)
    if np.any(~((u > 0.0) & (u < 1.0))):
        raise DomainError("quantile levels must lie in the open interval (0, 1)")
    lo = 0.5 * (1.0 - p.rho)
    hi = 0.5 * (1.0 + p.rho)
    # one-sided tail mass, mapped to (0, 1] relative to the tail
    v = np.where(u < lo, u, 1.0 - u) / lo
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        mag = np.exp(p.log_tau * v ** (-1.0 / p.lam))
        out = np.where(u < lo, -mag, mag)
        out = np.where((u >= lo) & (u <= hi), ndtri(u), out)
    return out if out.ndim else float(out)


def lptn_sample(n: int, p: LptnParams, seed=None):
    """Draw ``n`` i.i.d. variates by inversion.

    ``seed`` may be an int, a ``SeedSequence`` or a ``Generator``; the
    ``i``-th draw is ``lptn_quantile`` of the generator's ``i``-th uniform.
    """
    if n < 1:
        raise DomainError(f"n must be at least 1; got {n}")
    rng = np.random.default_rng(seed)
    u = rng.random(int(n))
    return lptn_quantile(_open_unit(u), p)


def _open_unit(u):
    """Map uniforms from ``[0, 1)`` into the open interval."""
    return np.where(u > 0.0, u, np.finfo(float).tiny)
