"""Synthetic data shared by the test modules."""
from __future__ import annotations

import numpy as np
from scipy import integrate
from scipy.stats import random_correlation

from robpcr.normal_posterior import Dataset

PCR_EIGENVALUES = (2.0, 1.5, 1.05, 0.8, 0.6, 0.55, 0.5)
PCR_COEF = {0: 0.15, 2: 0.15}


def orthogonal_dataset(n, d, seed, coef=None, noise=1.0):
    """Standardized response on ``d`` centred orthogonal columns with sum of
    squares ``n - 1``."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, d))
    A -= A.mean(axis=0)
    Q, _ = np.linalg.qr(A)
    Z = Q * np.sqrt(n - 1.0)
    coef = np.zeros(d) if coef is None else np.asarray(coef, dtype=float)
    y = Z @ coef + noise * rng.standard_normal(n)
    y -= y.mean()
    y *= np.sqrt((n - 1.0) / (y @ y))
    return Dataset(y, np.column_stack([np.ones(n), Z]))


def pcr_population(seed):
    """Covariance with known eigenpairs; returns ``(Sigma, V)`` with columns
    of ``V`` the population eigenvectors in descending eigenvalue order."""
    rng = np.random.default_rng(seed)
    lam = np.array(PCR_EIGENVALUES)
    R = random_correlation.rvs(lam, random_state=rng)
    w, V = np.linalg.eigh(R)
    order = np.argsort(w)[::-1]
    return R, w[order], V[:, order]


def pcr_data(seed, n=3000, n_test=1000, n_outliers=2, coef=None):
    """Covariates with seven columns (six PCs under the 95% cap), a response
    driven by PC 1 and PC 3, gross leverage outliers in training and a clean
    test split.

    Returns ``(C, y, C_test, y_test, informative)`` with ``informative`` the
    1-based PC indices carrying signal.
    """
    coef = PCR_COEF if coef is None else coef
    rng = np.random.default_rng(seed)
    R, lam, V = pcr_population(rng.integers(2**31))

    def draw(m):
        C = rng.multivariate_normal(np.zeros(R.shape[0]), R, size=m)
        Z = (C @ V) / np.sqrt(lam)
        y = sum(b * Z[:, j] for j, b in coef.items()) + rng.standard_normal(m)
        return C, y

    C, y = draw(n)
    C_test, y_test = draw(n_test)
    for i in range(n_outliers):
        # high-leverage rows far out along the second PC, response far off
        C[i] = 12.0 * np.sqrt(lam[1]) * V[:, 1] * (1 + 0.1 * i)
        y[i] = -40.0 - 5.0 * i
    informative = tuple(sorted(j + 1 for j in coef))
    return C, y, C_test, y_test, informative


def log_evidence_quadrature(X, y, nodes=32, width=8.0, fn=None):
    """Log of the integral of ``(1/sigma) * N(y | X beta, sigma^2 I)`` over
    ``(sigma, beta)`` by brute force.

    With ``fn(sigma, beta)`` (vectorized over rows of ``beta``) the
    integrand is multiplied by it; the integral must stay positive.

    The likelihood is evaluated directly at every node.  The outer integral
    over ``log sigma`` is adaptive; the inner one is a tensor Gauss-Legendre
    rule on a box of ``width`` conditional standard deviations around the
    least-squares fit, which only places the nodes.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    b = np.linalg.lstsq(X, y, rcond=None)[0]
    L = np.linalg.cholesky(np.linalg.inv(X.T @ X))
    g, w = np.polynomial.legendre.leggauss(nodes)
    g, w = width * g, width * w
    grids = np.meshgrid(*([g] * d), indexing="ij")
    t = np.stack([a.ravel() for a in grids], axis=1)
    wt = np.prod(np.stack(np.meshgrid(*([w] * d), indexing="ij")).reshape(d, -1), axis=0)
    log_det_L = float(np.sum(np.log(np.diag(L))))
    r0 = y - X @ b
    s_hat = 0.5 * np.log(float(r0 @ r0) / n)

    def log_h(s):
        sigma = np.exp(s)
        beta = b + sigma * t @ L.T
        R = y[None, :] - beta @ X.T
        ll = -0.5 * np.sum(R * R, axis=1) / sigma**2
        m = ll.max()
        f = wt if fn is None else wt * fn(sigma, beta)
        inner = m + np.log(np.sum(f * np.exp(ll - m))) + d * s + log_det_L
        # (1/sigma) prior, Gaussian normalizer, and d sigma = sigma d s
        return inner - n * s - 0.5 * n * np.log(2 * np.pi)

    ref = log_h(s_hat)
    val, _ = integrate.quad(
        lambda s: np.exp(log_h(s) - ref), s_hat - 20.0, s_hat + 20.0, epsabs=0.0, epsrel=1e-11, limit=200
    )
    return ref + np.log(val)


def scalar_log_posterior(sigma, beta, X, y, rho, normal=False):
    """``-log sigma + sum_i log f((y_i - x_i beta)/sigma) - n log sigma``
    by plain scalar loops, with the LPTN constants rederived from ``rho``."""
    import math
    from statistics import NormalDist

    if sigma <= 0:
        return -math.inf
    tau = NormalDist().inv_cdf((1 + rho) / 2)
    phi_tau = math.exp(-0.5 * tau * tau) / math.sqrt(2 * math.pi)
    lam = 2.0 / (1.0 - rho) * phi_tau * tau * math.log(tau)
    total = -math.log(sigma)
    for i in range(len(y)):
        r = float(y[i]) - sum(float(X[i][j]) * float(beta[j]) for j in range(len(beta)))
        z = r / sigma
        if normal or abs(z) <= tau:
            dens = -0.5 * z * z - 0.5 * math.log(2 * math.pi)
        else:
            a = abs(z)
            dens = math.log(phi_tau) + math.log(tau / a) + (lam + 1.0) * math.log(math.log(tau) / math.log(a))
        total += dens - math.log(sigma)
    return total


def scalar_lptn_logpdf(x, rho):
    """Standard LPTN log density by scalar arithmetic."""
    return scalar_log_posterior(1.0, [0.0], [[1.0]], [x], rho)
