"""Principal component analysis on standardized covariates.

Two paths share the eigendecomposition step:

* ``sample``: columns standardized by mean and standard deviation, sample
  correlation matrix, scores rescaled so each column has sum of squares
  ``n - 1``.
* ``robust``: columns standardized by LPTN location-scale MAP estimates and a
  correlation matrix assembled from pairwise LPTN regression slopes.  That
  matrix need not be positive semidefinite; eigenpairs with nonpositive
  eigenvalues are dropped before the variance cap is applied.  Robust scores
  are left unrescaled.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateScaleError, DesignError, ExactFitError, RobpcrError
from .lptn import LptnParams, lptn_params
from .robust import (
    OUTLIER_THRESHOLD,
    map_location_scale,
    map_regression,
    standardized_residuals,
)

__all__ = [
    "ColumnStats",
    "RobustCorrelationMatrix",
    "PcaResult",
    "standardize",
    "apply_standardization",
    "sample_correlation",
    "robust_correlation",
    "decompose",
    "reconstruct",
    "pairwise_residuals",
    "run_pca",
    "toy_covariates",
    "inlier_reconstruction_error",
    "VARIANCE_CAP",
    "EIG_TOL",
]

VARIANCE_CAP = 0.95
EIG_TOL = 1e-10
MODES = ("sample", "robust")


@dataclass(frozen=True)
class ColumnStats:
    """Per-column location and scale used to standardize the covariates."""

    loc: np.ndarray
    scale: np.ndarray
    mode: str


@dataclass(frozen=True)
class RobustCorrelationMatrix:
    """Correlation matrix built from pairwise robust regression slopes.

    Attributes
    ----------
    R : ndarray
        Symmetric matrix with unit diagonal (clipped to ``[-1, 1]`` when
        ``clipped``).
    raw : ndarray
        The same matrix before clipping.
    fits : dict
        ``(j1, j2) -> RobustFit`` of column ``j2`` on ``[1, column j1]``,
        ``j1 < j2``; ``None`` for exactly collinear pairs.
    clipped : bool
    """

    R: np.ndarray
    raw: np.ndarray
    fits: dict = field(repr=False)
    clipped: bool = True


@dataclass(frozen=True)
class PcaResult:
    """Eigendecomposition of a correlation matrix and the retained scores.

    Attributes
    ----------
    eigenvalues : ndarray
        Strictly positive eigenvalues (above ``EIG_TOL``), descending.
    eigenvectors : ndarray
        ``p x r`` matrix of the matching unit eigenvectors; each column has
        its largest-magnitude entry positive.
    q : int
        Number of retained components.
    scores : ndarray
        ``n x q`` PC scores.
    column_stats : ColumnStats
    excluded : tuple
        Positions (in the full descending spectrum) of dropped eigenpairs.
    all_eigenvalues : ndarray
        Full spectrum, descending.
    C : ndarray
        The standardized data the scores were computed from.
    robust : bool
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    q: int
    scores: np.ndarray
    column_stats: ColumnStats
    excluded: tuple
    all_eigenvalues: np.ndarray
    C: np.ndarray
    robust: bool

    @property
    def r(self) -> int:
        return int(self.eigenvalues.shape[0])

    @property
    def explained(self) -> np.ndarray:
        """Cumulative share of the retained spectrum."""
        return np.cumsum(self.eigenvalues) / self.eigenvalues.sum()

    def project(self, C_new, q=None) -> np.ndarray:
        """Scores of already-standardized rows using the fitted eigenvectors."""
        q = self.q if q is None else int(q)
        C_new = np.atleast_2d(np.asarray(C_new, dtype=float))
        Z = C_new @ self.eigenvectors[:, :q]
        if not self.robust:
            Z = Z / np.sqrt(self.eigenvalues[:q])
        return Z


def _check_matrix(C_raw):
    C_raw = np.asarray(C_raw, dtype=float)
    if C_raw.ndim == 1:
        C_raw = C_raw[:, None]
    if C_raw.ndim != 2:
        raise DesignError(f"expected an n x p matrix; got shape {C_raw.shape}")
    if C_raw.shape[0] < 3:
        raise DesignError(f"need at least 3 rows; got {C_raw.shape[0]}")
    if not np.all(np.isfinite(C_raw)):
        raise DesignError("covariate matrix contains non-finite values")
    return C_raw


def standardize(C_raw, mode: str = "sample", p: LptnParams | None = None):
    """Center and scale each column.

    Parameters
    ----------
    C_raw : array_like, shape (n, p)
    mode : {"sample", "robust"}
        ``sample`` uses the mean and the ``n - 1`` standard deviation;
        ``robust`` uses the LPTN location-scale MAP of each column.
    p : LptnParams, optional
        Needed for the robust mode (default ``rho = 0.95``).

    Returns
    -------
    C : ndarray
    stats : ColumnStats

    Raises
    ------
    DegenerateScaleError
        If a column is constant; ``.column`` names it.
    """
    if mode not in MODES:
        raise DesignError(f"mode must be one of {MODES}; got {mode!r}")
    C_raw = _check_matrix(C_raw)
    ncol = C_raw.shape[1]
    loc = np.empty(ncol)
    scale = np.empty(ncol)
    if mode == "robust" and p is None:
        p = lptn_params()
    for j in range(ncol):
        col = C_raw[:, j]
        if np.all(col == col[0]):
            raise DegenerateScaleError(f"column {j} is constant", column=j)
        if mode == "sample":
            loc[j] = col.mean()
            scale[j] = col.std(ddof=1)
        else:
            fit = map_location_scale(col, p)
            loc[j], scale[j] = fit.loc, fit.sigma
    stats = ColumnStats(loc=loc, scale=scale, mode=mode)
    return apply_standardization(C_raw, stats), stats


def apply_standardization(C_raw, stats: ColumnStats) -> np.ndarray:
    """Standardize new rows with previously fitted column statistics."""
    C_raw = np.atleast_2d(np.asarray(C_raw, dtype=float))
    if C_raw.shape[1] != stats.loc.shape[0]:
        raise DesignError(f"expected {stats.loc.shape[0]} columns; got {C_raw.shape[1]}")
    return (C_raw - stats.loc) / stats.scale


def sample_correlation(C) -> np.ndarray:
    """``C^T C / (n - 1)`` for standardized ``C``."""
    C = np.asarray(C, dtype=float)
    R = C.T @ C / (C.shape[0] - 1.0)
    return 0.5 * (R + R.T)


def robust_correlation(C, p: LptnParams | None = None, clip: bool = True) -> RobustCorrelationMatrix:
    """Robust correlations from pairwise LPTN regressions.

    Entry ``(j1, j2)``, ``j1 < j2``, is the MAP slope of column ``j2`` regressed
    on an intercept and column ``j1``; the lower triangle mirrors it.

    Raises
    ------
    RobpcrError
        Estimator failures are re-raised with a ``pair`` attribute.
    """
    C = _check_matrix(C)
    p = lptn_params() if p is None else p
    ncol = C.shape[1]
    raw = np.eye(ncol)
    fits = {}
    ones = np.ones(C.shape[0])
    for j1 in range(ncol):
        X = np.column_stack([ones, C[:, j1]])
        for j2 in range(j1 + 1, ncol):
            try:
                fit = map_regression(X, C[:, j2], p)
                slope = fit.beta[1]
            except ExactFitError:
                # exact line: the least-squares slope is the limit of the MAP
                fit = None
                slope = np.linalg.lstsq(X, C[:, j2], rcond=None)[0][1]
            except RobpcrError as exc:
                exc.pair = (j1, j2)
                exc.args = (f"columns ({j1}, {j2}): {exc.args[0]}",) + exc.args[1:]
                raise
            fits[(j1, j2)] = fit
            raw[j1, j2] = raw[j2, j1] = slope
    R = np.clip(raw, -1.0, 1.0) if clip else raw.copy()
    return RobustCorrelationMatrix(R=R, raw=raw, fits=fits, clipped=clip)


def pairwise_residuals(rc: RobustCorrelationMatrix, C, threshold: float = OUTLIER_THRESHOLD):
    """Standardized residuals of every pairwise regression, keyed by pair.

    Exactly collinear pairs have no scale estimate and are skipped.
    """
    C = np.asarray(C, dtype=float)
    ones = np.ones(C.shape[0])
    out = {}
    for (j1, j2), fit in rc.fits.items():
        if fit is None:
            continue
        X = np.column_stack([ones, C[:, j1]])
        out[(j1, j2)] = standardized_residuals(fit, X, C[:, j2], threshold)
    return out


def _canonical_signs(V):
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def _cap_count(lam, cap):
    share = np.cumsum(lam) / lam.sum()
    q = int(np.sum(share <= cap + 1e-12))
    return max(q, 1)


def decompose(R, C, cap: float = VARIANCE_CAP, robust: bool = False, column_stats=None) -> PcaResult:
    """Eigendecomposition, variance cap and scores.

    Parameters
    ----------
    R : array_like, shape (p, p)
        Symmetric correlation matrix (sample or robust).
    C : array_like, shape (n, p)
        Standardized data.
    cap : float
        ``q`` is the largest count whose cumulative eigenvalue share does not
        exceed ``cap``; at least 1.
    robust : bool
        Leave scores unrescaled (``C v``) instead of ``C v / sqrt(lambda)``.

    Raises
    ------
    DesignError
        If shapes disagree, ``R`` is not symmetric or ``cap`` is not in (0, 1].
    RobpcrError
        If no eigenvalue is positive or the eigensolver fails.
    """
    R = np.asarray(R, dtype=float)
    C = np.asarray(C, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1] or C.ndim != 2 or C.shape[1] != R.shape[0]:
        raise DesignError(f"shape mismatch: R{R.shape}, C{C.shape}")
    if not np.allclose(R, R.T, atol=1e-12, rtol=0):
        raise DesignError("correlation matrix is not symmetric")
    if not 0.0 < cap <= 1.0:
        raise DesignError(f"cap must lie in (0, 1]; got {cap}")
    try:
        lam, V = np.linalg.eigh(R)
    except np.linalg.LinAlgError as exc:
        raise RobpcrError(f"eigendecomposition failed: {exc}") from exc
    order = np.argsort(lam)[::-1]
    lam, V = lam[order], _canonical_signs(V[:, order])
    keep = lam > EIG_TOL
    if not keep.any():
        raise RobpcrError("correlation matrix has no positive eigenvalue")
    excluded = tuple(int(i) for i in np.flatnonzero(~keep))
    lam_k, V_k = lam[keep], V[:, keep]
    q = _cap_count(lam_k, cap)
    Z = C @ V_k[:, :q]
    if not robust:
        Z = Z / np.sqrt(lam_k[:q])
    if column_stats is None:
        column_stats = ColumnStats(
            loc=np.zeros(R.shape[0]), scale=np.ones(R.shape[0]), mode="robust" if robust else "sample"
        )
    return PcaResult(
        eigenvalues=lam_k,
        eigenvectors=V_k,
        q=q,
        scores=Z,
        column_stats=column_stats,
        excluded=excluded,
        all_eigenvalues=lam,
        C=C,
        robust=robust,
    )


def reconstruct(res: PcaResult, q: int | None = None, original_scale: bool = False) -> np.ndarray:
    """Rank-``q`` reconstruction ``C A_q A_q^T`` of the standardized data.

    With ``original_scale`` the result is mapped back through the column
    statistics.
    """
    q = res.q if q is None else int(q)
    if not 1 <= q <= res.r:
        raise DesignError(f"q must lie in [1, {res.r}]; got {q}")
    A = res.eigenvectors[:, :q]
    M = res.C @ A @ A.T
    if original_scale:
        M = M * res.column_stats.scale + res.column_stats.loc
    return M


def run_pca(C_raw, robust: bool, p: LptnParams | None = None, cap: float = VARIANCE_CAP, clip: bool = True):
    """Standardize, build the correlation matrix and decompose.

    Returns ``(PcaResult, RobustCorrelationMatrix or None)``.
    """
    if robust:
        p = lptn_params() if p is None else p
        C, stats = standardize(C_raw, "robust", p)
        rc = robust_correlation(C, p, clip=clip)
        return decompose(rc.R, C, cap=cap, robust=True, column_stats=stats), rc
    C, stats = standardize(C_raw, "sample")
    return decompose(sample_correlation(C), C, cap=cap, robust=False, column_stats=stats), None


def toy_covariates(seed=None, outlier=(10.0, 20.0)):
    """Two-column toy data: ``c1 = i - 11`` for ``i = 1..21`` and ``c2 = c1 + eps``.

    When ``outlier`` is given, the last row is replaced by it.
    """
    rng = np.random.default_rng(seed)
    c1 = np.arange(1, 22, dtype=float) - 11.0
    c2 = c1 + rng.standard_normal(21)
    C = np.column_stack([c1, c2])
    if outlier is not None:
        C[-1] = outlier
    return C


def inlier_reconstruction_error(C_raw, M, inliers) -> float:
    """Sum of squared reconstruction errors over the given rows."""
    D = np.asarray(C_raw, dtype=float)[inliers] - np.asarray(M)[inliers]
    return float(np.sum(D * D))

