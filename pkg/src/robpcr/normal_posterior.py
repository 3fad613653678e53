"""Closed-form posterior of the principal component regression under normal errors.

With an orthogonal design (intercept column plus standardized, mutually
orthogonal PC columns), a standardized response and the prior
``pi(sigma, beta | k) ~ 1 / sigma``, the joint posterior factorizes into the
model probabilities, an inverse-gamma law for ``sigma**2`` and independent
normal laws for the coefficients.  These closed forms serve both as the
nonrobust baseline and as oracles for the samplers.

Column indices are 0-based: column 0 of ``X`` is the intercept, column ``j``
holds the ``j``-th retained principal component.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import DegenerateModelError, DesignError, ExactFitError

__all__ = [
    "Dataset",
    "ModelSpec",
    "NormalPosteriorSummary",
    "BicDiagnostic",
    "nested_space",
    "is_nested_sequence",
    "beta_hat",
    "rss",
    "model_log_weight",
    "normal_posterior",
    "predict_model_average",
    "bic_posterior_consistency",
]

DESIGN_TOL = 1e-8
DESIGN_HARD_TOL = 1e-4


@dataclass(frozen=True)
class Dataset:
    """Response ``y`` (length n) and design ``X`` (n x d, column 0 all ones)."""

    y: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        y = np.ascontiguousarray(self.y, dtype=float)
        X = np.ascontiguousarray(self.X, dtype=float)
        if y.ndim != 1 or X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise DesignError(
                f"need y of shape (n,) and X of shape (n, d); got {y.shape} and {X.shape}"
            )
        if not np.all(X[:, 0] == 1.0):
            raise DesignError("column 0 of X must be the intercept (all ones)")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def design_deviation(self) -> float:
        """Largest violation of the standardized-orthogonal structure.

        Measured relative to ``n - 1``: ``y`` and the PC columns must be
        centred with sum of squares ``n - 1`` and the PC columns pairwise
        orthogonal.
        """
        n1 = self.n - 1.0
        y, Z = self.y, self.X[:, 1:]
        devs = [abs(y.sum()) / n1, abs(y @ y - n1) / n1]
        if Z.shape[1]:
            G = Z.T @ Z
            devs.append(np.max(np.abs(Z.sum(axis=0))) / n1)
            devs.append(np.max(np.abs(G - n1 * np.eye(G.shape[0]))) / n1)
        return float(max(devs))

    def check_design(self, tol: float = DESIGN_TOL, hard_tol: float = DESIGN_HARD_TOL):
        """Warn beyond ``tol`` and raise ``DesignError`` beyond ``hard_tol``."""
        dev = self.design_deviation()
        if dev > hard_tol:
            raise DesignError(
                f"design is not standardized/orthogonal (relative deviation {dev:.3g} > {hard_tol:g}); "
                "the closed-form posterior does not apply"
            )
        if dev > tol:
            warnings.warn(
                f"design deviates from orthogonality by {dev:.3g} (> {tol:g})",
                RuntimeWarning,
                stacklevel=2,
            )
        return dev


@dataclass(frozen=True)
class ModelSpec:
    """Set of design columns used by one model; always contains column 0."""

    columns: tuple

    def __post_init__(self):
        cols = tuple(int(c) for c in self.columns)
        if not cols or cols[0] != 0:
            raise DesignError(f"a model must start with the intercept column 0; got {cols}")
        if len(set(cols)) != len(cols):
            raise DesignError(f"duplicate columns in model {cols}")
        object.__setattr__(self, "columns", cols)

    @property
    def d(self) -> int:
        return len(self.columns)

    def __str__(self):
        return "{" + ",".join(str(c) for c in self.columns) + "}"


def nested_space(columns: Sequence[int]) -> list[ModelSpec]:
    """``{0}, {0, j1}, {0, j1, j2}, ...`` for the given PC columns in order."""
    out = [ModelSpec((0,))]
    for j in columns:
        out.append(ModelSpec(out[-1].columns + (int(j),)))
    return out


def is_nested_sequence(space: Sequence[ModelSpec]) -> bool:
    """Each model extends the previous one by exactly one trailing column."""
    for a, b in zip(space[:-1], space[1:]):
        if b.columns[:-1] != a.columns:
            return False
    return True


def beta_hat(model: ModelSpec, data: Dataset) -> np.ndarray:
    """Posterior location of the coefficients: 0 for the intercept, then
    ``x_j . y / (n - 1)`` for each PC column."""
    Xk = data.X[:, model.columns]
    out = Xk.T @ data.y / (data.n - 1.0)
    out[0] = 0.0
    return out


def rss(model: ModelSpec, data: Dataset) -> float:
    resid = data.y - data.X[:, model.columns] @ beta_hat(model, data)
    return float(resid @ resid)


def model_log_weight(model: ModelSpec, data: Dataset, log_prior: float = 0.0) -> float:
    """Unnormalized log posterior probability of ``model``.

    ``log_prior + lgamma((n - d)/2) + (d/2) log(pi) - ((n - d)/2) log(rss / (n - 1))``.
    """
    n, d = data.n, model.d
    if n <= d:
        raise DegenerateModelError(f"model {model} has d={d} coefficients for n={n} observations")
    r = rss(model, data)
    if not r > 0.0:
        raise ExactFitError(f"model {model} fits the response exactly (rss = {r})")
    half = 0.5 * (n - d)
    return float(
        log_prior + gammaln(half) + 0.5 * d * math.log(math.pi) - half * math.log(r / (n - 1.0))
    )


@dataclass(frozen=True)
class NormalPosteriorSummary:
    """Closed-form posterior over a model space.

    ``sigma2_shape`` / ``sigma2_rate`` parametrize the inverse-gamma law of
    ``sigma**2`` in each model; coefficient ``j`` has conditional variance
    ``sigma**2 / n`` (intercept) or ``sigma**2 / (n - 1)``.
    """

    space: tuple
    model_log_weights: np.ndarray
    model_probs: np.ndarray
    beta_hat: tuple
    rss: np.ndarray
    sigma2_shape: np.ndarray
    sigma2_rate: np.ndarray

    def beta_mean(self, k: int) -> np.ndarray:
        return self.beta_hat[k]

    def sigma_mean(self, k: int) -> float:
        """Posterior mean of sigma (not sigma**2) in model ``k``."""
        a, b = self.sigma2_shape[k], self.sigma2_rate[k]
        return float(math.exp(0.5 * math.log(b) + gammaln(a - 0.5) - gammaln(a)))


def normal_posterior(space: Sequence[ModelSpec], data: Dataset, log_prior=None, check=True):
    """Evaluate the closed-form posterior for every model in ``space``.

    Parameters
    ----------
    space : sequence of ModelSpec
    data : Dataset
    log_prior : array-like, optional
        Unnormalized log prior model weights; uniform when omitted.
    check : bool
        Validate the design structure first (see ``Dataset.check_design``).
    """
    if check:
        data.check_design()
    space = tuple(space)
    lp = np.zeros(len(space)) if log_prior is None else np.asarray(log_prior, dtype=float)
    if lp.shape != (len(space),):
        raise DesignError(f"log_prior needs {len(space)} entries; got shape {lp.shape}")
    logw = np.array([model_log_weight(m, data, lp[i]) for i, m in enumerate(space)])
    probs = np.exp(logw - logsumexp(logw))
    probs /= probs.sum()
    rs = np.array([rss(m, data) for m in space])
    return NormalPosteriorSummary(
        space=space,
        model_log_weights=logw,
        model_probs=probs,
        beta_hat=tuple(beta_hat(m, data) for m in space),
        rss=rs,
        sigma2_shape=np.array([0.5 * (data.n - m.d) for m in space]),
        sigma2_rate=0.5 * rs,
    )


def predict_model_average(space, data: Dataset, x_new, log_prior=None, summary=None):
    """Posterior predictive mean ``sum_k p(k | y) x_new[I_k] . beta_hat_k``.

    ``x_new`` is one design row (length d, leading 1) or a matrix of rows.
    Returns a float for a single row.
    """
    x_new = np.asarray(x_new, dtype=float)
    rows = np.atleast_2d(x_new)
    if rows.shape[1] != data.d:
        raise DesignError(f"x_new needs {data.d} entries per row; got {rows.shape[1]}")
    if summary is None:
        summary = normal_posterior(space, data, log_prior)
    pred = np.zeros(rows.shape[0])
    for p, m, b in zip(summary.model_probs, summary.space, summary.beta_hat):
        pred += p * (rows[:, m.columns] @ b)
    return float(pred[0]) if x_new.ndim == 1 else pred


@dataclass(frozen=True)
class BicDiagnostic:
    """Finite-sample comparison of posterior odds with the BIC difference."""

    log_posterior_odds: float
    neg_half_bic_diff: float
    difference: float
    n: int


def bic_posterior_consistency(s: ModelSpec, t: ModelSpec, data: Dataset, log_prior=(0.0, 0.0)):
    """Compare ``log p(t|y)/p(s|y)`` with ``-(BIC_t - BIC_s) / 2`` for ``s`` nested in ``t``."""
    if not set(s.columns) <= set(t.columns):
        raise DesignError(f"model {s} is not nested in {t}")
    log_odds = model_log_weight(t, data, log_prior[1]) - model_log_weight(s, data, log_prior[0])
    n = data.n
    bic_diff = n * math.log(rss(t, data) / rss(s, data)) + (t.d - s.d) * math.log(n)
    return BicDiagnostic(
        log_posterior_odds=log_odds,
        neg_half_bic_diff=-0.5 * bic_diff,
        difference=log_odds + 0.5 * bic_diff,
        n=n,
    )
