"""Two-stage principal component regression.

Stage one screens each retained PC on its own: the Bayes factor of
``{intercept, PC j}`` against ``{intercept}`` decides whether the PC enters
the nested model sequence.  Stage two runs one sampler over that sequence
and averages the per-model predictions by posterior model probability.

The robust path uses the approximate robust PCA, LPTN errors and the tuned
reversible-jump sampler.  The normal path uses traditional PCA and the
closed-form posterior.
"""
from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DesignError, InputError
from .lptn import LptnParams, lptn_params
from .normal_posterior import (
    Dataset,
    ModelSpec,
    model_log_weight,
    nested_space,
    normal_posterior,
)
from .pca import PcaResult, apply_standardization, run_pca
from .rj_sampler import ChainEstimate, estimate, run_chain
from .robust import (
    OUTLIER_THRESHOLD,
    RobustFit,
    map_location_scale,
    map_regression,
    standardized_residuals,
)
from .tuner import TuningConfig, TuningResult, assemble_inputs, derive_seed, tune_model

__all__ = [
    "PipelineConfig",
    "ScreeningReport",
    "PredictionReport",
    "AnalysisResult",
    "ModelCache",
    "screen_components",
    "build_nested_space",
    "fit_predict",
    "flag_outliers_full",
    "prepare",
    "run_analysis",
    "aad",
    "sign_rate",
]

# seed stage tags
_SCREEN, _TUNE, _MAIN = 1, 2, 3


@dataclass(frozen=True)
class PipelineConfig:
    """Settings shared by both stages.

    ``screen_T``/``screen_B`` are the lengths of each screening chain,
    ``T``/``B`` those of the main chain.
    """

    rho: float = 0.95
    cap: float = 0.95
    bf_threshold: float = 1.0
    vartheta: float = 0.6
    tuning: TuningConfig = field(default_factory=TuningConfig)
    screen_T: int = 100_000
    screen_B: int = 10_000
    T: int = 1_000_000
    B: int = 100_000
    outlier_threshold: float = OUTLIER_THRESHOLD
    clip: bool = True

    def __post_init__(self):
        if not 0.0 < self.cap <= 1.0:
            raise InputError(f"cap must lie in (0, 1]; got {self.cap}")
        if not self.bf_threshold > 0:
            raise InputError(f"bf_threshold must be positive; got {self.bf_threshold}")
        if not 0.0 < self.vartheta < 1.0:
            raise InputError(f"vartheta must lie in (0, 1); got {self.vartheta}")
        if not self.T > self.B > 0 or not self.screen_T > self.screen_B > 0:
            raise InputError("chain lengths need T > B > 0")
        if not self.outlier_threshold > 0:
            raise InputError("outlier_threshold must be positive")

    @property
    def p(self) -> LptnParams:
        return lptn_params(self.rho)


@dataclass(frozen=True)
class ScreeningReport:
    """Per-PC Bayes factors against the intercept-only model.

    ``columns[i]`` is the design column (PC index, 1-based among the PCs) of
    entry ``i``.  ``flags[i]`` is ``"alternative_never_visited"`` (``bf`` is
    then the upper bound ``1/N``), ``"null_never_visited"`` (lower bound
    ``N``) or ``None``.
    """

    columns: tuple
    bf: np.ndarray
    retained: np.ndarray
    threshold: float
    flags: tuple
    diagnostics: tuple = ()

    @property
    def retained_columns(self) -> tuple:
        return tuple(c for c, r in zip(self.columns, self.retained) if r)

    def to_dict(self) -> dict:
        return {
            "columns": list(self.columns),
            "bayes_factor": [float(b) for b in self.bf],
            "retained": [bool(r) for r in self.retained],
            "threshold": self.threshold,
            "flags": list(self.flags),
            "diagnostics": list(self.diagnostics),
        }


@dataclass(frozen=True)
class PredictionReport:
    """Model-averaged predictions on the original response scale.

    ``per_model`` is ``n_new x K``, NaN for models without a coefficient
    estimate; ``standardized`` holds the averaged predictions before
    de-standardization.
    """

    predictions: np.ndarray
    per_model: np.ndarray
    model_probs: np.ndarray
    standardized: np.ndarray
    aad: float | None = None
    sign_rate: float | None = None
    beta_means: tuple = ()
    estimate: ChainEstimate | None = None

    def to_dict(self) -> dict:
        return {
            "predictions": self.predictions.tolist(),
            "per_model": [[None if math.isnan(v) else float(v) for v in row] for row in self.per_model],
            "model_probs": self.model_probs.tolist(),
            "aad": self.aad,
            "sign_rate": self.sign_rate,
            "beta_means": [None if b is None else np.asarray(b).tolist() for b in self.beta_means],
        }


class ModelCache:
    """Robust MAP fits and tuning results keyed by model columns.

    Tuning seeds depend only on the master seed and the columns, so a model
    tuned during screening is reused unchanged by the main stage.
    """

    def __init__(self, data: Dataset, p: LptnParams, config: PipelineConfig, seed, error_model="lptn"):
        self.data, self.p, self.config, self.seed = data, p, config, seed
        self.error_model = error_model
        self.fits: dict = {}
        self.tuned: dict = {}

    def fit(self, model: ModelSpec) -> RobustFit:
        if model.columns not in self.fits:
            self.fits[model.columns] = map_regression(self.data.X[:, model.columns], self.data.y, self.p)
        return self.fits[model.columns]

    def tune(self, model: ModelSpec) -> TuningResult:
        if model.columns not in self.tuned:
            f = self.fit(model)
            self.tuned[model.columns] = tune_model(
                model,
                self.data,
                self.p,
                f.beta,
                f.sigma,
                seed=derive_seed(self.seed, _TUNE, *model.columns),
                config=self.config.tuning,
                error_model=self.error_model,
            )
        return self.tuned[model.columns]


# -- metrics -------------------------------------------------------------------


def aad(pred, truth) -> float:
    """Average absolute deviation."""
    pred, truth = np.asarray(pred, dtype=float), np.asarray(truth, dtype=float)
    return float(np.mean(np.abs(pred - truth)))


def sign_rate(pred, truth) -> float:
    """Fraction of predictions whose sign matches the truth."""
    pred, truth = np.asarray(pred, dtype=float), np.asarray(truth, dtype=float)
    return float(np.mean(np.sign(pred) == np.sign(truth)))


# -- screening -----------------------------------------------------------------


def _bf_from_trace(est: ChainEstimate, n_post: int):
    v0, v1 = est.visits
    if v1 == 0:
        return 1.0 / n_post, "alternative_never_visited"
    if v0 == 0:
        return float(n_post), "null_never_visited"
    return float(v1 / v0), None


def screen_components(
    data: Dataset,
    p: LptnParams | None = None,
    threshold: float = 1.0,
    seed=None,
    config: PipelineConfig | None = None,
    closed_form: bool = False,
    cache: ModelCache | None = None,
    log_prior=(0.0, 0.0),
) -> ScreeningReport:
    """Bayes factor of each PC against the intercept-only model.

    With ``closed_form`` the normal-error posterior is evaluated exactly;
    otherwise a two-model reversible-jump chain is tuned and run per PC and
    ``BF = (visits to {1, j} / visits to {1}) * pi(1)/pi(2)``.
    """
    if data.d < 2:
        raise DesignError("screening needs at least one PC column")
    config = PipelineConfig() if config is None else config
    p = config.p if p is None else p
    prior_odds = float(log_prior[1] - log_prior[0])
    cols = tuple(range(1, data.d))
    bfs, flags, diags = [], [], []
    if closed_form:
        base = ModelSpec((0,))
        w0 = model_log_weight(base, data, log_prior[0])
        for j in cols:
            w1 = model_log_weight(ModelSpec((0, j)), data, log_prior[1])
            bfs.append(math.exp(w1 - w0 - prior_odds))
            flags.append(None)
    else:
        cache = ModelCache(data, p, config, seed) if cache is None else cache
        base = ModelSpec((0,))
        for j in cols:
            space = [base, ModelSpec((0, j))]
            results = [cache.tune(m) for m in space]
            inputs = assemble_inputs(
                results, config.vartheta, p, cache.error_model, log_prior=np.asarray(log_prior, dtype=float)
            )
            tr = run_chain(space, data, inputs, config.screen_T, config.screen_B, seed=derive_seed(seed, _SCREEN, j))
            est = estimate(tr)
            bf, flag = _bf_from_trace(est, config.screen_T - config.screen_B)
            bfs.append(bf * math.exp(-prior_odds))
            flags.append(flag)
            diags.append(
                {
                    "column": j,
                    "visits": est.visits.tolist(),
                    "acceptance": tr.acceptance_rates(),
                    "ell": [r.ell_opt for r in results],
                }
            )
    bf = np.array(bfs)
    return ScreeningReport(
        columns=cols,
        bf=bf,
        retained=bf > threshold,
        threshold=float(threshold),
        flags=tuple(flags),
        diagnostics=tuple(diags),
    )


def build_nested_space(report: ScreeningReport) -> list:
    """``{0}, {0, j1}, {0, j1, j2}, ...`` over the retained PCs in order."""
    return nested_space(report.retained_columns)


# -- prediction ----------------------------------------------------------------


def _per_model_predictions(space, rows, betas):
    out = np.full((rows.shape[0], len(space)), np.nan)
    for k, (m, b) in enumerate(zip(space, betas)):
        if b is not None:
            out[:, k] = rows[:, : m.d] @ np.asarray(b)
    return out


def fit_predict(
    space: Sequence[ModelSpec],
    data: Dataset,
    X_new,
    y_true=None,
    config: PipelineConfig | None = None,
    seed=None,
    y_loc: float = 0.0,
    y_scale: float = 1.0,
    closed_form: bool = False,
    cache: ModelCache | None = None,
):
    """Model-averaged predictions for new design rows.

    Parameters
    ----------
    space : sequence of ModelSpec
        Nested models; column indices refer to ``data.X``.
    data : Dataset
    X_new : array_like
        New design rows in the columns of ``data.X`` (leading 1).
    y_true : array_like, optional
        Truth on the original scale; enables the metrics.
    y_loc, y_scale : float
        Response standardization to undo.
    closed_form : bool
        Use the normal-error posterior instead of the sampler.

    Returns
    -------
    report : PredictionReport
    trace : ChainTrace or None
    """
    config = PipelineConfig() if config is None else config
    space = list(space)
    cols = space[-1].columns
    rows = np.atleast_2d(np.asarray(X_new, dtype=float))
    if rows.shape[1] != data.d:
        raise DesignError(f"X_new needs {data.d} columns; got {rows.shape[1]}")
    rows = rows[:, cols]
    trace = None
    est = None
    if closed_form:
        summ = normal_posterior(space, data, check=False)
        probs = summ.model_probs
        betas = [summ.beta_hat[k] for k in range(len(space))]
    else:
        cache = ModelCache(data, config.p, config, seed) if cache is None else cache
        results = [cache.tune(m) for m in space]
        inputs = assemble_inputs(results, config.vartheta, config.p, cache.error_model)
        trace = run_chain(space, data, inputs, config.T, config.B, seed=derive_seed(seed, _MAIN))
        est = estimate(trace)
        probs = est.probs
        betas = list(est.beta_mean)
    per_model = _per_model_predictions(space, rows, betas)
    std_pred = np.nansum(per_model * probs, axis=1)
    pred = y_loc + y_scale * std_pred
    per_model_raw = y_loc + y_scale * per_model
    rep = PredictionReport(
        predictions=pred,
        per_model=per_model_raw,
        model_probs=np.asarray(probs, dtype=float),
        standardized=std_pred,
        aad=None if y_true is None else aad(pred, y_true),
        sign_rate=None if y_true is None else sign_rate(pred, y_true),
        beta_means=tuple(betas),
        estimate=est,
    )
    return rep, trace


def flag_outliers_full(space, data: Dataset, fits: dict, threshold: float = OUTLIER_THRESHOLD) -> dict:
    """Standardized residuals and flags per model, keyed by model columns."""
    out = {}
    for m in space:
        fit = fits[m.columns]
        out[m.columns] = standardized_residuals(fit, data.X[:, m.columns], data.y, threshold)
    return out


# -- end to end ------------------------------------------------------------------


@dataclass
class AnalysisResult:
    """Everything produced by ``run_analysis`` for one mode."""

    mode: str
    pca: PcaResult
    y_loc: float
    y_scale: float
    data: Dataset
    screening: ScreeningReport
    space: list
    prediction: PredictionReport | None
    outliers: dict
    traces: dict = field(default_factory=dict)
    robust_correlation: object = None


@contextmanager
def _stage(name):
    """Tag exceptions escaping the block with the pipeline stage."""
    try:
        yield
    except Exception as exc:
        if not hasattr(exc, "stage"):
            exc.stage = name
        raise


def prepare(C_raw, y_raw, mode: str, config: PipelineConfig):
    """PCA, response standardization and the regression dataset.

    Returns ``(pca, rc, y_loc, y_scale, data)``.
    """
    y_raw = np.asarray(y_raw, dtype=float).ravel()
    robust = mode == "robust"
    pca, rc = run_pca(C_raw, robust=robust, p=config.p, cap=config.cap, clip=config.clip)
    if y_raw.shape[0] != pca.C.shape[0]:
        raise DesignError(f"y has {y_raw.shape[0]} rows but the covariates have {pca.C.shape[0]}")
    if robust:
        f = map_location_scale(y_raw, config.p)
        y_loc, y_scale = f.loc, f.sigma
    else:
        y_loc, y_scale = float(y_raw.mean()), float(y_raw.std(ddof=1))
        if not y_scale > 0:
            raise DesignError("response is constant")
    y = (y_raw - y_loc) / y_scale
    X = np.column_stack([np.ones(y.shape[0]), pca.scores])
    return pca, rc, y_loc, y_scale, Dataset(y, X)


def run_analysis(
    C_raw,
    y_raw,
    C_new=None,
    y_true=None,
    mode: str = "robust",
    config: PipelineConfig | None = None,
    seed=None,
) -> AnalysisResult:
    """Standardize, decompose, screen, build the nested space and predict.

    ``mode="normal"`` uses the closed-form posterior throughout.  Exceptions
    carry a ``stage`` attribute naming the step that failed.
    """
    if mode not in ("robust", "normal"):
        raise InputError(f"mode must be 'robust' or 'normal'; got {mode!r}")
    config = PipelineConfig() if config is None else config
    p = config.p
    with _stage("pca"):
        pca, rc, y_loc, y_scale, data = prepare(C_raw, y_raw, mode, config)
    closed = mode == "normal"
    cache = None if closed else ModelCache(data, p, config, seed)
    with _stage("screening"):
        screening = screen_components(
            data, p, config.bf_threshold, seed=seed, config=config, closed_form=closed, cache=cache
        )
    space = build_nested_space(screening)
    prediction = None
    traces = {}
    if C_new is not None:
        with _stage("prediction"):
            C_new = np.atleast_2d(np.asarray(C_new, dtype=float))
            Z_new = pca.project(apply_standardization(C_new, pca.column_stats))
            X_new = np.column_stack([np.ones(Z_new.shape[0]), Z_new])
            prediction, trace = fit_predict(
                space, data, X_new, y_true, config, seed, y_loc, y_scale, closed_form=closed, cache=cache
            )
        if trace is not None:
            traces["main"] = trace
    with _stage("outliers"):
        if cache is None:
            fits = {m.columns: map_regression(data.X[:, m.columns], data.y, p) for m in space}
        else:
            fits = {m.columns: cache.fit(m) for m in space}
        outliers = flag_outliers_full(space, data, fits, config.outlier_threshold)
    return AnalysisResult(
        mode=mode,
        pca=pca,
        y_loc=y_loc,
        y_scale=y_scale,
        data=data,
        screening=screening,
        space=space,
        prediction=prediction,
        outliers=outliers,
        traces=traces,
        robust_correlation=rc,
    )

