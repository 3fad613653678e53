"""Trial runs that tune the reversible-jump sampler.

For every model a random-walk Metropolis sampler (the reversible-jump
sampler with ``vartheta = 1``) is run over a geometric grid of proposal
scalings.  The grid point with the smallest summed integrated
autocorrelation time gives ``ell_opt``; posterior means and standard
deviations averaged over the grid define the between-model shifts and the
birth proposals.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InputError, TuningError
from .lptn import LptnParams, lptn_params
from .normal_posterior import Dataset, ModelSpec
from .rj_sampler import ParameterState, SamplerInputs, run_chain

__all__ = [
    "TuningConfig",
    "ScalingSearch",
    "TuningResult",
    "iat",
    "iat_unchecked",
    "derive_seed",
    "find_start_scaling",
    "draw_initial_state",
    "tune_model",
    "assemble_inputs",
    "tuning_report",
]

TARGET_ACCEPTANCE = 0.234


@dataclass(frozen=True)
class TuningConfig:
    """Lengths and grid settings of the trial runs."""

    grid_size: int = 11
    ratio: float = 1.3
    T: int = 100_000
    B: int = 10_000
    probe_iters: int = 10_000
    target: float = TARGET_ACCEPTANCE
    tolerance: float = 0.05
    max_bisections: int = 30
    max_regrids: int = 3

    def __post_init__(self):
        if self.grid_size < 3 or self.grid_size % 2 == 0:
            raise InputError(f"grid_size must be odd and at least 3; got {self.grid_size}")
        if not self.ratio > 1:
            raise InputError(f"grid ratio must exceed 1; got {self.ratio}")
        if not self.T > self.B >= 0:
            raise InputError(f"need T > B >= 0; got T={self.T}, B={self.B}")


@dataclass(frozen=True)
class ScalingSearch:
    """Outcome of the acceptance-rate bisection."""

    ell: float
    acceptance: float
    history: tuple


@dataclass(frozen=True)
class TuningResult:
    """Trial-run summaries for one model.

    ``m`` and ``s`` are ``(sigma, beta_1, ..., beta_d)`` means and standard
    deviations averaged over the final grid; ``grid_m``/``grid_s`` hold the
    per-grid-point values.
    """

    columns: tuple
    ell_start: float
    ell_opt: float
    grid: np.ndarray
    acceptance: np.ndarray
    iat_sum: np.ndarray
    m: np.ndarray
    s: np.ndarray
    grid_m: np.ndarray
    grid_s: np.ndarray
    regrids: int
    start_search: ScalingSearch = field(repr=False)

    @property
    def d(self) -> int:
        return len(self.columns)

    @property
    def opt_index(self) -> int:
        return int(np.argmin(self.iat_sum))

    def to_dict(self) -> dict:
        return {
            "columns": list(self.columns),
            "ell_start": self.ell_start,
            "ell_opt": self.ell_opt,
            "grid": self.grid.tolist(),
            "acceptance": self.acceptance.tolist(),
            "iat_sum": self.iat_sum.tolist(),
            "m": self.m.tolist(),
            "s": self.s.tolist(),
            "regrids": self.regrids,
        }


# -- integrated autocorrelation time -------------------------------------------


def _autocorr(x):
    n = x.shape[0]
    xc = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n]
    return acov / acov[0]


def iat_unchecked(x) -> float:
    """IAT without input validation; a constant series gives 1."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] < 2 or np.all(x == x[0]):
        return 1.0
    rho = _autocorr(x)[1:]
    stop = np.flatnonzero(rho <= 0.0)
    m = stop[0] if stop.size else rho.shape[0]
    return float(1.0 + 2.0 * rho[:m].sum())


def iat(series) -> float:
    """Integrated autocorrelation time ``1 + 2 sum_t rho(t)``.

    The sum stops before the first nonpositive autocorrelation estimate.

    Raises
    ------
    InputError
        If the series is shorter than 100, non-finite or constant.
    """
    x = np.asarray(series, dtype=float).ravel()
    if x.shape[0] < 100:
        raise InputError(f"need at least 100 values; got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise InputError("series contains non-finite values")
    if np.all(x == x[0]):
        raise InputError("constant series: autocorrelations are undefined")
    return iat_unchecked(x)


# -- seeds -----------------------------------------------------------------------


def derive_seed(master, *key) -> np.random.SeedSequence:
    """Child seed of ``master`` determined by the integer ``key`` path."""
    if isinstance(master, np.random.SeedSequence):
        base = master.entropy
        prefix = tuple(master.spawn_key)
    else:
        base = 0 if master is None else int(master)
        prefix = ()
    return np.random.SeedSequence(base, spawn_key=prefix + tuple(int(k) for k in key))


# -- runs ------------------------------------------------------------------------


def _rwm_inputs(ell, d, p, error_model):
    return SamplerInputs(
        vartheta=1.0,
        ell=np.array([ell]),
        shift=(np.zeros(d + 1),),
        birth_loc=np.zeros(1),
        birth_scale=np.ones(1),
        p=p,
        error_model=error_model,
    )


def _rwm(model, data, ell, p, error_model, T, B, seed, init):
    tr = run_chain([model], data, _rwm_inputs(ell, model.d, p, error_model), T, B, seed=seed, init=init)
    return tr


def _acceptance(trace) -> float:
    return float(trace.accepted[0, 0] / trace.proposed[0, 0])


def find_start_scaling(
    model: ModelSpec,
    data: Dataset,
    p: LptnParams,
    init: ParameterState,
    seed=None,
    config: TuningConfig = TuningConfig(),
    error_model: str = "lptn",
    ell0: float | None = None,
) -> ScalingSearch:
    """Scaling whose probe acceptance rate is within ``tolerance`` of ``target``.

    Every probe reuses ``seed`` and ``init``, so acceptance is compared on
    common random numbers.  The search brackets the target by doubling or
    halving ``ell`` and then bisects on ``log ell``.

    Raises
    ------
    TuningError
        If no scaling qualifies within ``max_bisections`` probes.
    """
    n, d = data.n, model.d
    if n <= d:
        raise InputError(f"model {model} is not estimable with n={n}")
    if ell0 is None:
        ell0 = 2.38 / math.sqrt(d + 1) * init.sigma / math.sqrt(n)
    T = config.probe_iters
    history = []

    def probe(ell):
        a = _acceptance(_rwm(model, data, ell, p, error_model, T, 0, seed, init))
        history.append((ell, a))
        return a

    lo_t, hi_t = config.target - config.tolerance, config.target + config.tolerance
    ell = ell0
    a = probe(ell)
    lo = hi = None  # lo: acceptance too high (ell too small); hi: too low
    while len(history) < config.max_bisections:
        if lo_t <= a <= hi_t:
            return ScalingSearch(ell=ell, acceptance=a, history=tuple(history))
        if a > hi_t:
            lo = ell
        else:
            hi = ell
        if lo is None:
            ell = hi / 2.0
        elif hi is None:
            ell = lo * 2.0
        else:
            ell = math.sqrt(lo * hi)
        a = probe(ell)
    if lo_t <= a <= hi_t:
        return ScalingSearch(ell=ell, acceptance=a, history=tuple(history))
    raise TuningError(
        f"acceptance-rate search for model {model} failed after {len(history)} probes; "
        f"bracket ({lo}, {hi})",
        diagnostics={"history": history, "bracket": (lo, hi)},
    )


def draw_initial_state(model: ModelSpec, data: Dataset, beta_map, rng) -> ParameterState:
    """Inverse-gamma scale around the MAP residuals, normal coefficients.

    ``sigma^2 ~ InvGamma((n - d)/2, rss/2)``, ``beta_1 ~ N(b_1, sigma^2/n)``,
    ``beta_j ~ N(b_j, sigma^2/(n - 1))``.
    """
    n, d = data.n, model.d
    X = data.X[:, model.columns]
    beta_map = np.asarray(beta_map, dtype=float)
    r = data.y - X @ beta_map
    rss = float(r @ r)
    sigma2 = (0.5 * rss) / rng.gamma(0.5 * (n - d))
    sigma = math.sqrt(sigma2)
    var = np.full(d, sigma2 / (n - 1.0))
    var[0] = sigma2 / n
    beta = beta_map + np.sqrt(var) * rng.standard_normal(d)
    return ParameterState(0, sigma, beta)


def _grid_run(model, data, p, error_model, ell, config, seed, beta_map):
    rng = np.random.default_rng(seed)
    init = draw_initial_state(model, data, beta_map, rng)
    tr = _rwm(model, data, ell, p, error_model, config.T, config.B, rng, init)
    B = config.B
    post = np.column_stack([tr.sigma[B:], tr.beta[B:, : model.d]])
    m = post.mean(axis=0)
    s = post.std(axis=0, ddof=1)
    total = float(sum(iat_unchecked(post[:, i]) for i in range(post.shape[1])))
    if np.any(s == 0):
        # a chain that never moved: treat as maximally inefficient
        total = math.inf
    return m, s, total, _acceptance(tr)


def tune_model(
    model: ModelSpec,
    data: Dataset,
    p: LptnParams,
    beta_map,
    sigma_map: float,
    seed=None,
    config: TuningConfig = TuningConfig(),
    error_model: str = "lptn",
) -> TuningResult:
    """Trial runs for one model.

    Parameters
    ----------
    model : ModelSpec
    data : Dataset
    p : LptnParams
    beta_map, sigma_map
        Preliminary robust estimates; they centre the probes and the trial-run
        initial states.
    seed : int or SeedSequence
        Master seed; every grid point derives its own child seed from its
        integer position on the lattice ``ell_start * ratio**i``.
    config : TuningConfig
    error_model : {"lptn", "normal"}

    Raises
    ------
    TuningError
        If ``ell_opt`` still sits on a grid endpoint after ``max_regrids``
        re-grids; the IAT curve is attached.
    """
    beta_map = np.asarray(beta_map, dtype=float)
    init = ParameterState(0, sigma_map, beta_map)
    search = find_start_scaling(model, data, p, init, derive_seed(seed, 0), config, error_model)
    ell_start = search.ell
    half = config.grid_size // 2
    cache = {}

    def run(i):
        if i not in cache:
            ell = ell_start * config.ratio**i
            cache[i] = _grid_run(model, data, p, error_model, ell, config, derive_seed(seed, 1, i + 10_000), beta_map)
        return cache[i]

    centre = 0
    regrids = 0
    while True:
        idx = list(range(centre - half, centre + half + 1))
        results = [run(i) for i in idx]
        iats = np.array([r[2] for r in results])
        j = int(np.argmin(iats))
        interior = 0 < j < len(idx) - 1
        if interior:
            break
        if regrids >= config.max_regrids:
            raise TuningError(
                f"optimal scaling for model {model} stayed on a grid endpoint after {regrids} re-grids",
                diagnostics={
                    "grid": [ell_start * config.ratio**i for i in idx],
                    "iat_sum": iats.tolist(),
                    "acceptance": [r[3] for r in results],
                },
            )
        centre = idx[j]
        regrids += 1
    grid = np.array([ell_start * config.ratio**i for i in idx])
    grid_m = np.array([r[0] for r in results])
    grid_s = np.array([r[1] for r in results])
    return TuningResult(
        columns=model.columns,
        ell_start=ell_start,
        ell_opt=float(grid[j]),
        grid=grid,
        acceptance=np.array([r[3] for r in results]),
        iat_sum=iats,
        m=grid_m.mean(axis=0),
        s=grid_s.mean(axis=0),
        grid_m=grid_m,
        grid_s=grid_s,
        regrids=regrids,
        start_search=search,
    )


def assemble_inputs(
    results: Sequence[TuningResult],
    vartheta: float = 0.6,
    p: LptnParams | None = None,
    error_model: str = "lptn",
    log_prior=None,
) -> SamplerInputs:
    """Sampler inputs for the nested space the results were tuned on.

    ``shift[j] = (0, m_{1,j} - m_{1,j-1}, ..., m_{d_j - 1,j} - m_{d_j - 1,j-1})``;
    the birth proposal into model ``j`` is LPTN with location ``m_{d_j,j}``
    and scale ``s_{d_j,j}``.
    """
    results = list(results)
    if not results:
        raise InputError("no tuning results")
    for a, b in zip(results[:-1], results[1:]):
        if b.columns[:-1] != a.columns:
            raise InputError(f"results are not nested: {a.columns} then {b.columns}")
    p = lptn_params() if p is None else p
    K = len(results)
    shift = [np.zeros(results[0].d + 1)]
    birth_loc = np.zeros(K)
    birth_scale = np.ones(K)
    for j in range(1, K):
        prev, cur = results[j - 1], results[j]
        # m[0] is sigma; beta means follow
        shift.append(np.r_[0.0, cur.m[1 : prev.d + 1] - prev.m[1:]])
        birth_loc[j] = cur.m[cur.d]
        birth_scale[j] = cur.s[cur.d]
    return SamplerInputs(
        vartheta=vartheta,
        ell=np.array([r.ell_opt for r in results]),
        shift=tuple(shift),
        birth_loc=birth_loc,
        birth_scale=birth_scale,
        p=p,
        error_model=error_model,
        log_prior=None if log_prior is None else np.asarray(log_prior, dtype=float),
        init_loc=tuple(r.m.copy() for r in results),
        init_scale=tuple(r.s.copy() for r in results),
    )


def tuning_report(results: Sequence[TuningResult], path: str | None = None) -> dict:
    """JSON-serializable summary; written to ``path`` when given."""
    rep = {"models": [r.to_dict() for r in results]}
    if path is not None:
        with open(path, "w") as fh:
            json.dump(rep, fh, indent=2, sort_keys=True)
    return rep
