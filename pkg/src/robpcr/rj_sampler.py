"""Reversible-jump MCMC over a nested sequence of regression models.

Models are indexed ``0..K-1`` along the nested space; model ``k`` uses the
first ``dims[k]`` columns of the largest model.  A state is ``(k, sigma,
beta)`` and the target is ``pi(k) (1/sigma) prod_i f((y_i - x_i beta)/sigma)/sigma``
with ``f`` the LPTN (or, for validation, standard normal) density.

Each iteration draws a move type (update with probability ``vartheta``,
birth and death with ``(1 - vartheta)/2`` each).  Updates perturb every
component by ``ell[k]`` times an independent standard LPTN variate.  Births
shift the current parameters by ``shift[k+1]`` and draw the new coefficient
from a location-scale LPTN; deaths invert that map.  Births from the largest
model and deaths from the smallest are rejected outright.

All randomness for an iteration is drawn up front in fixed amounts, so the
compiled and pure-Python kernels consume identical streams.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from . import _backend
from .errors import DesignError, InputError
from .lptn import LptnParams, _open_unit, lptn_logpdf, lptn_params, lptn_quantile
from .normal_posterior import Dataset, ModelSpec, is_nested_sequence

__all__ = [
    "ParameterState",
    "SamplerInputs",
    "ChainTrace",
    "ChainEstimate",
    "ERROR_MODELS",
    "log_target",
    "log_accept_update",
    "log_accept_birth",
    "log_accept_death",
    "initial_state",
    "run_chain",
    "estimate",
]

ERROR_MODELS = {"lptn": 0, "normal": 1}
MOVES = ("update", "birth", "death")
CHUNK = 65536


@dataclass(frozen=True)
class ParameterState:
    """Chain state: model index ``k`` (0-based), scale and coefficients."""

    k: int
    sigma: float
    beta: np.ndarray

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float)).copy()
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def theta(self) -> np.ndarray:
        """``(sigma, beta_1, ..., beta_d)``."""
        return np.r_[self.sigma, self.beta]


@dataclass(frozen=True)
class SamplerInputs:
    """Tuned inputs of the reversible-jump sampler.

    Attributes
    ----------
    vartheta : float
        Probability of an update move.
    ell : ndarray
        Update-kernel scale per model.
    shift : tuple of ndarray
        ``shift[k]`` (``k >= 1``) is added to ``(sigma, beta)`` of model
        ``k - 1`` on a birth into model ``k``; length ``dims[k-1] + 1`` with
        first entry 0.  ``shift[0]`` is unused.
    birth_loc, birth_scale : ndarray
        Location and scale of the LPTN proposal for the coefficient added
        when entering model ``k`` (``k >= 1``).
    p : LptnParams
        Error distribution and proposal shape.
    error_model : {"lptn", "normal"}
    log_prior : ndarray, optional
        Unnormalized log model prior; uniform when ``None``.
    init_loc, init_scale : tuple of ndarray, optional
        Per model ``(sigma, beta...)`` locations and scales for drawing the
        initial state.
    """

    vartheta: float
    ell: np.ndarray
    shift: tuple
    birth_loc: np.ndarray
    birth_scale: np.ndarray
    p: LptnParams = field(default_factory=lptn_params)
    error_model: str = "lptn"
    log_prior: np.ndarray | None = None
    init_loc: tuple | None = None
    init_scale: tuple | None = None

    @property
    def K(self) -> int:
        return int(np.asarray(self.ell).shape[0])

    @property
    def move_probs(self) -> tuple:
        """``(g(update), g(birth), g(death))``."""
        v = self.vartheta
        return (v, 0.5 * (1.0 - v), 0.5 * (1.0 - v))

    def prior(self) -> np.ndarray:
        return np.zeros(self.K) if self.log_prior is None else np.asarray(self.log_prior, dtype=float)

    def validate(self, dims: Sequence[int]):
        """Check completeness and shapes against the model dimensions."""
        K = len(dims)
        if not 0.0 < self.vartheta <= 1.0:
            raise InputError(f"vartheta must lie in (0, 1]; got {self.vartheta}")
        if self.error_model not in ERROR_MODELS:
            raise InputError(f"error_model must be one of {tuple(ERROR_MODELS)}")
        ell = np.asarray(self.ell, dtype=float)
        if ell.shape != (K,) or not np.all(ell > 0):
            raise InputError(f"need {K} positive scalings; got {ell}")
        if len(self.shift) != K:
            raise InputError(f"need {K} shift vectors (entry 0 unused); got {len(self.shift)}")
        for k in range(1, K):
            c = np.asarray(self.shift[k], dtype=float)
            if c.shape != (dims[k - 1] + 1,):
                raise InputError(f"shift for model {k} needs length {dims[k - 1] + 1}; got {c.shape}")
            if c[0] != 0.0:
                raise InputError(f"shift for model {k} must have first entry 0; got {c[0]}")
        bl = np.asarray(self.birth_loc, dtype=float)
        bs = np.asarray(self.birth_scale, dtype=float)
        if bl.shape != (K,) or bs.shape != (K,):
            raise InputError(f"birth proposals need {K} entries")
        if K > 1 and not np.all(bs[1:] > 0):
            raise InputError("birth proposal scales must be positive")
        if self.prior().shape != (K,):
            raise InputError(f"log_prior needs {K} entries")
        for name in ("init_loc", "init_scale"):
            v = getattr(self, name)
            if v is not None:
                if len(v) != K or any(np.asarray(v[k]).shape != (dims[k] + 1,) for k in range(K)):
                    raise InputError(f"{name} needs one (sigma, beta) vector per model")

    def padded_shift(self, D: int) -> np.ndarray:
        out = np.zeros((self.K, D + 1))
        for k in range(1, self.K):
            c = np.asarray(self.shift[k], dtype=float)
            out[k, : c.shape[0]] = c
        return out

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else [np.asarray(x, dtype=float).tolist() for x in a]

        return {
            "vartheta": self.vartheta,
            "ell": np.asarray(self.ell, dtype=float).tolist(),
            "shift": [np.asarray(c, dtype=float).tolist() for c in self.shift],
            "birth_loc": np.asarray(self.birth_loc, dtype=float).tolist(),
            "birth_scale": np.asarray(self.birth_scale, dtype=float).tolist(),
            "rho": self.p.rho,
            "error_model": self.error_model,
            "log_prior": self.prior().tolist(),
            "init_loc": arr(self.init_loc),
            "init_scale": arr(self.init_scale),
        }


@dataclass(frozen=True)
class ChainTrace:
    """Output of ``run_chain``.

    ``k``, ``sigma`` and ``beta`` hold the states after iterations
    ``1..T``; ``beta`` is padded with NaN past ``dims[k]``.  ``proposed``
    and ``accepted`` count moves per (model, move type).
    """

    k: np.ndarray
    sigma: np.ndarray
    beta: np.ndarray
    dims: tuple
    columns: tuple
    seed: object
    burn_in: int
    proposed: np.ndarray
    accepted: np.ndarray
    initial: ParameterState
    inputs: SamplerInputs
    backend: str

    @property
    def T(self) -> int:
        return int(self.k.shape[0])

    def state(self, t: int) -> ParameterState:
        d = self.dims[self.k[t]]
        return ParameterState(self.k[t], self.sigma[t], self.beta[t, :d])

    def acceptance_rates(self) -> dict:
        """Accepted / proposed per move type, pooled over models."""
        out = {}
        for i, name in enumerate(MOVES):
            n = int(self.proposed[:, i].sum())
            out[name] = float(self.accepted[:, i].sum() / n) if n else None
        return out

    def sidecar(self) -> dict:
        return {
            "seed": self.seed,
            "T": self.T,
            "burn_in": self.burn_in,
            "dims": list(self.dims),
            "columns": list(self.columns),
            "backend": self.backend,
            "inputs": self.inputs.to_dict(),
            "initial": {"k": self.initial.k, "sigma": self.initial.sigma, "beta": self.initial.beta.tolist()},
            "proposed": self.proposed.tolist(),
            "accepted": self.accepted.tolist(),
            "acceptance_rates": self.acceptance_rates(),
        }

    def write(self, path):
        """Columnar CSV at ``path`` plus a JSON sidecar at ``path + '.json'``."""
        path = str(path)
        D = self.beta.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "k", "sigma"] + [f"beta{j + 1}" for j in range(D)])
            for t in range(self.T):
                row = [t + 1, int(self.k[t]), repr(float(self.sigma[t]))]
                row += ["" if math.isnan(b) else repr(float(b)) for b in self.beta[t]]
                w.writerow(row)
        with open(path + ".json", "w") as fh:
            json.dump(self.sidecar(), fh, indent=2, sort_keys=True)


@dataclass(frozen=True)
class ChainEstimate:
    """Post-burn-in posterior summaries from a trace.

    Per-model entries are ``None`` when the model was never visited.
    Standard errors use the integrated autocorrelation time of the visited
    subsequence.
    """

    probs: np.ndarray
    prob_se: np.ndarray
    visits: np.ndarray
    beta_mean: tuple
    beta_se: tuple
    sigma_mean: tuple
    sigma_se: tuple
    never_visited: tuple


# -- target and acceptance ratios ---------------------------------------------


def _lp_tuple(p: LptnParams):
    return (p.tau, p.lam, p.log_phi_tau, p.log_tau, p.loglog_tau)


def log_target(sigma, beta, X, y, p: LptnParams, error_model="lptn") -> float:
    """``-log sigma + sum_i log[f((y_i - x_i beta)/sigma)/sigma]``; ``-inf``
    for ``sigma <= 0``."""
    if not sigma > 0:
        return -math.inf
    beta = np.asarray(beta, dtype=float)
    z = (y - X[:, : beta.shape[0]] @ beta) / sigma
    if error_model == "normal":
        ll = float(np.sum(-0.5 * z * z)) - z.shape[0] * 0.5 * math.log(2.0 * math.pi)
    else:
        ll = float(np.sum(lptn_logpdf(z, p)))
    return ll - (y.shape[0] + 1) * math.log(sigma)


def _design(space, data):
    if not space or not is_nested_sequence(space):
        raise DesignError("the model space must be a nested sequence")
    dims = tuple(m.d for m in space)
    cols = space[-1].columns
    return np.ascontiguousarray(data.X[:, cols]), dims, cols


def log_accept_update(current: ParameterState, candidate, space, data: Dataset, p: LptnParams, error_model="lptn") -> float:
    """Log acceptance ratio of an update move before capping at 0."""
    X, dims, _ = _design(space, data)
    cand = np.asarray(candidate, dtype=float)
    if cand.shape != (dims[current.k] + 1,):
        raise DesignError(f"candidate needs {dims[current.k] + 1} entries; got {cand.shape}")
    if not cand[0] > 0:
        return -math.inf
    new = log_target(cand[0], cand[1:], X, data.y, p, error_model)
    old = log_target(current.sigma, current.beta, X, data.y, p, error_model)
    return new - old


def _log_q(u, loc, scale, p):
    return float(lptn_logpdf((u - loc) / scale, p)) - math.log(scale)


def log_accept_birth(current: ParameterState, u_new: float, inputs: SamplerInputs, space, data: Dataset) -> float:
    """Log acceptance ratio of a birth ``k -> k + 1`` before capping."""
    X, dims, _ = _design(space, data)
    k = current.k
    if k >= len(dims) - 1:
        return -math.inf
    p, prior = inputs.p, inputs.prior()
    theta = current.theta + np.asarray(inputs.shift[k + 1], dtype=float)
    new = log_target(theta[0], np.r_[theta[1:], u_new], X, data.y, p, inputs.error_model)
    old = log_target(current.sigma, current.beta, X, data.y, p, inputs.error_model)
    logq = _log_q(u_new, inputs.birth_loc[k + 1], inputs.birth_scale[k + 1], p)
    return prior[k + 1] - prior[k] + new - old - logq


def log_accept_death(current: ParameterState, inputs: SamplerInputs, space, data: Dataset) -> float:
    """Log acceptance ratio of a death ``k -> k - 1`` before capping."""
    X, dims, _ = _design(space, data)
    k = current.k
    if k == 0:
        return -math.inf
    p, prior = inputs.p, inputs.prior()
    theta = current.theta
    removed = theta[-1]
    theta = theta[:-1] - np.asarray(inputs.shift[k], dtype=float)
    new = log_target(theta[0], theta[1:], X, data.y, p, inputs.error_model)
    old = log_target(current.sigma, current.beta, X, data.y, p, inputs.error_model)
    logq = _log_q(removed, inputs.birth_loc[k], inputs.birth_scale[k], p)
    return prior[k - 1] - prior[k] + new + logq - old


# -- chain driver ----------------------------------------------------------------


def _truncated_normal(rng, mean, sd):
    """One draw from ``N(mean, sd^2)`` truncated to ``(0, inf)`` by inversion."""
    lo = float(ndtr(-mean / sd))
    u = lo + (1.0 - lo) * float(_open_unit(rng.random()))
    x = mean + sd * float(ndtri(min(u, 1.0 - 1e-16)))
    return x if x > 0 else float(np.finfo(float).tiny)


def initial_state(inputs: SamplerInputs, dims, rng) -> ParameterState:
    """Uniform model index, truncated-normal scale and normal coefficients
    from the per-model ``init_loc``/``init_scale`` summaries."""
    if inputs.init_loc is None or inputs.init_scale is None:
        raise InputError("no initial state given and the inputs carry no init summaries")
    k = int(rng.integers(len(dims)))
    m = np.asarray(inputs.init_loc[k], dtype=float)
    s = np.asarray(inputs.init_scale[k], dtype=float)
    sigma = _truncated_normal(rng, m[0], s[0])
    beta = m[1:] + s[1:] * rng.standard_normal(dims[k])
    return ParameterState(k, sigma, beta)


def _seed_repr(seed):
    if isinstance(seed, np.random.SeedSequence):
        return {"entropy": str(seed.entropy), "spawn_key": list(seed.spawn_key)}
    if seed is None or isinstance(seed, (int, np.integer)):
        return None if seed is None else int(seed)
    return repr(seed)


def run_chain(
    space: Sequence[ModelSpec],
    data: Dataset,
    inputs: SamplerInputs,
    T: int,
    B: int,
    seed=None,
    init: ParameterState | None = None,
    backend: str | None = None,
) -> ChainTrace:
    """Run the reversible-jump sampler for ``T`` iterations.

    Parameters
    ----------
    space : sequence of ModelSpec
        Nested models, smallest first.
    data : Dataset
    inputs : SamplerInputs
    T, B : int
        Iterations and burn-in (``T > B >= 0``).
    seed : int or SeedSequence
        Drives the initial state (when ``init`` is None) and every move.
    init : ParameterState, optional
    backend : {"cython", "python"}, optional
        Kernel implementation; defaults to the compiled one when built.
    """
    T, B = int(T), int(B)
    if not T > B >= 0:
        raise InputError(f"need T > B >= 0; got T={T}, B={B}")
    X, dims, cols = _design(space, data)
    inputs.validate(dims)
    kernel = _backend.get_kernel(backend)
    rng = np.random.default_rng(seed)
    if init is None:
        init = initial_state(inputs, dims, rng)
    if not 0 <= init.k < len(dims) or init.beta.shape != (dims[init.k],):
        raise InputError(f"initial state does not match model {init.k}")
    D = X.shape[1]
    p = inputs.p
    lp = _lp_tuple(p)
    em = ERROR_MODELS[inputs.error_model]
    theta = np.full(D + 1, np.nan)
    theta[: dims[init.k] + 1] = init.theta
    lt = log_target(init.sigma, init.beta, X, data.y, p, inputs.error_model)
    if not np.isfinite(lt):
        raise InputError("initial state has zero posterior density")

    y = np.ascontiguousarray(data.y)
    dims_a = np.asarray(dims, dtype=np.int64)
    ell = np.ascontiguousarray(inputs.ell, dtype=float)
    shift = inputs.padded_shift(D)
    bl = np.ascontiguousarray(inputs.birth_loc, dtype=float)
    bs = np.ascontiguousarray(inputs.birth_scale, dtype=float)
    bs = np.where(bs > 0, bs, 1.0)
    prior = np.ascontiguousarray(inputs.prior())
    out_k = np.empty(T, dtype=np.int64)
    out_sigma = np.empty(T)
    out_beta = np.empty((T, D))
    proposed = np.zeros((len(dims), 3), dtype=np.int64)
    accepted = np.zeros((len(dims), 3), dtype=np.int64)
    k = np.int64(init.k)
    t0 = 0
    while t0 < T:
        c = min(CHUNK, T - t0)
        u_move = rng.random(c)
        log_u = np.log(_open_unit(rng.random(c)))
        z = np.ascontiguousarray(lptn_quantile(_open_unit(rng.random((c, D + 1))), p))
        k, lt = kernel.run_kernel(
            y, X, dims_a, ell, shift, bl, bs, prior, float(inputs.vartheta), lp, em,
            u_move, log_u, z, k, theta, lt, out_k, out_sigma, out_beta, proposed, accepted, t0,
        )
        k = np.int64(k)
        t0 += c
    return ChainTrace(
        k=out_k,
        sigma=out_sigma,
        beta=out_beta,
        dims=dims,
        columns=cols,
        seed=_seed_repr(seed),
        burn_in=B,
        proposed=proposed,
        accepted=accepted,
        initial=init,
        inputs=inputs,
        backend=backend or _backend.BACKEND,
    )


# -- estimation ----------------------------------------------------------------


def _mcse(x) -> float:
    from .tuner import iat_unchecked

    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n < 2:
        return math.nan
    var = float(np.var(x, ddof=1))
    if var == 0.0:
        return 0.0
    return math.sqrt(var * iat_unchecked(x) / n)


def estimate(trace: ChainTrace, burn_in: int | None = None) -> ChainEstimate:
    """Occupancy probabilities and per-model means after burn-in."""
    B = trace.burn_in if burn_in is None else int(burn_in)
    if not 0 <= B < trace.T:
        raise InputError(f"burn-in {B} leaves no iterations out of {trace.T}")
    ks = trace.k[B:]
    K = len(trace.dims)
    visits = np.bincount(ks, minlength=K)
    N = ks.shape[0]
    probs = visits / N
    prob_se = np.array([_mcse((ks == k).astype(float)) for k in range(K)])
    bm, bse, sm, sse, never = [], [], [], [], []
    for k in range(K):
        sel = ks == k
        if not sel.any():
            never.append(k)
            for lst in (bm, bse, sm, sse):
                lst.append(None)
            continue
        beta = trace.beta[B:][sel, : trace.dims[k]]
        sig = trace.sigma[B:][sel]
        bm.append(beta.mean(axis=0))
        bse.append(np.array([_mcse(beta[:, j]) for j in range(beta.shape[1])]))
        sm.append(float(sig.mean()))
        sse.append(_mcse(sig))
    return ChainEstimate(
        probs=probs,
        prob_se=prob_se,
        visits=visits,
        beta_mean=tuple(bm),
        beta_se=tuple(bse),
        sigma_mean=tuple(sm),
        sigma_se=tuple(sse),
        never_visited=tuple(never),
    )
