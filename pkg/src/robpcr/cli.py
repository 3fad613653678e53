"""Command-line entry point.

``robpcr run`` ingests CSV files, runs the pipeline in robust mode, normal
mode or both, and writes ``report.json``, ``predictions.csv``, trace files
and tidy plot-data CSVs into ``--out-dir``.  ``robpcr toy-demo`` writes the
two-covariate reconstruction comparison.

Exit status is 0 on success, 2 on input errors and 3 on numerical failures.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DegenerateScaleError, DesignError, DomainError, InputError, RobpcrError
from .pca import inlier_reconstruction_error, pairwise_residuals, reconstruct, run_pca, toy_covariates
from .pipeline import PipelineConfig, _stage, run_analysis
from .robust import OUTLIER_THRESHOLD
from .tuner import TuningConfig

log = logging.getLogger("robpcr")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
MODES = ("robust", "normal", "both")
TRUTH_COLUMN = "y_true"
MIN_ROWS = 4


@dataclass(frozen=True)
class RunConfig:
    """Serializable run configuration, echoed verbatim into the report."""

    rho: float = 0.95
    cap: float = 0.95
    bf_threshold: float = 1.0
    vartheta: float = 0.6
    tuning_iters: int = 100_000
    tuning_burnin: int = 10_000
    probe_iters: int = 10_000
    grid_size: int = 11
    screen_iters: int = 100_000
    screen_burnin: int = 10_000
    iters: int = 1_000_000
    burnin: int = 100_000
    seed: int = 0
    mode: str = "both"
    outlier_threshold: float = OUTLIER_THRESHOLD
    clip: bool = True
    train: str | None = None
    predict: str | None = None
    out_dir: str = "robpcr-out"

    def __post_init__(self):
        if self.mode not in MODES:
            raise InputError(f"mode must be one of {MODES}; got {self.mode!r}")
        if not 0.0 < self.rho < 1.0:
            raise InputError(f"rho must lie in (0, 1); got {self.rho}")
        if not self.seed >= 0:
            raise InputError("seed must be non-negative")
        for t, b in [
            (self.tuning_iters, self.tuning_burnin),
            (self.screen_iters, self.screen_burnin),
            (self.iters, self.burnin),
        ]:
            if not t > b > 0:
                raise InputError(f"chain lengths need T > B > 0; got T={t}, B={b}")
        # remaining ranges are checked by PipelineConfig
        self.pipeline()

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise InputError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def pipeline(self) -> PipelineConfig:
        tuning = TuningConfig(
            grid_size=self.grid_size,
            T=self.tuning_iters,
            B=self.tuning_burnin,
            probe_iters=self.probe_iters,
        )
        return PipelineConfig(
            rho=self.rho,
            cap=self.cap,
            bf_threshold=self.bf_threshold,
            vartheta=self.vartheta,
            tuning=tuning,
            screen_T=self.screen_iters,
            screen_B=self.screen_burnin,
            T=self.iters,
            B=self.burnin,
            outlier_threshold=self.outlier_threshold,
            clip=self.clip,
        )


# -- ingestion -------------------------------------------------------------------


def _read_table(path):
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    if not rows:
        raise InputError(f"{path}: file is empty")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    values = np.empty((len(body), len(header)))
    for i, row in enumerate(body):
        # 1-based line numbers; the header is line 1
        if len(row) != len(header):
            raise InputError(f"{path}: line {i + 2} has {len(row)} cells, header has {len(header)}")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                v = math.nan
            if not math.isfinite(v):
                raise InputError(
                    f"{path}: non-numeric cell {cell.strip()!r} at line {i + 2}, column {j + 1} ({header[j]})"
                )
            values[i, j] = v
    return header, values


def _check_covariates(path, names, C):
    for j in range(C.shape[1]):
        if np.ptp(C[:, j]) == 0.0:
            raise InputError(f"{path}: covariate column {names[j]!r} is constant")


def ingest(train_csv, predict_csv=None):
    """Read the training file and the optional prediction file.

    The first training column is the response and the rest are covariates.
    The prediction file holds the same covariates, plus an optional
    ``y_true`` column.

    Returns
    -------
    dict
        ``y``, ``C``, ``names`` and, when ``predict_csv`` is given,
        ``C_new`` and ``y_true`` (``None`` without a truth column).
    """
    header, M = _read_table(train_csv)
    if len(header) < 2:
        raise InputError(f"{train_csv}: need a response column and at least one covariate")
    if M.shape[0] < MIN_ROWS:
        raise InputError(f"{train_csv}: need at least {MIN_ROWS} rows; got {M.shape[0]}")
    names = header[1:]
    y, C = M[:, 0], M[:, 1:]
    _check_covariates(train_csv, names, C)
    log.info("training data: %d rows, %d covariates", C.shape[0], C.shape[1])
    out = {"y": y, "C": C, "names": names, "C_new": None, "y_true": None}
    if predict_csv is None:
        return out
    h2, N = _read_table(predict_csv)
    truth = None
    if TRUTH_COLUMN in h2:
        t = h2.index(TRUTH_COLUMN)
        truth = N[:, t]
        h2 = h2[:t] + h2[t + 1 :]
        N = np.delete(N, t, axis=1)
    if h2 != names:
        raise InputError(f"{predict_csv}: covariate columns {h2} do not match training columns {names}")
    if N.shape[0] == 0:
        raise InputError(f"{predict_csv}: no rows")
    log.info("prediction data: %d rows%s", N.shape[0], " with y_true" if truth is not None else "")
    out["C_new"], out["y_true"] = N, truth
    return out


# -- serialization ---------------------------------------------------------------


def _num(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


def _pca_summary(res, names):
    return {
        "robust": res.robust,
        "q": res.q,
        "eigenvalues": [float(v) for v in res.eigenvalues],
        "all_eigenvalues": [float(v) for v in res.all_eigenvalues],
        "explained": [float(v) for v in res.explained],
        "excluded": list(res.excluded),
        "loadings": {n: [float(v) for v in row] for n, row in zip(names, res.eigenvectors[:, : res.q])},
        "column_location": {n: float(v) for n, v in zip(names, res.column_stats.loc)},
        "column_scale": {n: float(v) for n, v in zip(names, res.column_stats.scale)},
    }


def _covariate_outliers(result, C, names, threshold):
    """Rows flagged by any pairwise robust covariate regression (robust mode only)."""
    if result.robust_correlation is None:
        return None
    flagged = {}
    for (j1, j2), rep in pairwise_residuals(result.robust_correlation, result.pca.C, threshold).items():
        for i in rep.flagged:
            flagged.setdefault(int(i), []).append(f"{names[j2]}~{names[j1]}")
    return [{"row": i, "pairs": flagged[i]} for i in sorted(flagged)]


def _mode_report(result, names, threshold):
    pred = result.prediction
    chain = None
    if result.traces.get("main") is not None:
        tr = result.traces["main"]
        chain = {
            "backend": tr.backend,
            "iterations": int(tr.T),
            "burn_in": int(tr.burn_in),
            "acceptance": tr.acceptance_rates(),
        }
    est = None if pred is None else pred.estimate
    return {
        "y_location": float(result.y_loc),
        "y_scale": float(result.y_scale),
        "pca": _pca_summary(result.pca, names),
        "screening": result.screening.to_dict(),
        "models": [list(m.columns) for m in result.space],
        "model_probabilities": None if pred is None else [float(v) for v in pred.model_probs],
        "model_probability_se": None if est is None else [_num(v) for v in est.prob_se],
        "beta_means": None if pred is None else pred.to_dict()["beta_means"],
        "predictions": None if pred is None else [float(v) for v in pred.predictions],
        "metrics": {
            "aad": None if pred is None else pred.aad,
            "sign_rate": None if pred is None else pred.sign_rate,
        },
        "flagged_outliers": {
            "regression": {
                ",".join(map(str, cols)): [int(i) for i in rep.flagged] for cols, rep in result.outliers.items()
            },
            "covariates": _covariate_outliers(result, result.pca.C, names, threshold),
        },
        "chain": chain,
    }


def _write_tidy(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "series"])
        for x, y, s in rows:
            w.writerow([repr(float(x)), repr(float(y)), s])


def _write_plots(out, results, C, y, names):
    plots = out / "plots"
    plots.mkdir(exist_ok=True)
    for mode, res in results.items():
        rows = []
        for j in range(res.pca.q):
            rows.extend((s, v, f"PC{j + 1}") for s, v in zip(res.pca.scores[:, j], y))
        _write_tidy(plots / f"pc_scatter_{mode}.csv", rows)
        if C.shape[1] >= 2:
            M = reconstruct(res.pca, q=1, original_scale=True)
            rows = [(a, b, "observed") for a, b in C[:, :2]]
            rows += [(a, b, f"rank1_{mode}") for a, b in M[:, :2]]
            _write_tidy(plots / f"reconstruction_{mode}.csv", rows)
        if res.prediction is not None:
            rows = [(k, v, "posterior_probability") for k, v in enumerate(res.prediction.model_probs)]
            _write_tidy(plots / f"model_probabilities_{mode}.csv", rows)


def _write_predictions(path, results, y_true):
    modes = [m for m, r in results.items() if r.prediction is not None]
    if not modes:
        return
    n = results[modes[0]].prediction.predictions.shape[0]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row"] + [f"pred_{m}" for m in modes] + ([TRUTH_COLUMN] if y_true is not None else []))
        for i in range(n):
            row = [i] + [repr(float(results[m].prediction.predictions[i])) for m in modes]
            if y_true is not None:
                row.append(repr(float(y_true[i])))
            w.writerow(row)


def _clean_data_agreement(results):
    """Max absolute difference of model-averaged predictions between modes."""
    if set(results) != {"robust", "normal"}:
        return None
    a, b = results["robust"].prediction, results["normal"].prediction
    if a is None or b is None:
        return None
    return float(np.max(np.abs(a.predictions - b.predictions)))


# -- commands --------------------------------------------------------------------


def run(config: RunConfig) -> dict:
    """Run the analysis for ``config`` and write all outputs; returns the report."""
    if config.train is None:
        raise InputError("--train is required")
    with _stage("ingest"):
        data = ingest(config.train, config.predict)
    pipe = config.pipeline()
    modes = ("robust", "normal") if config.mode == "both" else (config.mode,)
    results = {}
    for mode in modes:
        log.info("running %s pipeline", mode)
        results[mode] = run_analysis(
            data["C"], data["y"], data["C_new"], data["y_true"], mode=mode, config=pipe, seed=config.seed
        )
    report = {
        "version": __version__,
        "config": config.to_dict(),
        "data": {
            "n": int(data["C"].shape[0]),
            "covariates": data["names"],
            "n_predict": None if data["C_new"] is None else int(data["C_new"].shape[0]),
            "has_truth": data["y_true"] is not None,
        },
        "runs": {m: (_mode_report(results[m], data["names"], config.outlier_threshold) if m in results else None)
                 for m in ("robust", "normal")},
        "max_prediction_difference": _clean_data_agreement(results),
    }
    try:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "report.json", "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        _write_predictions(out / "predictions.csv", results, data["y_true"])
        for mode, res in results.items():
            for name, tr in res.traces.items():
                tr.write(out / f"trace-{mode}-{name}.csv")
        _write_plots(out, results, data["C"], data["y"], data["names"])
    except OSError as exc:
        err = InputError(f"cannot write outputs: {exc}")
        err.stage = "output"
        raise err from None
    return report


def toy_demo(seed: int = 0, out_dir="robpcr-toy", outlier: bool = True, rho: float = 0.95) -> dict:
    """Two-covariate reconstruction comparison with an optional (10, 20) outlier."""
    from .lptn import lptn_params

    p = lptn_params(rho)
    C = toy_covariates(seed, outlier=(10.0, 20.0) if outlier else None)
    robust, rc = run_pca(C, robust=True, p=p)
    normal, _ = run_pca(C, robust=False)
    Mr = reconstruct(robust, q=1, original_scale=True)
    Mn = reconstruct(normal, q=1, original_scale=True)
    inliers = np.arange(20) if outlier else np.arange(21)
    flagged = sorted({int(i) for rep in pairwise_residuals(rc, robust.C).values() for i in rep.flagged})
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [(a, b, "observed") for a, b in C]
    rows += [(a, b, "robust") for a, b in Mr]
    rows += [(a, b, "traditional") for a, b in Mn]
    _write_tidy(out / "toy_reconstruction.csv", rows)
    summary = {
        "seed": seed,
        "outlier": outlier,
        "inlier_error_robust": inlier_reconstruction_error(C, Mr, inliers),
        "inlier_error_traditional": inlier_reconstruction_error(C, Mn, inliers),
        "flagged_rows": flagged,
        "max_column_difference": [float(v) for v in np.max(np.abs(Mr - Mn), axis=0)],
    }
    with open(out / "toy_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


# -- argument parsing --------------------------------------------------------------


def _parser():
    ap = argparse.ArgumentParser(prog="robpcr", description="Robust Bayesian principal component regression.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="analyse a training CSV and optionally predict")
    r.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
    r.add_argument("--train", help="training CSV: header, response first, then covariates")
    r.add_argument("--predict", help="prediction CSV with the same covariates and optional y_true")
    r.add_argument("--mode", choices=MODES)
    r.add_argument("--seed", type=int)
    r.add_argument("--out-dir", dest="out_dir")
    r.add_argument("--rho", type=float)
    r.add_argument("--bf-threshold", dest="bf_threshold", type=float)
    r.add_argument("--vartheta", type=float)
    r.add_argument("--iters", type=int, help="main chain length")
    r.add_argument("--burnin", type=int, help="main chain burn-in")

    t = sub.add_parser("toy-demo", help="robust vs traditional rank-1 reconstruction on toy data")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out-dir", dest="out_dir", default="robpcr-toy")
    t.add_argument("--no-outlier", dest="outlier", action="store_false")
    return ap


def _load_config(args) -> RunConfig:
    base = {}
    if args.config:
        try:
            with open(args.config) as fh:
                base = json.load(fh)
        except OSError as exc:
            raise InputError(f"{args.config}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise InputError(f"{args.config}: invalid JSON ({exc})") from None
        if not isinstance(base, dict):
            raise InputError(f"{args.config}: expected a JSON object")
    for key in ("train", "predict", "mode", "seed", "out_dir", "rho", "bf_threshold", "vartheta", "iters", "burnin"):
        v = getattr(args, key)
        if v is not None:
            base[key] = v
    try:
        return RunConfig.from_dict(base)
    except TypeError as exc:
        raise InputError(f"invalid config: {exc}") from None


def _exit_code(exc) -> int:
    # degenerate scales are data problems the user can fix
    if isinstance(exc, (InputError, DesignError, DomainError, DegenerateScaleError)):
        return EXIT_INPUT
    return EXIT_NUMERIC


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s"
    )
    stage = "config"
    try:
        if args.command == "toy-demo":
            stage = "toy-demo"
            summary = toy_demo(args.seed, args.out_dir, args.outlier)
            print(json.dumps(summary, sort_keys=True))
            return EXIT_OK
        config = _load_config(args)
        stage = "run"
        run(config)
    except RobpcrError as exc:
        print(f"robpcr: [{getattr(exc, 'stage', stage)}] {exc}", file=sys.stderr)
        return _exit_code(exc)
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"robpcr: [{getattr(exc, 'stage', stage)}] numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
