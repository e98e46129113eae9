"""Experiment orchestration: seeded R^2 sweeps and train/test MRRE studies.

Every trial derives its random streams from (base_seed, setting index,
trial index) only, so reports are invariant to execution order and to
the size of the worker pool.
"""

from __future__ import annotations

import csv
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import (
    Dataset,
    FunctionId,
    SyntheticSpec,
    fit_whitener,
    gen_synthetic,
    load_csv,
    unwhiten_direction,
    whiten,
)
from .dr import (
    METHOD_BAVE,
    METHOD_BIR,
    METHOD_SAVE,
    METHOD_SIR,
    SAMPLER_MCMC,
    bave,
    bir,
    default_n_slices,
    sir,
    save as save_estimator,
)
from .errors import (
    BirdrError,
    InsufficientData,
    NonPositiveResponse,
    RankDeficient,
    RidgeFallbackWarning,
    ShapeMismatch,
    ZeroResponse,
)
from .gp import fit_gp
from .inference import StandardNormalPrior, fit_gaussian_prior

METHOD_NONE = "NONE"

KIND_R2 = "r2_synthetic"
KIND_MRRE = "mrre_dataset"

PRIOR_GAUSSIAN_FIT = "gaussian_fit"
PRIOR_ANALYTIC = "analytic"


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one study."""

    kind: str
    methods: tuple
    K: int = 1
    trials: int = 20
    base_seed: int = 0
    sampler: str = SAMPLER_MCMC
    n_mc: int = 10000
    H: int | None = None
    prior: str = PRIOR_GAUSSIAN_FIT
    gp_restarts: int = 10
    gp_max_iters: int = 200
    # synthetic studies
    function_id: str | None = None
    dimension: int | None = None
    n: int | None = None
    n_per_dim: int | None = None
    banana_b: float = 0.0
    noise_sd: float | None = None
    banana_literal: bool = False
    sweep_param: str | None = None  # one of dimension / banana_b / n
    sweep_values: tuple = ()
    # dataset studies
    dataset_path: str | None = None
    response_column: str | int | None = None
    train_sizes: tuple = ()
    test_size: int = 20

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "sweep_values", tuple(self.sweep_values))
        object.__setattr__(self, "train_sizes", tuple(self.train_sizes))
        if self.trials < 1:
            raise ShapeMismatch("trials must be >= 1")
        if self.kind not in (KIND_R2, KIND_MRRE):
            raise ShapeMismatch(f"unknown study kind {self.kind!r}")
        if self.kind == KIND_R2 and self.function_id is None:
            raise ShapeMismatch("r2 study requires a synthetic function")
        if self.kind == KIND_MRRE and self.dataset_path is None:
            raise ShapeMismatch("mrre study requires a dataset path")
        if METHOD_NONE in self.methods and self.kind != KIND_MRRE:
            raise ShapeMismatch("method NONE is only valid for MRRE studies")


@dataclass(frozen=True)
class MetricReport:
    """Aggregated per-cell statistics plus retained per-trial values."""

    cells: tuple  # dicts: method, setting, metric, mean, std, min, max, trials
    raw: tuple  # dicts: method, setting, metric, trial, value
    failures: tuple  # dicts: method, setting, trial, error

    def cell(self, method: str, setting, metric: str) -> dict:
        for c in self.cells:
            if c["method"] == method and c["setting"] == setting and c["metric"] == metric:
                return c
        raise KeyError((method, setting, metric))

    def to_json_dict(self) -> dict:
        return {
            "cells": list(self.cells),
            "failures": list(self.failures),
        }

    def to_csv(self, path, raw_path=None):
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(
                fh,
                fieldnames=["method", "setting", "metric", "mean", "std", "min", "max", "trials"],
            )
            writer.writeheader()
            for c in self.cells:
                writer.writerow(c)
        if raw_path is not None:
            with open(raw_path, "w", newline="") as fh:
                writer = csv.DictWriter(
                    fh, fieldnames=["method", "setting", "metric", "trial", "value"]
                )
                writer.writeheader()
                for r in self.raw:
                    writer.writerow(r)

    def format_table(self) -> str:
        """Human-readable methods-by-settings table of 'mean (std)'."""
        lines = []
        metrics = sorted({c["metric"] for c in self.cells})
        settings = sorted({c["setting"] for c in self.cells})
        methods = []
        for c in self.cells:
            if c["method"] not in methods:
                methods.append(c["method"])
        for metric in metrics:
            lines.append(f"== {metric} ==")
            header = ["method"] + [str(s) for s in settings]
            rows = [header]
            for m in methods:
                row = [m]
                for s in settings:
                    try:
                        c = self.cell(m, s, metric)
                        row.append(f"{c['mean']:.4f} ({c['std']:.4f})")
                    except KeyError:
                        row.append("-")
                rows.append(row)
            widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
            for r in rows:
                lines.append("  ".join(v.ljust(w) for v, w in zip(r, widths)))
            lines.append("")
        if self.failures:
            lines.append(f"{len(self.failures)} failed trial(s):")
            for f in self.failures:
                lines.append(
                    f"  {f['method']} setting={f['setting']} trial={f['trial']}: {f['error']}"
                )
        return "\n".join(lines)


def ols_fit(features, y) -> np.ndarray:
    """Least squares with intercept; returns (slopes..., intercept).

    Rank-deficient designs fall back to a tiny ridge penalty with a
    warning; RankDeficient is raised only if even that fails.
    """
    F = np.atleast_2d(np.asarray(features, dtype=float))
    if F.shape[0] == 1 and np.asarray(y).size > 1:
        F = F.T
    y = np.asarray(y, dtype=float).ravel()
    n, k = F.shape
    if n <= k + 1:
        warnings.warn(
            f"underdetermined least squares (n={n}, features={k}); using ridge fallback",
            RidgeFallbackWarning,
        )
    A = np.column_stack([F, np.ones(n)])
    coef, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
    if rank < k + 1:
        if rank > 0 and n > k + 1:
            warnings.warn(
                "rank-deficient design; using ridge fallback", RidgeFallbackWarning
            )
        try:
            coef = np.linalg.solve(A.T @ A + 1e-8 * np.eye(k + 1), A.T @ y)
        except np.linalg.LinAlgError as e:
            raise RankDeficient(str(e)) from e
    return coef


def ols_predict(coef, features) -> np.ndarray:
    coef = np.asarray(coef, dtype=float).ravel()
    F = np.atleast_2d(np.asarray(features, dtype=float))
    if F.shape[1] != coef.shape[0] - 1:
        if F.shape[0] == coef.shape[0] - 1:
            F = F.T
        else:
            raise ShapeMismatch("feature width does not match coefficient length")
    return F @ coef[:-1] + coef[-1]


def mrre(y_true, y_pred) -> float:
    """Mean relative regression error: average of |y - yhat| / y."""
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if y_true.shape != y_pred.shape:
        raise ShapeMismatch("length mismatch")
    if np.any(y_true == 0.0):
        raise ZeroResponse("MRRE is undefined for zero responses")
    return float(np.mean(np.abs(y_true - y_pred) / y_true))


def _trial_seeds(base_seed: int, setting_idx: int, trial: int):
    ss = np.random.SeedSequence(entropy=[int(base_seed), int(setting_idx), int(trial)])
    return [int(s) for s in ss.generate_state(4, dtype=np.uint32)]


def _make_spec(config: ExperimentConfig, setting) -> tuple[SyntheticSpec, int]:
    dimension = config.dimension
    n = config.n
    banana_b = config.banana_b
    if config.sweep_param == "dimension":
        dimension = int(setting)
    elif config.sweep_param == "banana_b":
        banana_b = float(setting)
    elif config.sweep_param == "n":
        n = int(setting)
    elif config.sweep_param is not None:
        raise ShapeMismatch(f"unknown sweep parameter {config.sweep_param!r}")
    if dimension is None:
        raise ShapeMismatch("synthetic dimension is not set")
    if n is None:
        if config.n_per_dim is None:
            raise ShapeMismatch("either n or n_per_dim must be set")
        n = config.n_per_dim * dimension
    spec = SyntheticSpec(
        function_id=FunctionId(config.function_id),
        dimension=dimension,
        banana_b=banana_b,
        noise_sd=config.noise_sd,
        banana_literal=config.banana_literal,
    )
    return spec, int(n)


def _fit_bayes_inputs(config, Z, y, gp_seed):
    model = fit_gp(
        Z,
        y,
        n_restarts=config.gp_restarts,
        max_iters=config.gp_max_iters,
        seed=gp_seed,
    )
    if config.prior == PRIOR_ANALYTIC:
        prior = StandardNormalPrior(Z.shape[1])
    elif config.prior == PRIOR_GAUSSIAN_FIT:
        prior = fit_gaussian_prior(Z)
    else:
        raise ShapeMismatch(f"unknown prior {config.prior!r}")
    return model, prior


def _run_method(config, method, Z, y, whitener, gp_cache, sampler_seed, gp_seed):
    """One estimator on whitened data; directions in original coordinates."""
    n, p = Z.shape
    K = config.K
    if method == METHOD_SIR:
        H = config.H or default_n_slices(METHOD_SIR, n)
        result = sir(Z, y, H=H, K=K)
    elif method == METHOD_SAVE:
        H = config.H or default_n_slices(METHOD_SAVE, n)
        result = save_estimator(Z, y, H=H, K=K)
    elif method in (METHOD_BIR, METHOD_BAVE):
        if "model" not in gp_cache:
            gp_cache["model"], gp_cache["prior"] = _fit_bayes_inputs(
                config, Z, y, gp_seed
            )
        dataset = Dataset(X=Z, y=y)
        fn = bir if method == METHOD_BIR else bave
        result = fn(
            dataset,
            gp_cache["model"],
            gp_cache["prior"],
            n_mc=config.n_mc,
            K=K,
            sampler=config.sampler,
            seed=sampler_seed,
        )
    else:
        raise ShapeMismatch(f"unknown method {method!r}")
    B = np.column_stack(
        [unwhiten_direction(whitener, result.directions[:, k]) for k in range(K)]
    )
    return result, B


def _r2_trial(config: ExperimentConfig, setting_idx: int, trial: int):
    """All methods on one generated dataset; returns (records, failures)."""
    from .dr import r2_direction, r2_subspace  # local to keep workers lean

    setting = config.sweep_values[setting_idx] if config.sweep_values else None
    spec, n = _make_spec(config, setting)
    data_seed, gp_seed, sampler_seed, _ = _trial_seeds(
        config.base_seed, setting_idx, trial
    )
    dataset, B_true = gen_synthetic(spec, n, seed=data_seed)
    whitener = fit_whitener(dataset.X)
    Z = whiten(whitener, dataset.X)
    setting_label = setting if setting is not None else n

    records, failures = [], []
    gp_cache = {}
    for method in config.methods:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                _, B = _run_method(
                    config, method, Z, dataset.y, whitener, gp_cache, sampler_seed, gp_seed
                )
            cov = np.eye(spec.dimension)
            records.append(
                {
                    "method": method,
                    "setting": setting_label,
                    "metric": "r2_subspace",
                    "trial": trial,
                    "value": r2_subspace(B, B_true, cov),
                }
            )
            for k in range(config.K):
                records.append(
                    {
                        "method": method,
                        "setting": setting_label,
                        "metric": f"r2_direction_{k + 1}",
                        "trial": trial,
                        "value": r2_direction(B[:, k], B_true, cov),
                    }
                )
        except BirdrError as e:
            failures.append(
                {
                    "method": method,
                    "setting": setting_label,
                    "trial": trial,
                    "error": f"{type(e).__name__}: {e}",
                }
            )
    return records, failures


def _mrre_trial(config: ExperimentConfig, setting_idx: int, trial: int):
    dataset = _load_mrre_dataset(config)
    n_train = int(config.train_sizes[setting_idx])
    split_seed, gp_seed, sampler_seed, _ = _trial_seeds(
        config.base_seed, setting_idx, trial
    )
    rng = np.random.default_rng(split_seed)
    perm = rng.permutation(dataset.n)
    train_idx = perm[:n_train]
    test_idx = perm[n_train : n_train + config.test_size]
    assert len(np.intersect1d(train_idx, test_idx)) == 0
    Xtr, ytr = dataset.X[train_idx], dataset.y[train_idx]
    Xte, yte = dataset.X[test_idx], dataset.y[test_idx]

    records, failures = [], []
    gp_cache = {}
    whitener = fit_whitener(Xtr)
    Z = whiten(whitener, Xtr)
    for method in config.methods:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                if method == METHOD_NONE:
                    Ftr, Fte = Xtr, Xte
                else:
                    _, B = _run_method(
                        config, method, Z, ytr, whitener, gp_cache, sampler_seed, gp_seed
                    )
                    Ftr, Fte = Xtr @ B, Xte @ B
                coef = ols_fit(Ftr, ytr)
                value = mrre(yte, ols_predict(coef, Fte))
            records.append(
                {
                    "method": method,
                    "setting": n_train,
                    "metric": "mrre",
                    "trial": trial,
                    "value": value,
                }
            )
        except BirdrError as e:
            failures.append(
                {
                    "method": method,
                    "setting": n_train,
                    "trial": trial,
                    "error": f"{type(e).__name__}: {e}",
                }
            )
    return records, failures


def _load_mrre_dataset(config: ExperimentConfig) -> Dataset:
    dataset = load_csv(
        config.dataset_path, config.response_column, drop_rows_with_missing=True
    )
    if np.any(dataset.y <= 0):
        raise NonPositiveResponse("MRRE requires strictly positive responses")
    need = max(config.train_sizes) + config.test_size
    if dataset.n < need:
        raise InsufficientData(
            f"dataset has {dataset.n} rows; need {need} for the largest split"
        )
    return dataset


def _aggregate(all_records, all_failures) -> MetricReport:
    grouped = {}
    for r in all_records:
        grouped.setdefault((r["method"], r["setting"], r["metric"]), []).append(r)
    cells = []
    for (method, setting, metric), rs in grouped.items():
        values = np.array([r["value"] for r in rs], dtype=float)
        cells.append(
            {
                "method": method,
                "setting": setting,
                "metric": metric,
                "mean": float(values.mean()),
                "std": float(values.std(ddof=1)) if values.size > 1 else 0.0,
                "min": float(values.min()),
                "max": float(values.max()),
                "trials": int(values.size),
            }
        )
    cells.sort(key=lambda c: (c["metric"], str(c["setting"]), c["method"]))
    raw = sorted(
        all_records,
        key=lambda r: (r["metric"], str(r["setting"]), r["method"], r["trial"]),
    )
    return MetricReport(cells=tuple(cells), raw=tuple(raw), failures=tuple(all_failures))


def _run_tasks(trial_fn, config, n_settings, jobs):
    tasks = [
        (setting_idx, trial)
        for setting_idx in range(n_settings)
        for trial in range(config.trials)
    ]
    all_records, all_failures = [], []
    if jobs is not None and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(
                pool.map(
                    trial_fn,
                    [config] * len(tasks),
                    [t[0] for t in tasks],
                    [t[1] for t in tasks],
                )
            )
    else:
        outcomes = [trial_fn(config, s, t) for s, t in tasks]
    for records, failures in outcomes:
        all_records.extend(records)
        all_failures.extend(failures)
    return _aggregate(all_records, all_failures)


def run_r2_study(config: ExperimentConfig, jobs: int | None = None) -> MetricReport:
    """Subspace/direction recovery accuracy over a synthetic sweep."""
    if config.kind != KIND_R2:
        raise ShapeMismatch("config kind must be r2_synthetic")
    n_settings = max(1, len(config.sweep_values))
    return _run_tasks(_r2_trial, config, n_settings, jobs)


def run_mrre_study(config: ExperimentConfig, jobs: int | None = None) -> MetricReport:
    """Train/test relative regression error across training-set sizes."""
    if config.kind != KIND_MRRE:
        raise ShapeMismatch("config kind must be mrre_dataset")
    if not config.train_sizes:
        raise ShapeMismatch("mrre study requires train_sizes")
    _load_mrre_dataset(config)  # validate once up front
    return _run_tasks(_mrre_trial, config, len(config.train_sizes), jobs)
