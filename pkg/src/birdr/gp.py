"""Gaussian-process regression with an ARD squared-exponential kernel.

Supplies the likelihood pi(y|x) used by the Bayesian estimators: marginal
likelihood hyperparameter fitting, cached Cholesky factorization, and
posterior predictive mean/variance.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.linalg import cho_solve, cholesky, solve_triangular

from .errors import (
    FactorizationFailure,
    ModelParseError,
    NoiseOnlyWarning,
    NonFiniteObjective,
    ShapeMismatch,
    ZeroVariance,
)

_LOG2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class GpHyperparams:
    """Signal sd, per-coordinate lengthscales, and observation-noise sd."""

    signal_sd: float
    lengthscales: np.ndarray
    noise_sd: float

    def __post_init__(self):
        ls = np.asarray(self.lengthscales, dtype=float).ravel()
        ls.setflags(write=False)
        object.__setattr__(self, "lengthscales", ls)
        vals = np.concatenate(([self.signal_sd, self.noise_sd], ls))
        if not (np.all(np.isfinite(vals)) and np.all(vals > 0)):
            raise ShapeMismatch("hyperparameters must be strictly positive and finite")

    @property
    def p(self) -> int:
        return self.lengthscales.shape[0]

    def to_log_vector(self) -> np.ndarray:
        return np.log(
            np.concatenate(([self.signal_sd], self.lengthscales, [self.noise_sd]))
        )

    @classmethod
    def from_log_vector(cls, theta) -> "GpHyperparams":
        v = np.exp(np.asarray(theta, dtype=float).ravel())
        return cls(signal_sd=v[0], lengthscales=v[1:-1], noise_sd=v[-1])


def _scaled_sqdist(hp: GpHyperparams, A, B) -> np.ndarray:
    # sum_i (a_i - b_i)^2 / lambda_i^2, shape (len(A), len(B))
    As = A / hp.lengthscales
    Bs = B / hp.lengthscales
    d2 = (
        np.sum(As**2, axis=1)[:, None]
        + np.sum(Bs**2, axis=1)[None, :]
        - 2.0 * As @ Bs.T
    )
    return np.maximum(d2, 0.0)


def kernel_matrix(hp: GpHyperparams, A, B=None) -> np.ndarray:
    """ARD squared-exponential kernel evaluated on all pairs of rows."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = A if B is None else np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != hp.p or B.shape[1] != hp.p:
        raise ShapeMismatch(
            f"kernel expects {hp.p}-dimensional inputs, got {A.shape[1]} and {B.shape[1]}"
        )
    return hp.signal_sd**2 * np.exp(-0.5 * _scaled_sqdist(hp, A, B))


def kernel_eval(hp: GpHyperparams, x, x2) -> float:
    """Kernel value for a single pair of points."""
    x = np.asarray(x, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    if x.shape != x2.shape or x.shape[0] != hp.p:
        raise ShapeMismatch("kernel_eval arguments must match the lengthscale vector")
    z = (x - x2) / hp.lengthscales
    return float(hp.signal_sd**2 * np.exp(-0.5 * np.dot(z, z)))


def _chol_with_jitter(Kn: np.ndarray, base: float):
    """Cholesky with an escalating diagonal jitter ladder.

    Starts at 1e-10 * base, escalates tenfold up to 1e-4 * base, then
    raises FactorizationFailure reporting the conditioning.
    """
    n = Kn.shape[0]
    try:
        return cholesky(Kn, lower=True), 0.0
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-10 * base
    while jitter <= 1e-4 * base * (1 + 1e-12):
        try:
            return cholesky(Kn + jitter * np.eye(n), lower=True), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    cond = np.linalg.cond(Kn)
    raise FactorizationFailure(
        f"covariance not positive definite after jitter ladder (cond ~ {cond:.3e})"
    )


def log_marginal_likelihood(hp: GpHyperparams, X, Y):
    """Zero-mean GP log marginal likelihood and its log-space gradient.

    Returns (value, grad) where grad is with respect to
    (log signal_sd, log lengthscale_1..p, log noise_sd).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float).ravel()
    n = X.shape[0]
    Kse = kernel_matrix(hp, X)
    Kn = Kse + hp.noise_sd**2 * np.eye(n)
    L, _ = _chol_with_jitter(Kn, hp.signal_sd**2)
    alpha = cho_solve((L, True), Y)
    value = (
        -0.5 * float(Y @ alpha)
        - float(np.sum(np.log(np.diag(L))))
        - 0.5 * n * _LOG2PI
    )

    Kinv = cho_solve((L, True), np.eye(n))
    A = np.outer(alpha, alpha) - Kinv
    grad = np.empty(hp.p + 2)
    grad[0] = 0.5 * np.sum(A * (2.0 * Kse))
    diffs = X[:, None, :] - X[None, :, :]
    for i in range(hp.p):
        dK = Kse * (diffs[:, :, i] ** 2 / hp.lengthscales[i] ** 2)
        grad[1 + i] = 0.5 * np.sum(A * dK)
    grad[-1] = 0.5 * np.trace(A) * 2.0 * hp.noise_sd**2
    return value, grad


@dataclass(frozen=True, eq=False)
class GpModel:
    """Fitted GP with cached factorization for predictive queries."""

    hyperparams: GpHyperparams
    train_X: np.ndarray
    train_Y: np.ndarray
    prior_mean_constant: float
    chol_factor: np.ndarray = field(repr=False, default=None)
    alpha: np.ndarray = field(repr=False, default=None)
    fit_info: dict | None = field(repr=False, default=None, compare=False)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.train_X, dtype=float))
        Y = np.asarray(self.train_Y, dtype=float).ravel()
        object.__setattr__(self, "train_X", X)
        object.__setattr__(self, "train_Y", Y)
        if self.chol_factor is None:
            n = X.shape[0]
            Kn = kernel_matrix(self.hyperparams, X) + self.hyperparams.noise_sd**2 * np.eye(n)
            L, _ = _chol_with_jitter(Kn, self.hyperparams.signal_sd**2)
            object.__setattr__(self, "chol_factor", L)
            object.__setattr__(
                self,
                "alpha",
                cho_solve((L, True), Y - self.prior_mean_constant),
            )
        for name in ("train_X", "train_Y", "chol_factor", "alpha"):
            getattr(self, name).setflags(write=False)

    @property
    def p(self) -> int:
        return self.train_X.shape[1]

    def predict(self, x):
        """Posterior predictive (mean, variance) at a single point."""
        mean, var = self.predict_batch(np.atleast_2d(np.asarray(x, dtype=float)))
        return float(mean[0]), float(var[0])

    def predict_batch(self, Xs):
        """Posterior predictive means and variances for rows of Xs."""
        Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
        Ks = kernel_matrix(self.hyperparams, Xs, self.train_X)
        mean = self.prior_mean_constant + Ks @ self.alpha
        V = solve_triangular(self.chol_factor, Ks.T, lower=True)
        var = self.hyperparams.signal_sd**2 - np.sum(V**2, axis=0)
        return mean, np.maximum(var, 0.0)

    def log_likelihood_y(self, x, y: float, include_noise: bool = True) -> float:
        """log N(y; posterior mean(x), posterior var(x) [+ noise var])."""
        return float(
            self.log_likelihood_y_batch(
                np.atleast_2d(np.asarray(x, dtype=float)), y, include_noise
            )[0]
        )

    def log_likelihood_y_batch(self, Xs, y: float, include_noise: bool = True):
        mean, var = self.predict_batch(Xs)
        if include_noise:
            var = var + self.hyperparams.noise_sd**2
        if np.any(var <= np.finfo(float).tiny):
            raise ZeroVariance(
                "predictive variance underflowed; the model is over-confident here"
            )
        return -0.5 * (_LOG2PI + np.log(var)) - 0.5 * (y - mean) ** 2 / var

    def to_json(self) -> str:
        doc = {
            "format": "birdr.gp_model.v1",
            "hyperparams": {
                "signal_sd": self.hyperparams.signal_sd,
                "lengthscales": self.hyperparams.lengthscales.tolist(),
                "noise_sd": self.hyperparams.noise_sd,
            },
            "prior_mean_constant": self.prior_mean_constant,
            "train_X": self.train_X.tolist(),
            "train_Y": self.train_Y.tolist(),
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GpModel":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ModelParseError(f"invalid model JSON at byte {e.pos}: {e.msg}") from e
        try:
            hp = GpHyperparams(
                signal_sd=doc["hyperparams"]["signal_sd"],
                lengthscales=np.array(doc["hyperparams"]["lengthscales"]),
                noise_sd=doc["hyperparams"]["noise_sd"],
            )
            return cls(
                hyperparams=hp,
                train_X=np.array(doc["train_X"]),
                train_Y=np.array(doc["train_Y"]),
                prior_mean_constant=float(doc["prior_mean_constant"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ModelParseError(f"model document missing/invalid field: {e}") from e


def initial_log_hyperparams(X, Y) -> np.ndarray:
    """Documented single-start initialization for the MLE search.

    Lengthscales start at the per-coordinate data standard deviation,
    signal sd at sd(Y), noise sd at 0.1 sd(Y).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float).ravel()
    sx = X.std(axis=0, ddof=1)
    sx = np.where(sx > 0, sx, 1.0)
    sy = Y.std(ddof=1)
    if not sy > 0:
        sy = 1.0
    return np.log(np.concatenate(([sy], sx, [0.1 * sy])))


def fit_gp(
    X,
    Y,
    n_restarts: int = 10,
    max_iters: int = 200,
    seed: int = 0,
) -> GpModel:
    """Fit hyperparameters by multi-start maximum marginal likelihood.

    Optimizes in log-hyperparameter space with L-BFGS-B using the
    analytic gradient.  Responses are centered before fitting; the GP
    prior mean is zero on the centered scale and predictions are
    un-centered via `prior_mean_constant`.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float).ravel()
    n, p = X.shape
    if n < 2:
        raise ShapeMismatch("fit_gp needs at least 2 observations")
    y_mean = float(Y.mean())
    Yc = Y - y_mean

    if Yc.std(ddof=1) == 0.0:
        warnings.warn(
            "response is constant; returning a noise-only degenerate fit",
            NoiseOnlyWarning,
        )
        hp = GpHyperparams(signal_sd=1e-6, lengthscales=np.ones(p), noise_sd=1e-3)
        return GpModel(
            hyperparams=hp, train_X=X, train_Y=Y, prior_mean_constant=y_mean
        )

    def objective(theta):
        try:
            hp = GpHyperparams.from_log_vector(theta)
            value, grad = log_marginal_likelihood(hp, X, Yc)
        except FactorizationFailure:
            return 1e25, np.zeros_like(theta)
        if not np.isfinite(value):
            return 1e25, np.zeros_like(theta)
        return -value, -grad

    theta0 = initial_log_hyperparams(X, Yc)
    rng = np.random.default_rng(seed)
    starts = [theta0]
    for _ in range(n_restarts):
        starts.append(theta0 + rng.standard_normal(theta0.shape))

    bounds = [(t - 20.0, t + 20.0) for t in theta0]
    best = None
    start_values = []
    for k, start in enumerate(starts):
        v0 = objective(start)[0]
        if not np.isfinite(v0):
            raise NonFiniteObjective(f"objective non-finite at start {k}: {start}")
        start_values.append(-v0)
        res = optimize.minimize(
            objective,
            start,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": max_iters},
        )
        if best is None or res.fun < best.fun:
            best = res
    if best is None or not np.isfinite(best.fun) or best.fun >= 1e24:
        raise NonFiniteObjective("no start produced a finite optimum")

    hp = GpHyperparams.from_log_vector(best.x)
    return GpModel(
        hyperparams=hp,
        train_X=X,
        train_Y=Y,
        prior_mean_constant=y_mean,
        fit_info={
            "objective": -float(best.fun),
            "start_objectives": start_values,
            "n_restarts": n_restarts,
        },
    )
