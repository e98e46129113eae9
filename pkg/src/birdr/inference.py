"""Priors over x, posterior samplers for pi(x|y), and conditional moments.

The posterior being targeted is pi(x|y) proportional to the GP predictive
likelihood of y at x times a prior over x.  Samplers return weighted
sample sets; MCMC output carries equal weights 1/m.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import (
    AllWeightsZero,
    DegenerateData,
    LowEssWarning,
    NonFiniteTarget,
    ShapeMismatch,
    TooFewRows,
    TooFewSamples,
    UnsupportedOperation,
)

_LOG2PI = float(np.log(2.0 * np.pi))

#: IS weight-degeneracy alert threshold, as a fraction of n_mc.
LOW_ESS_FRACTION = 0.01


class Prior:
    """Common interface: dimension, log-density, seeded sampling."""

    p: int

    def logpdf(self, x) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    @property
    def mean(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def covariance(self) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class StandardNormalPrior(Prior):
    """Analytic standard normal prior in p dimensions."""

    p: int

    def logpdf(self, x) -> float:
        x = np.asarray(x, dtype=float).ravel()
        if x.shape[0] != self.p:
            raise ShapeMismatch(f"expected dimension {self.p}, got {x.shape[0]}")
        return float(-0.5 * self.p * _LOG2PI - 0.5 * np.dot(x, x))

    def sample(self, rng, size):
        return rng.standard_normal((size, self.p))

    @property
    def mean(self):
        return np.zeros(self.p)

    @property
    def covariance(self):
        return np.eye(self.p)


class GaussianPrior(Prior):
    """Gaussian prior with given moments (covariance eigenvalue-clamped)."""

    def __init__(self, mean, cov, eigen_floor: float | None = None):
        mean = np.asarray(mean, dtype=float).ravel()
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        if cov.shape != (mean.shape[0], mean.shape[0]):
            raise ShapeMismatch("covariance shape does not match mean")
        cov = 0.5 * (cov + cov.T)
        evals, evecs = np.linalg.eigh(cov)
        if eigen_floor is None:
            eigen_floor = 1e-10 * max(float(evals[-1]), np.finfo(float).tiny)
        clamped = np.maximum(evals, eigen_floor)
        self.p = mean.shape[0]
        self._mean = mean
        self._cov = (evecs * clamped) @ evecs.T
        self._chol = (evecs * np.sqrt(clamped)) @ evecs.T  # symmetric square root
        self._prec = (evecs / clamped) @ evecs.T
        self._logdet = float(np.sum(np.log(clamped)))

    def logpdf(self, x) -> float:
        x = np.asarray(x, dtype=float).ravel()
        if x.shape[0] != self.p:
            raise ShapeMismatch(f"expected dimension {self.p}, got {x.shape[0]}")
        d = x - self._mean
        return float(
            -0.5 * self.p * _LOG2PI - 0.5 * self._logdet - 0.5 * d @ self._prec @ d
        )

    def sample(self, rng, size):
        return self._mean + rng.standard_normal((size, self.p)) @ self._chol

    @property
    def mean(self):
        return self._mean.copy()

    @property
    def covariance(self):
        return self._cov.copy()


@dataclass(frozen=True)
class EmpiricalPrior(Prior):
    """Prior represented only by data points; sampling with replacement."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def p(self):
        return self.points.shape[1]

    def logpdf(self, x):
        raise UnsupportedOperation("empirical prior has no density; use IS sampling")

    def sample(self, rng, size):
        idx = rng.integers(0, self.points.shape[0], size=size)
        return self.points[idx]

    @property
    def mean(self):
        return self.points.mean(axis=0)

    @property
    def covariance(self):
        return np.cov(self.points, rowvar=False, ddof=1).reshape(self.p, self.p)


def fit_gaussian_prior(X, eigen_floor: float | None = None) -> GaussianPrior:
    """Crude density estimate for the data: a single Gaussian fit."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    if n < 2:
        raise TooFewRows("need at least 2 rows to fit a Gaussian prior")
    if np.all(X == X[0]):
        raise DegenerateData("all rows identical")
    mean = X.mean(axis=0)
    R = X - mean
    cov = (R.T @ R) / (n - 1)
    return GaussianPrior(mean, cov, eigen_floor=eigen_floor)


@dataclass(frozen=True)
class SampleSet:
    """Weighted posterior samples of x conditioned on one response value."""

    samples: np.ndarray
    weights: np.ndarray
    target_y: float
    acceptance_rate: float | None = None

    def __post_init__(self):
        samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        weights = np.asarray(self.weights, dtype=float).ravel()
        if samples.shape[0] != weights.shape[0]:
            raise ShapeMismatch("samples and weights disagree in length")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ShapeMismatch("weights must be finite and nonnegative")
        total = weights.sum()
        if total <= 0:
            raise AllWeightsZero("weight vector sums to zero")
        weights = weights / total
        assert abs(weights.sum() - 1.0) < 1e-12
        samples.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "weights", weights)

    @property
    def m(self) -> int:
        return self.samples.shape[0]

    @property
    def p(self) -> int:
        return self.samples.shape[1]

    @property
    def ess(self) -> float:
        return float(1.0 / np.sum(self.weights**2))

    def to_csv(self, path):
        """Dump samples and weights for external diagnostics."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{i+1}" for i in range(self.p)] + ["weight"])
            for row, w in zip(self.samples, self.weights):
                writer.writerow([repr(float(v)) for v in row] + [repr(float(w))])


def mcmc_sample_posterior(
    model,
    prior: Prior,
    y: float,
    n_mc: int = 10000,
    seed: int = 0,
    burn_in_frac: float = 0.2,
    target_accept: float = 0.234,
    init=None,
) -> SampleSet:
    """Adaptive random-walk Metropolis targeting log lik(y|x) + log prior(x).

    The proposal covariance starts at (2.38^2/p) times the prior
    covariance; its global scale is adapted toward `target_accept`
    during burn-in and frozen afterward.  Output weights are uniform.
    """
    if n_mc < 100:
        raise ShapeMismatch("n_mc must be >= 100")
    if isinstance(prior, EmpiricalPrior):
        raise UnsupportedOperation(
            "empirical prior has no density; use is_sample_posterior"
        )
    rng = np.random.default_rng(seed)
    p = prior.p

    prop_chol = np.linalg.cholesky(
        (2.38**2 / p) * prior.covariance + 1e-12 * np.eye(p)
    )

    def log_target(x):
        return model.log_likelihood_y(x, y) + prior.logpdf(x)

    x = np.asarray(prior.mean if init is None else init, dtype=float).ravel()
    lt = log_target(x)
    if not np.isfinite(lt):
        raise NonFiniteTarget(f"log target non-finite at initialization point {x}")

    n_burn = int(np.ceil(burn_in_frac * n_mc))
    log_scale = 0.0
    kept = np.empty((n_mc, p))
    accepted_kept = 0
    for t in range(n_burn + n_mc):
        step = np.exp(log_scale) * (prop_chol @ rng.standard_normal(p))
        cand = x + step
        lt_cand = model.log_likelihood_y(cand, y) + prior.logpdf(cand)
        log_ratio = lt_cand - lt
        accept_prob = 1.0 if log_ratio >= 0 else float(np.exp(log_ratio))
        if rng.random() < accept_prob:
            x, lt = cand, lt_cand
            if t >= n_burn:
                accepted_kept += 1
        if t < n_burn:
            gamma = (t + 1) ** -0.6
            log_scale += gamma * (accept_prob - target_accept)
        if t >= n_burn:
            kept[t - n_burn] = x

    return SampleSet(
        samples=kept,
        weights=np.full(n_mc, 1.0 / n_mc),
        target_y=float(y),
        acceptance_rate=accepted_kept / n_mc,
    )


def is_sample_posterior(
    model, prior: Prior, y: float, n_mc: int = 10000, seed: int = 0
) -> SampleSet:
    """Importance sampling: prior draws weighted by the likelihood of y."""
    if n_mc < 100:
        raise ShapeMismatch("n_mc must be >= 100")
    rng = np.random.default_rng(seed)
    samples = prior.sample(rng, n_mc)
    logw = np.asarray(model.log_likelihood_y_batch(samples, y), dtype=float)
    max_logw = float(np.max(logw))
    if not np.isfinite(max_logw):
        raise AllWeightsZero(
            f"all likelihood weights vanished (max log-likelihood {max_logw})"
        )
    weights = np.exp(logw - logsumexp(logw))
    if not np.any(weights > 0):
        raise AllWeightsZero(
            f"all likelihood weights vanished (max log-likelihood {max_logw})"
        )
    out = SampleSet(samples=samples, weights=weights, target_y=float(y))
    if out.ess < LOW_ESS_FRACTION * n_mc:
        warnings.warn(
            f"importance weights are degenerate: ESS {out.ess:.1f} of {n_mc}",
            LowEssWarning,
        )
    return out


def conditional_mean(s: SampleSet) -> np.ndarray:
    """Weighted posterior mean, an estimate of E(x|y)."""
    return s.weights @ s.samples


def conditional_cov(s: SampleSet) -> np.ndarray:
    """Weighted posterior covariance, an estimate of Cov(x|y).

    Uses the unbiased weighted form sum w (x - m)(x - m)^T / (1 - sum w^2),
    which reduces to the divisor m-1 when weights are uniform.
    """
    if s.m < 2:
        raise TooFewSamples("covariance needs at least 2 samples")
    denom = 1.0 - float(np.sum(s.weights**2))
    if denom <= 0.0:
        raise TooFewSamples("weight mass concentrated on a single sample")
    center = conditional_mean(s)
    R = s.samples - center
    return (R.T * s.weights) @ R / denom
