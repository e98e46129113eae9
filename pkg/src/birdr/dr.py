"""SIR, SAVE, and their Bayesian counterparts BIR/BAVE, plus subspace metrics.

All candidate matrices are formed in whitened coordinates (the bench
layer whitens and back-transforms); estimated directions are the leading
eigenvectors of the method-specific candidate matrix.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import (
    BirdrError,
    DegenerateGapWarning,
    EigenFailure,
    ShapeMismatch,
    SingularBasis,
    SingularTrueBasis,
    SliceReducedWarning,
    SliceTooSmall,
    TooManySlices,
)
from .inference import (
    Prior,
    SampleSet,
    conditional_cov,
    conditional_mean,
    is_sample_posterior,
    mcmc_sample_posterior,
)

METHOD_SIR = "SIR"
METHOD_SAVE = "SAVE"
METHOD_BIR = "BIR"
METHOD_BAVE = "BAVE"

SAMPLER_MCMC = "mcmc"
SAMPLER_IS = "is"


def default_n_slices(method: str, n: int) -> int:
    """Default slice counts: 10 for SIR-style, 5 for SAVE (needs >= 2 per slice)."""
    if method == METHOD_SAVE:
        return max(2, min(5, n // 4))
    return max(2, min(10, n // 2))


@dataclass(frozen=True)
class SliceStats:
    """Slice assignments and per-slice moments of the predictors."""

    H: int
    assignments: np.ndarray
    proportions: np.ndarray
    slice_means: np.ndarray | None = None
    slice_covs: np.ndarray | None = None

    def __post_init__(self):
        for name in ("assignments", "proportions", "slice_means", "slice_covs"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v)
                v.setflags(write=False)
                object.__setattr__(self, name, v)


@dataclass(frozen=True)
class DrResult:
    """Estimated DR directions and the decomposed candidate matrix."""

    directions: np.ndarray
    eigenvalues: np.ndarray
    method: str
    candidate_matrix: np.ndarray
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("directions", "eigenvalues", "candidate_matrix"):
            v = np.asarray(getattr(self, name), dtype=float)
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def K(self) -> int:
        return self.directions.shape[1]

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "directions": [col.tolist() for col in self.directions.T],
            "eigenvalues": self.eigenvalues.tolist(),
            "diagnostics": self.diagnostics,
        }


def slice_partition(y, H: int) -> SliceStats:
    """Equal-count partition of y into H contiguous sorted groups.

    Group sizes are ceil(n/H) for the first n mod H groups and floor(n/H)
    for the rest; ties in y keep their original (stable) order.
    """
    y = np.asarray(y, dtype=float).ravel()
    n = y.shape[0]
    if not 2 <= H <= n:
        raise TooManySlices(f"need 2 <= H <= n, got H={H}, n={n}")
    order = np.argsort(y, kind="stable")
    base, rem = divmod(n, H)
    sizes = np.full(H, base)
    sizes[:rem] += 1
    assignments = np.empty(n, dtype=int)
    start = 0
    for h, size in enumerate(sizes):
        assignments[order[start : start + size]] = h
        start += size
    return SliceStats(H=H, assignments=assignments, proportions=sizes / n)


def _slice_means(Z, stats: SliceStats) -> np.ndarray:
    means = np.empty((stats.H, Z.shape[1]))
    for h in range(stats.H):
        means[h] = Z[stats.assignments == h].mean(axis=0)
    return means


def sir(Z, y, H: int, K: int) -> DrResult:
    """Sliced inverse regression on whitened predictors.

    Candidate matrix: the proportion-weighted covariance of slice means.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    n, p = Z.shape
    if not 1 <= K < p:
        raise ShapeMismatch(f"need 1 <= K < p, got K={K}, p={p}")
    stats = slice_partition(y, H)
    means = _slice_means(Z, stats)
    C = (means.T * stats.proportions) @ means
    vectors, values = top_k_eigvectors(C, K)
    return DrResult(
        directions=vectors, eigenvalues=values, method=METHOD_SIR, candidate_matrix=C
    )


def save(Z, y, H: int, K: int, allow_h_reduction: bool = True) -> DrResult:
    """Sliced average variance estimation on whitened predictors.

    Candidate matrix: sum of p_h (I - M_h)^2 with M_h the within-slice
    sample covariance (centered, divisor n_h - 1).  H is reduced, with a
    warning, until every slice holds at least two points.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    n, p = Z.shape
    if not 1 <= K < p:
        raise ShapeMismatch(f"need 1 <= K < p, got K={K}, p={p}")
    H_eff = min(H, n)
    while H_eff >= 2 and n // H_eff < 2:
        H_eff -= 1
    if H_eff < 2:
        raise SliceTooSmall(f"cannot form 2 slices of >= 2 points from n={n}")
    if H_eff != H:
        if not allow_h_reduction:
            raise SliceTooSmall(
                f"H={H} leaves slices with fewer than 2 points for n={n}"
            )
        warnings.warn(
            f"reduced slice count from {H} to {H_eff} to keep >= 2 points per slice",
            SliceReducedWarning,
        )
    stats = slice_partition(y, H_eff)
    I = np.eye(p)
    C = np.zeros((p, p))
    covs = np.empty((H_eff, p, p))
    for h in range(H_eff):
        rows = Z[stats.assignments == h]
        R = rows - rows.mean(axis=0)
        M = (R.T @ R) / (rows.shape[0] - 1)
        covs[h] = M
        D = I - M
        C += stats.proportions[h] * (D @ D)
    vectors, values = top_k_eigvectors(C, K)
    return DrResult(
        directions=vectors,
        eigenvalues=values,
        method=METHOD_SAVE,
        candidate_matrix=C,
        diagnostics={"H": H_eff},
    )


def _posterior_sample_sets(dataset, model, prior, n_mc, sampler, seed):
    for j, yj in enumerate(dataset.y):
        seed_j = np.random.SeedSequence(entropy=[int(seed) & (2**63 - 1), j])
        try:
            if sampler == SAMPLER_MCMC:
                yield j, mcmc_sample_posterior(model, prior, yj, n_mc=n_mc, seed=seed_j)
            elif sampler == SAMPLER_IS:
                yield j, is_sample_posterior(model, prior, yj, n_mc=n_mc, seed=seed_j)
            else:
                raise ShapeMismatch(f"unknown sampler {sampler!r}")
        except BirdrError as e:
            raise type(e)(f"conditioning value index {j} (y={yj:.6g}): {e}") from e


def bir(
    dataset: Dataset,
    gp_model,
    prior: Prior,
    n_mc: int,
    K: int,
    sampler: str = SAMPLER_MCMC,
    seed: int = 0,
) -> DrResult:
    """Bayesian inverse regression.

    For each observed response, the posterior mean of x given that
    response is estimated from weighted samples; the candidate matrix is
    the sample covariance (divisor n - 1) of those posterior means.
    """
    n, p = dataset.n, dataset.p
    if not 1 <= K < p:
        raise ShapeMismatch(f"need 1 <= K < p, got K={K}, p={p}")
    means = np.empty((n, p))
    diag = []
    for j, sset in _posterior_sample_sets(dataset, gp_model, prior, n_mc, sampler, seed):
        means[j] = conditional_mean(sset)
        diag.append(
            {"j": j, "ess": sset.ess, "acceptance_rate": sset.acceptance_rate}
        )
    center = means.mean(axis=0)
    R = means - center
    C = (R.T @ R) / (n - 1)
    vectors, values = top_k_eigvectors(C, K)
    return DrResult(
        directions=vectors,
        eigenvalues=values,
        method=METHOD_BIR,
        candidate_matrix=C,
        diagnostics={"per_y": diag, "sampler": sampler},
    )


def bave(
    dataset: Dataset,
    gp_model,
    prior: Prior,
    n_mc: int,
    K: int,
    sampler: str = SAMPLER_MCMC,
    seed: int = 0,
) -> DrResult:
    """Bayesian average variance estimation.

    For each observed response, the posterior covariance M_j of x given
    that response is estimated from weighted samples; the candidate
    matrix is the equal-weight average of (I - M_j)^2.
    """
    n, p = dataset.n, dataset.p
    if not 1 <= K < p:
        raise ShapeMismatch(f"need 1 <= K < p, got K={K}, p={p}")
    I = np.eye(p)
    C = np.zeros((p, p))
    diag = []
    for j, sset in _posterior_sample_sets(dataset, gp_model, prior, n_mc, sampler, seed):
        D = I - conditional_cov(sset)
        C += D @ D
        diag.append(
            {"j": j, "ess": sset.ess, "acceptance_rate": sset.acceptance_rate}
        )
    C /= n
    vectors, values = top_k_eigvectors(C, K)
    return DrResult(
        directions=vectors,
        eigenvalues=values,
        method=METHOD_BAVE,
        candidate_matrix=C,
        diagnostics={"per_y": diag, "sampler": sampler},
    )


def _fix_sign(v: np.ndarray) -> np.ndarray:
    a = np.abs(v)
    top = a.max()
    ties = np.flatnonzero(a == top)
    if ties.size > 1:
        nz = np.flatnonzero(v)
        pivot = nz[0] if nz.size else 0
    else:
        pivot = ties[0]
    return -v if v[pivot] < 0 else v


def top_k_eigvectors(C, K: int):
    """Descending eigendecomposition of a (symmetrized) matrix.

    Returns (first K eigenvectors as columns, full eigenvalue vector).
    Each returned eigenvector has its largest-magnitude component
    positive; exact magnitude ties fall back to making the first nonzero
    component positive.
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    p = C.shape[0]
    if C.shape != (p, p):
        raise ShapeMismatch("candidate matrix must be square")
    if not 1 <= K <= p:
        raise ShapeMismatch(f"need 1 <= K <= p, got K={K}")
    Cs = 0.5 * (C + C.T)
    try:
        values, vectors = np.linalg.eigh(Cs)
    except np.linalg.LinAlgError as e:
        raise EigenFailure(str(e)) from e
    values = values[::-1]
    vectors = vectors[:, ::-1]
    out = np.column_stack([_fix_sign(vectors[:, k]) for k in range(K)])
    if K < p:
        scale = max(abs(values[0]), 1.0e-300)
        if abs(values[K - 1] - values[K]) <= 1e-10 * scale:
            warnings.warn(
                f"eigenvalue gap between positions {K} and {K + 1} is degenerate",
                DegenerateGapWarning,
            )
    return out, values


def r2_direction(b_hat, B_true, cov_x) -> float:
    """Squared multiple correlation of b.x with the true projected variables."""
    b = np.asarray(b_hat, dtype=float).ravel()
    B = np.atleast_2d(np.asarray(B_true, dtype=float))
    if B.ndim == 2 and B.shape[0] == b.shape[0] and B.shape[1] > B.shape[0]:
        raise SingularTrueBasis("true basis cannot have more columns than rows")
    S = np.atleast_2d(np.asarray(cov_x, dtype=float))
    if np.linalg.norm(b) == 0:
        raise ShapeMismatch("estimated direction is zero")
    G = B.T @ S @ B
    try:
        sol = np.linalg.solve(G, B.T @ S @ b)
    except np.linalg.LinAlgError as e:
        raise SingularTrueBasis(str(e)) from e
    num = float(b @ S @ B @ sol)
    den = float(b @ S @ b)
    return float(np.clip(num / den, 0.0, 1.0))


def _orthonormalize(B, S_half, err):
    Bt = S_half @ np.atleast_2d(np.asarray(B, dtype=float))
    Q, R = np.linalg.qr(Bt)
    if np.any(np.abs(np.diag(R)) < 1e-12 * max(np.abs(np.diag(R)).max(), 1e-300)):
        raise err("basis is rank deficient under the given covariance")
    return Q


def r2_subspace(B_hat, B_true, cov_x) -> float:
    """Mean squared canonical correlation between the two projected sets.

    Computed as trace(P_true P_hat) / K with the projectors taken in
    covariance-whitened coordinates.
    """
    S = np.atleast_2d(np.asarray(cov_x, dtype=float))
    evals, evecs = np.linalg.eigh(0.5 * (S + S.T))
    if np.any(evals <= 0):
        raise SingularBasis("covariance must be positive definite")
    S_half = (evecs * np.sqrt(evals)) @ evecs.T
    Qh = _orthonormalize(B_hat, S_half, SingularBasis)
    Qt = _orthonormalize(B_true, S_half, SingularTrueBasis)
    K = Qt.shape[1]
    M = Qt.T @ Qh
    return float(np.clip(np.sum(M * M) / K, 0.0, 1.0))
