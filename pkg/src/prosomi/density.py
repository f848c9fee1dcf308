"""Unconditional differential entropy via Gaussian kernel density estimation.

The estimator fits a KDE on training points with kernel covariance h * Sigma
(Sigma = training covariance), selects h by held-out likelihood, and
estimates entropy as the negative mean log-density over an independent
evaluation set. Bootstrap resampling of the evaluation set gives a spread.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateDataError, ParameterError, ParseError

COV_JITTER = 1e-9
# 2^24 float64 pairwise-distance entries per block keeps peak memory ~128 MB
BLOCK_ELEMENTS = 1 << 24


@dataclass
class KdeModel:
    """Gaussian KDE with kernel covariance bandwidth_h * covariance."""

    train_points: np.ndarray  # N x d float64
    covariance: np.ndarray  # d x d, jittered
    bandwidth_h: float
    dim: int
    # cached whitening factor; excluded from equality and persistence
    _chol: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.bandwidth_h <= 0:
            raise ParameterError(f"bandwidth_h must be > 0, got {self.bandwidth_h}")
        if self.train_points.shape[1] != self.dim:
            raise ParameterError("train_points dimension does not match dim")

    @property
    def chol(self) -> np.ndarray:
        if self._chol is None:
            self._chol = _cholesky_or_raise(self.covariance)
        return self._chol


def _as_points(values: np.ndarray) -> np.ndarray:
    x = np.asarray(values, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ParameterError(f"expected 1-D or 2-D data, got shape {x.shape}")
    return x


def _cholesky_or_raise(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise DegenerateDataError("covariance singular after jitter") from exc


def _jittered_covariance(train: np.ndarray) -> np.ndarray:
    d = train.shape[1]
    if train.shape[0] < 2:
        raise DegenerateDataError("need >= 2 train points for a covariance")
    cov = np.atleast_2d(np.cov(train, rowvar=False))
    trace = float(np.trace(cov))
    if not trace > 0:
        raise DegenerateDataError("train points have zero covariance")
    return cov + (COV_JITTER * trace / d) * np.eye(d)


def default_bandwidth_grid(n: int, d: int) -> np.ndarray:
    """12 log-spaced variance scalings in [0.01, 1.0]; the interval brackets
    the squared Scott factor n^(-2/(d+4)) for the data sizes in play."""
    return np.geomspace(0.01, 1.0, 12)


def _whitened(points: np.ndarray, chol: np.ndarray) -> np.ndarray:
    # solve L y = x^T so squared distances become plain Euclidean
    from scipy.linalg import solve_triangular

    return solve_triangular(chol, points.T, lower=True).T


def _log_kernel_sums(d2: np.ndarray, h: float) -> np.ndarray:
    """log sum_j exp(-d2_ij / (2h)) per row.

    All exponents are <= 0, so the sum needs no max shift; the exp pass runs
    in float32 with float64 accumulation for speed. Rows where every term
    underflows fall back to a shifted log-sum-exp in float64.
    """
    scaled = np.multiply(d2, -0.5 / h, dtype=np.float32)
    np.exp(scaled, out=scaled)
    sums = np.sum(scaled, axis=1, dtype=np.float64)
    out = np.log(sums, out=np.full(len(sums), -np.inf), where=sums > 0)
    dead = np.nonzero(sums == 0)[0]
    if dead.size:
        out[dead] = logsumexp(d2[dead] * (-0.5 / h), axis=1)
    return out


def _mean_heldout_loglik(train_w: np.ndarray, held_w: np.ndarray,
                         log_det_cov: float, grid: np.ndarray) -> np.ndarray:
    """Mean held-out log-density for every h in the grid, sharing one
    pairwise-distance pass per block of held-out rows."""
    n, d = train_w.shape
    grid = np.asarray(grid, dtype=np.float64)
    const = (-0.5 * d * np.log(2.0 * np.pi * grid) - 0.5 * log_det_cov
             - math.log(n))
    sums = np.zeros(len(grid))
    train_sq = np.einsum("ij,ij->i", train_w, train_w)
    block = max(1, BLOCK_ELEMENTS // max(n, 1))
    for start in range(0, len(held_w), block):
        chunk = held_w[start:start + block]
        d2 = (np.einsum("ij,ij->i", chunk, chunk)[:, None] + train_sq[None, :]
              - 2.0 * chunk @ train_w.T)
        np.maximum(d2, 0.0, out=d2)
        for gi, h in enumerate(grid):
            lse = _log_kernel_sums(d2, h)
            sums[gi] += float(np.sum(np.sort(lse)))
    return sums / len(held_w) + const


def fit_kde(train: np.ndarray, heldout: np.ndarray,
            bandwidth_grid: np.ndarray | list[float] | None = None) -> KdeModel:
    """Fit a KDE and select the bandwidth maximizing mean held-out
    log-density; ties resolve to the smaller h."""
    train = _as_points(train)
    heldout = _as_points(heldout)
    n, d = train.shape
    # two points are the minimum for a ddof=1 covariance; degenerate spreads
    # still surface below as singular covariance
    if n < 2:
        raise ParameterError(f"need >= 2 train points, got {n}")
    if heldout.shape[1] != d:
        raise ParameterError("heldout dimension does not match train")
    if len(heldout) == 0:
        raise ParameterError("heldout set is empty")
    if bandwidth_grid is None:
        bandwidth_grid = default_bandwidth_grid(n, d)
    grid = np.sort(np.asarray(bandwidth_grid, dtype=np.float64))
    if len(grid) == 0:
        raise ParameterError("bandwidth grid is empty")
    if np.any(grid <= 0):
        raise ParameterError("bandwidth grid values must be > 0")

    cov = _jittered_covariance(train)
    chol = _cholesky_or_raise(cov)
    log_det_cov = 2.0 * float(np.sum(np.log(np.diag(chol))))
    train_w = _whitened(train, chol)
    held_w = _whitened(heldout, chol)
    scores = _mean_heldout_loglik(train_w, held_w, log_det_cov, grid)
    best = int(np.argmax(scores))  # first max in ascending grid = smaller h
    return KdeModel(train_points=train, covariance=cov,
                    bandwidth_h=float(grid[best]), dim=d, _chol=chol)


def kde_logpdf_many(model: KdeModel, points: np.ndarray) -> np.ndarray:
    """Log-density of the kernel mixture at each point (log-sum-exp blocked)."""
    points = _as_points(points)
    if points.shape[1] != model.dim:
        raise ParameterError(f"points have dim {points.shape[1]}, "
                             f"model has {model.dim}")
    chol = model.chol
    log_det_cov = 2.0 * float(np.sum(np.log(np.diag(chol))))
    train_w = _whitened(model.train_points, chol)
    pts_w = _whitened(points, chol)
    n, d = train_w.shape
    h = model.bandwidth_h
    const = (-0.5 * d * math.log(2.0 * math.pi * h) - 0.5 * log_det_cov
             - math.log(n))
    out = np.empty(len(pts_w))
    train_sq = np.einsum("ij,ij->i", train_w, train_w)
    block = max(1, BLOCK_ELEMENTS // max(n, 1))
    for start in range(0, len(pts_w), block):
        chunk = pts_w[start:start + block]
        d2 = (np.einsum("ij,ij->i", chunk, chunk)[:, None] + train_sq[None, :]
              - 2.0 * chunk @ train_w.T)
        np.maximum(d2, 0.0, out=d2)
        out[start:start + block] = _log_kernel_sums(d2, h)
    return out + const


def kde_logpdf(model: KdeModel, x: np.ndarray | float) -> float:
    """Log-density at a single point."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    return float(kde_logpdf_many(model, x[None, :])[0])


def entropy_mc(model: KdeModel, eval_points: np.ndarray) -> float:
    """Monte Carlo entropy: negative mean log-density over held-out points.

    The mean runs over sorted log-densities so the result is exactly
    invariant to permutations of eval_points.
    """
    eval_points = _as_points(eval_points)
    if len(eval_points) == 0:
        raise ParameterError("eval_points is empty")
    logp = kde_logpdf_many(model, eval_points)
    return float(-np.mean(np.sort(logp)))


@dataclass
class EntropyEstimate:
    value_nats: float
    std_nats: float
    n_eval: int
    n_folds: int
    feature: str = ""
    zscore_signature: str = ""

    def __post_init__(self):
        if self.std_nats < 0:
            raise ParameterError("std_nats must be >= 0")
        if self.n_folds < 2:
            raise ParameterError("std requires n_folds >= 2")


def partition_indices(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Deterministic 50/25/25 fit/selection/evaluation split by index
    position (i mod 4 -> {0,1} fit, {2} selection, {3} evaluation)."""
    idx = np.arange(n)
    mod = idx % 4
    return idx[mod <= 1], idx[mod == 2], idx[mod == 3]


def entropy_bootstrap_model(model: KdeModel, eval_points: np.ndarray,
                            n_folds: int = 20, seed: int = 0) -> EntropyEstimate:
    """Bootstrap spread for an already-fitted model: resample the evaluation
    set with replacement n_folds times and report mean/std across folds."""
    if n_folds < 2:
        raise ParameterError("n_folds must be >= 2 for a defined std")
    eval_points = _as_points(eval_points)
    if len(eval_points) == 0:
        raise ParameterError("eval_points is empty")
    logp = kde_logpdf_many(model, eval_points)
    rng = np.random.default_rng(seed)
    fold_values = np.empty(n_folds)
    for f in range(n_folds):
        take = rng.integers(0, len(logp), size=len(logp))
        fold_values[f] = -float(np.mean(np.sort(logp[take])))
    return EntropyEstimate(value_nats=float(np.mean(fold_values)),
                           std_nats=float(np.std(fold_values, ddof=1)),
                           n_eval=int(len(logp)), n_folds=n_folds)


def entropy_bootstrap(feature: np.ndarray, n_folds: int = 20, *,
                      splits: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
                      bandwidth_grid=None, seed: int = 0) -> EntropyEstimate:
    """Entropy with a bootstrap spread: fit one KDE, then resample the
    evaluation set with replacement n_folds times.

    ``splits`` overrides the default positional fit/selection/evaluation
    partition with explicit index arrays.
    """
    if n_folds < 2:
        raise ParameterError("n_folds must be >= 2 for a defined std")
    points = _as_points(feature)
    if len(points) < 10 * n_folds:
        raise ParameterError(
            f"need >= {10 * n_folds} samples for {n_folds} folds, "
            f"got {len(points)}")
    if splits is None:
        splits = partition_indices(len(points))
    fit_idx, sel_idx, eval_idx = (np.asarray(s) for s in splits)
    if min(len(fit_idx), len(sel_idx), len(eval_idx)) == 0:
        raise ParameterError("every partition subset must be non-empty")

    model = fit_kde(points[fit_idx], points[sel_idx], bandwidth_grid)
    # one log-density per unique eval point; folds only reweight them
    return entropy_bootstrap_model(model, points[eval_idx], n_folds, seed)


# ---------------------------------------------------------------------------
# Persistence: JSON header line + little-endian float64 train points


def write_kde_model(path: str | Path, model: KdeModel,
                    extra_header: dict | None = None) -> None:
    header = {
        "dim": int(model.dim),
        "n": int(model.train_points.shape[0]),
        "h": float(model.bandwidth_h),
        "covariance": [float(v) for v in model.covariance.ravel()],
    }
    if extra_header:
        header.update(extra_header)
    points = np.ascontiguousarray(model.train_points, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        fh.write(points.tobytes())


def read_kde_model(path: str | Path) -> KdeModel:
    with open(path, "rb") as fh:
        try:
            header = json.loads(fh.readline().decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ParseError(f"{path}: bad KDE header: {exc}") from exc
        for key in ("dim", "n", "h", "covariance"):
            if key not in header:
                raise ParseError(f"{path}: KDE header missing {key!r}")
        d, n = int(header["dim"]), int(header["n"])
        payload = fh.read()
    if len(payload) != n * d * 8:
        raise ParseError(f"{path}: payload is {len(payload)} bytes, "
                         f"expected {n * d * 8}")
    points = np.frombuffer(payload, dtype="<f8").reshape(n, d).copy()
    cov = np.array(header["covariance"], dtype=np.float64).reshape(d, d)
    return KdeModel(train_points=points, covariance=cov,
                    bandwidth_h=float(header["h"]), dim=d)
