"""Diagonal-covariance Gaussian mixtures: EM fitting, posteriors, soft counts.

All density arithmetic is done in the log domain with log-sum-exp so that
posteriors stay well defined for high-dimensional inputs that would underflow
linear-domain densities.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "GmmModel",
    "GmmFitConfig",
    "GmmFitError",
    "fit_gmm",
    "log_densities",
    "posteriors",
    "posteriors_matrix",
    "soft_count",
    "sample",
    "save_gmm",
    "load_gmm",
    "GMM_MAGIC",
]

GMM_MAGIC = b"WMGMM1"

INIT_KMEANS = "kmeans"
INIT_RANDOM = "random-responsibility"

_LOG_2PI = float(np.log(2.0 * np.pi))


class GmmFitError(ValueError):
    """EM cannot produce a valid mixture from the given data."""


@dataclass(frozen=True)
class GmmModel:
    """Mixture of K diagonal-covariance Gaussians in D dimensions."""

    weights: np.ndarray   # (K,), sums to 1
    means: np.ndarray     # (K, D)
    variances: np.ndarray  # (K, D), strictly positive

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        m = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        v = np.atleast_2d(np.asarray(self.variances, dtype=np.float64))
        if w.ndim != 1 or m.shape != v.shape or m.shape[0] != w.shape[0]:
            raise ValueError(
                f"inconsistent shapes: weights {w.shape}, means {m.shape}, variances {v.shape}"
            )
        if abs(w.sum() - 1.0) > 1e-9 or (w < 0).any():
            raise ValueError(f"weights must form a simplex vector, got sum {w.sum()!r}")
        if (v <= 0).any():
            raise ValueError("variances must be strictly positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)

    @property
    def K(self) -> int:
        return self.weights.shape[0]

    @property
    def D(self) -> int:
        return self.means.shape[1]


@dataclass(frozen=True)
class GmmFitConfig:
    """EM fitting parameters.

    `variance_floor` is relative: each dimension's floor is this factor times
    the global data variance in that dimension (with a tiny absolute minimum
    for constant dimensions).
    """

    K: int
    max_iters: int = 100
    rel_tol: float = 1e-6
    variance_floor: float = 1e-4
    seed: int = 0
    init: str = INIT_KMEANS

    def __post_init__(self) -> None:
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.rel_tol <= 0:
            raise ValueError(f"rel_tol must be positive, got {self.rel_tol}")
        if self.init not in (INIT_KMEANS, INIT_RANDOM):
            raise ValueError(f"unknown init {self.init!r}")


def log_densities(g: GmmModel, X: np.ndarray) -> np.ndarray:
    """log(w_k) + log N(x_n; mu_k, sigma2_k) for every row and component, (N, K)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != g.D:
        raise ValueError(f"instance dimension {X.shape[1]} does not match model D={g.D}")
    inv_var = 1.0 / g.variances
    const = -0.5 * (g.D * _LOG_2PI + np.log(g.variances).sum(axis=1))  # (K,)
    quad = (
        (X**2) @ inv_var.T
        - 2.0 * X @ (g.means * inv_var).T
        + (g.means**2 * inv_var).sum(axis=1)
    )
    return np.log(g.weights) + const - 0.5 * quad


def posteriors_matrix(g: GmmModel, X: np.ndarray) -> np.ndarray:
    """Component posteriors for every row of X, shape (N, K); rows sum to 1."""
    lp = log_densities(g, X)
    return np.exp(lp - logsumexp(lp, axis=1, keepdims=True))


def posteriors(g: GmmModel, x: np.ndarray) -> np.ndarray:
    """Posterior component probabilities of a single instance, shape (K,)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("posteriors expects a single vector; use posteriors_matrix for batches")
    return posteriors_matrix(g, x[None, :])[0]


def soft_count(g: GmmModel, frames: np.ndarray) -> np.ndarray:
    """Posterior-averaged occupancy histogram of a frame matrix, normalized to sum 1."""
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if frames.shape[0] == 0:
        raise ValueError("cannot compute a soft count of an empty frame matrix")
    counts = posteriors_matrix(g, frames).mean(axis=0)
    return counts / counts.sum()


def sample(g: GmmModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n instances from the mixture, shape (n, D)."""
    comps = rng.choice(g.K, size=n, p=g.weights)
    noise = rng.standard_normal((n, g.D))
    return g.means[comps] + noise * np.sqrt(g.variances[comps])


def _kmeans_init(X: np.ndarray, K: int, floor: np.ndarray, rng: np.random.Generator) -> GmmModel:
    """Farthest-point seeding followed by a few Lloyd iterations."""
    n = X.shape[0]
    centers = np.empty((K, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    min_d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for k in range(1, K):
        centers[k] = X[int(np.argmax(min_d2))]
        min_d2 = np.minimum(min_d2, ((X - centers[k]) ** 2).sum(axis=1))

    assign = np.full(n, -1, dtype=np.intp)
    for _it in range(10):
        d2 = (X**2).sum(axis=1, keepdims=True) - 2.0 * X @ centers.T + (centers**2).sum(axis=1)
        new_assign = np.argmin(d2, axis=1)
        if (new_assign == assign).all():
            break
        assign = new_assign
        for k in range(K):
            mask = assign == k
            if mask.any():
                centers[k] = X[mask].mean(axis=0)

    weights = np.empty(K)
    variances = np.empty_like(centers)
    global_var = np.maximum(X.var(axis=0), floor)
    for k in range(K):
        mask = assign == k
        weights[k] = max(mask.sum(), 1)
        variances[k] = np.maximum(X[mask].var(axis=0), floor) if mask.sum() > 1 else global_var
    weights /= weights.sum()
    return GmmModel(weights, centers, variances)


def _random_resp_init(
    X: np.ndarray, K: int, floor: np.ndarray, rng: np.random.Generator
) -> GmmModel:
    resp = rng.random((X.shape[0], K))
    resp /= resp.sum(axis=1, keepdims=True)
    return _m_step(X, resp, floor)


def _m_step(X: np.ndarray, resp: np.ndarray, floor: np.ndarray) -> GmmModel:
    nk = resp.sum(axis=0)
    nk_safe = np.maximum(nk, 1e-300)
    weights = nk / X.shape[0]
    means = (resp.T @ X) / nk_safe[:, None]
    ex2 = (resp.T @ X**2) / nk_safe[:, None]
    variances = np.maximum(ex2 - means**2, floor)
    weights = weights / weights.sum()
    return GmmModel(weights, means, variances)


def fit_gmm(
    data: np.ndarray,
    cfg: GmmFitConfig,
    return_trace: bool = False,
) -> GmmModel | tuple[GmmModel, np.ndarray]:
    """Fit a diagonal GMM by EM; deterministic for a fixed config seed.

    Runs until the relative log-likelihood improvement drops below
    cfg.rel_tol or cfg.max_iters is reached.  With return_trace=True also
    returns the per-iteration total log-likelihood (non-decreasing within
    numerical tolerance).

    Raises GmmFitError when the data has fewer distinct rows than K.
    """
    X = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if not np.isfinite(X).all():
        raise GmmFitError("data contains non-finite values")
    n, d = X.shape
    if n < cfg.K:
        raise GmmFitError(f"need at least K={cfg.K} rows, got {n}")
    n_distinct = np.unique(X, axis=0).shape[0]
    if n_distinct < cfg.K:
        collapsed = list(range(n_distinct, cfg.K))
        raise GmmFitError(
            f"only {n_distinct} distinct rows for K={cfg.K}; "
            f"components {collapsed} would collapse"
        )

    floor = np.maximum(cfg.variance_floor * X.var(axis=0), 1e-12)
    rng = np.random.default_rng(cfg.seed)
    if cfg.init == INIT_KMEANS:
        model = _kmeans_init(X, cfg.K, floor, rng)
    else:
        model = _random_resp_init(X, cfg.K, floor, rng)

    trace: list[float] = []
    prev_ll = -np.inf
    global_var = np.maximum(X.var(axis=0), floor)
    for _ in range(cfg.max_iters):
        lp = log_densities(model, X)
        lse = logsumexp(lp, axis=1)
        ll = float(lse.sum())
        trace.append(ll)
        if np.isfinite(prev_ll) and ll - prev_ll < cfg.rel_tol * max(abs(prev_ll), 1e-12):
            break
        prev_ll = ll

        resp = np.exp(lp - lse[:, None])
        nk = resp.sum(axis=0)
        model = _m_step(X, resp, floor)
        dead = nk < 1e-10
        if dead.any():
            # reseed starved components at the worst-explained data point
            worst = int(np.argmin(lse))
            weights = model.weights.copy()
            means = model.means.copy()
            variances = model.variances.copy()
            for k in np.flatnonzero(dead):
                means[k] = X[worst]
                variances[k] = global_var
                weights[k] = 1.0 / n
            weights /= weights.sum()
            model = GmmModel(weights, means, variances)

    if return_trace:
        return model, np.asarray(trace)
    return model


def save_gmm(path: str | Path, g: GmmModel) -> None:
    """Write a mixture: magic, u32 K, u32 D, then weights/means/variances as LE f64."""
    with open(path, "wb") as fh:
        fh.write(GMM_MAGIC)
        fh.write(struct.pack("<II", g.K, g.D))
        fh.write(g.weights.astype("<f8").tobytes())
        fh.write(np.ascontiguousarray(g.means).astype("<f8").tobytes())
        fh.write(np.ascontiguousarray(g.variances).astype("<f8").tobytes())


def load_gmm(path: str | Path) -> GmmModel:
    data = Path(path).read_bytes()
    header = len(GMM_MAGIC) + 8
    if len(data) < header or data[: len(GMM_MAGIC)] != GMM_MAGIC:
        raise ValueError(f"{path}: not a mixture model file")
    K, D = struct.unpack_from("<II", data, len(GMM_MAGIC))
    expect = header + (K + 2 * K * D) * 8
    if len(data) != expect:
        raise ValueError(f"{path}: expected {expect} bytes for K={K}, D={D}, got {len(data)}")
    body = np.frombuffer(data, dtype="<f8", offset=header)
    weights = body[:K].astype(np.float64)
    means = body[K : K + K * D].reshape(K, D).astype(np.float64)
    variances = body[K + K * D :].reshape(K, D).astype(np.float64)
    return GmmModel(weights, means, variances)
