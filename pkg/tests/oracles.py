"""Independent reference implementations used to cross-check the package.

Everything here deliberately recomputes results along a different path than
the library code: dense per-instance loops, linear-domain densities, exact
enumeration.  Keep it slow and obvious.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def gaussian_pdf(x: np.ndarray, mean: np.ndarray, var: np.ndarray) -> float:
    """Product of independent 1-D normal densities, linear domain."""
    x, mean, var = np.asarray(x, float), np.asarray(mean, float), np.asarray(var, float)
    coeff = 1.0 / np.sqrt(2.0 * math.pi * var)
    return float(np.prod(coeff * np.exp(-0.5 * (x - mean) ** 2 / var)))


def posterior_reference(weights, means, variances, x) -> np.ndarray:
    dens = np.array([w * gaussian_pdf(x, m, v) for w, m, v in zip(weights, means, variances)])
    return dens / dens.sum()


def fv_reference(weights, means, variances, bag, with_weight_block=False) -> np.ndarray:
    """Dense per-instance Fisher-vector computation (mu block, sigma block[, w block])."""
    bag = np.atleast_2d(np.asarray(bag, float))
    m = bag.shape[0]
    K, D = np.asarray(means).shape
    gamma = np.array([posterior_reference(weights, means, variances, row) for row in bag])
    mu_blocks, sig_blocks, w_block = [], [], []
    for k in range(K):
        a_mu = np.zeros(D)
        a_sig = np.zeros(D)
        a_w = 0.0
        for j in range(m):
            a_mu += gamma[j, k] * (bag[j] - means[k]) / np.sqrt(variances[k])
            a_sig += gamma[j, k] * ((bag[j] - means[k]) ** 2 / variances[k] - 1.0)
            a_w += gamma[j, k] - weights[k]
        mu_blocks.append(a_mu / (m * math.sqrt(weights[k])))
        sig_blocks.append(a_sig / (m * math.sqrt(2.0 * weights[k])))
        w_block.append(a_w / (m * math.sqrt(weights[k])))
    parts = [np.concatenate(mu_blocks), np.concatenate(sig_blocks)]
    if with_weight_block:
        parts.append(np.array(w_block))
    return np.concatenate(parts)


def sup_reference(weights, means, variances, bag, r, mean_only=False) -> np.ndarray:
    """Dense per-instance MAP-adaptation supervector."""
    bag = np.atleast_2d(np.asarray(bag, float))
    K, D = np.asarray(means).shape
    gamma = np.array([posterior_reference(weights, means, variances, row) for row in bag])
    mu_blocks, sig_blocks = [], []
    for k in range(K):
        n_k = gamma[:, k].sum()
        s1 = (gamma[:, k][:, None] * bag).sum(axis=0)
        s2 = (gamma[:, k][:, None] * bag**2).sum(axis=0)
        b_mu = (s1 + r * np.asarray(means)[k]) / (n_k + r)
        b_sig = (s2 + r * (np.asarray(means)[k] ** 2 + np.asarray(variances)[k])) / (n_k + r) - b_mu**2
        mu_blocks.append(b_mu)
        sig_blocks.append(b_sig)
    if mean_only:
        return np.concatenate(mu_blocks)
    return np.concatenate([np.concatenate(mu_blocks), np.concatenate(sig_blocks)])


def ap_reference(scores, labels, bag_ids) -> float:
    """Average precision by explicit counting over the sorted list."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], bag_ids[i]))
    ranked = [labels[i] for i in order]
    n_pos = sum(1 for lab in ranked if lab == 1)
    total = 0.0
    for rank in range(1, len(ranked) + 1):
        if ranked[rank - 1] == 1:
            hits = sum(1 for lab in ranked[:rank] if lab == 1)
            total += hits / rank
    return total / n_pos


def enumerate_dual_qp(X, y, C):
    """Exact maximizer of the bias-augmented hinge-SVM dual over [0, C]^n.

    Brute-force enumeration of every box activity pattern (alpha_i in
    {0, C, interior}), solving the stationarity system on the interior set
    and keeping the best KKT-feasible candidate.  Returns (w, b, dual_value)
    with (w, b) reconstructed from the optimal dual variables.
    """
    X = np.atleast_2d(np.asarray(X, float))
    y = np.asarray(y, float)
    Xa = np.hstack([X, np.ones((len(X), 1))])
    G = y[:, None] * Xa
    Q = G @ G.T
    n = len(y)
    best_val, best_alpha = -np.inf, None
    for pattern in itertools.product((0, 1, 2), repeat=n):  # 0: alpha=0, 1: alpha=C, 2: free
        alpha = np.zeros(n)
        upper = [i for i, p in enumerate(pattern) if p == 1]
        free = [i for i, p in enumerate(pattern) if p == 2]
        alpha[upper] = C
        if free:
            rhs = np.ones(len(free))
            if upper:
                rhs = rhs - Q[np.ix_(free, upper)].sum(axis=1) * C
            sol, *_ = np.linalg.lstsq(Q[np.ix_(free, free)], rhs, rcond=None)
            if not np.allclose(Q[np.ix_(free, free)] @ sol, rhs, atol=1e-9):
                continue
            if (sol < -1e-12).any() or (sol > C + 1e-12).any():
                continue
            alpha[free] = np.clip(sol, 0.0, C)
        grad = 1.0 - Q @ alpha
        feasible = all(
            (p == 0 and grad[i] <= 1e-8) or (p == 1 and grad[i] >= -1e-8) or p == 2
            for i, p in enumerate(pattern)
        )
        if not feasible:
            continue
        val = alpha.sum() - 0.5 * alpha @ Q @ alpha
        if val > best_val:
            best_val, best_alpha = val, alpha
    w_aug = (best_alpha * y) @ Xa
    return w_aug[:-1], float(w_aug[-1]), float(best_val)


def random_separable_problem(rng: np.random.Generator, max_points: int = 6):
    """A small linearly separable 2-D problem with both classes present."""
    n = int(rng.integers(2, max_points + 1))
    direction = rng.standard_normal(2)
    direction /= np.linalg.norm(direction)
    n_pos = int(rng.integers(1, n))
    points, labels = [], []
    for i in range(n):
        side = 1 if i < n_pos else -1
        margin = 1.0 + rng.uniform(0.0, 1.5)
        perp = rng.standard_normal(2)
        perp -= (perp @ direction) * direction
        points.append(side * margin * direction + 0.8 * perp)
        labels.append(side)
    return np.array(points), np.array(labels, float)
