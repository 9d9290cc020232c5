"""Linear SVM solver and the instance-level MIL heuristics miSVM and MISVM.

The solver is an in-house dual coordinate descent for the L2-regularized
L1-hinge primal, with the bias handled by augmenting every example with a
constant feature (so the bias is regularized along with the weights).  Both
MIL trainers alternate between solving this SVM and re-deciding which
positive-bag instances count as positive.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None

__all__ = [
    "LinearModel",
    "MilTrainConfig",
    "MilState",
    "train_linear_svm",
    "decision",
    "bag_score",
    "train_misvm",
    "train_MISVM",
    "hinge_objective",
    "save_linear_model",
    "load_linear_model",
    "SVM_MAGIC",
]

SVM_MAGIC = b"WMSVM1"

# Fixed solver seed: training is a pure function of (X, y, cfg).
_SOLVER_SEED = 0x5EED


@dataclass
class LinearModel:
    """Trained linear decision function score(x) = w . x + b."""

    w: np.ndarray
    b: float
    C: float


@dataclass(frozen=True)
class MilTrainConfig:
    """Hyperparameters for the solver and the MIL outer loops.

    The default solver tolerance matches the usual dual coordinate-descent
    default; tighten it (and raise solver_max_iters) when near-exact
    optima are required.
    """

    C: float = 1.0
    max_outer_iters: int = 50
    solver_tol: float = 0.1
    solver_max_iters: int = 1000

    def __post_init__(self) -> None:
        if self.C <= 0:
            raise ValueError(f"C must be positive, got {self.C}")
        if self.max_outer_iters < 1:
            raise ValueError(f"max_outer_iters must be >= 1, got {self.max_outer_iters}")
        if self.solver_tol <= 0 or self.solver_max_iters < 1:
            raise ValueError("solver_tol must be positive and solver_max_iters >= 1")


@dataclass
class MilState:
    """Final (or per-iteration) state of a MIL outer loop.

    `instance_labels` holds one +/-1 array per bag for miSVM; `witnesses`
    maps each positive bag's index to its chosen instance for MISVM.
    `assignment_history` is the cycle log: one digest per outer iteration.
    """

    instance_labels: list[np.ndarray] | None
    witnesses: dict[int, int] | None
    iteration: int
    converged: bool
    cycle_detected: bool = False
    assignment_history: list[str] = field(default_factory=list)


def _cd_epoch(X, y, qdiag, alpha, w, C, order):
    """One dual coordinate-descent sweep; returns extreme projected gradients."""
    max_pg = -1e300
    min_pg = 1e300
    for t in range(order.shape[0]):
        i = order[t]
        g = y[i] * np.dot(X[i], w) - 1.0
        if alpha[i] == 0.0:
            pg = g if g < 0.0 else 0.0
        elif alpha[i] == C:
            pg = g if g > 0.0 else 0.0
        else:
            pg = g
        if pg > max_pg:
            max_pg = pg
        if pg < min_pg:
            min_pg = pg
        if pg != 0.0:
            old = alpha[i]
            new = old - g / qdiag[i]
            if new < 0.0:
                new = 0.0
            elif new > C:
                new = C
            if new != old:
                alpha[i] = new
                delta = (new - old) * y[i]
                for d in range(X.shape[1]):
                    w[d] += delta * X[i, d]
    return max_pg, min_pg


if njit is not None:
    _cd_epoch = njit(cache=True)(_cd_epoch)


def train_linear_svm(X: np.ndarray, y: np.ndarray, cfg: MilTrainConfig) -> LinearModel:
    """Fit a linear SVM minimizing 0.5(||w||^2 + b^2) + C * sum hinge(y, w.x + b).

    Dual coordinate descent over the box [0, C]^n, stopping when the spread
    of projected gradients falls below cfg.solver_tol or after
    cfg.solver_max_iters sweeps.  Deterministic for fixed inputs.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2:
        raise ValueError(f"X must be 2-D, got shape {X.shape}")
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"{X.shape[0]} rows but {y.shape[0]} labels")
    if not np.isfinite(X).all():
        raise ValueError("X contains non-finite values")
    if not np.isin(y, (-1.0, 1.0)).all():
        raise ValueError("labels must be -1 or +1")
    if (y == 1).sum() == 0 or (y == -1).sum() == 0:
        raise ValueError("need at least one example of each class")

    n, d = X.shape
    Xa = np.ascontiguousarray(np.hstack([X, np.ones((n, 1))]))
    qdiag = (Xa * Xa).sum(axis=1)
    alpha = np.zeros(n)
    w = np.zeros(d + 1)
    rng = np.random.default_rng(_SOLVER_SEED)
    for _ in range(cfg.solver_max_iters):
        order = rng.permutation(n)
        max_pg, min_pg = _cd_epoch(Xa, y, qdiag, alpha, w, cfg.C, order)
        if max_pg - min_pg < cfg.solver_tol:
            break
    return LinearModel(w=w[:d].copy(), b=float(w[d]), C=cfg.C)


def decision(m: LinearModel, x: np.ndarray) -> float:
    """Raw score w . x + b of a single instance."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != m.w.shape:
        raise ValueError(f"instance shape {x.shape} does not match weights {m.w.shape}")
    return float(np.dot(m.w, x) + m.b)


def bag_score(m: LinearModel, bag: np.ndarray) -> float:
    """Bag-level score: maximum instance score within the bag."""
    bag = np.atleast_2d(np.asarray(bag, dtype=np.float64))
    return float((bag @ m.w + m.b).max())


def hinge_objective(m: LinearModel, X: np.ndarray, y: np.ndarray) -> float:
    """Primal objective value the solver minimizes (bias included in the penalty)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    margins = y * (X @ m.w + m.b)
    hinge = np.maximum(0.0, 1.0 - margins).sum()
    return 0.5 * (float(m.w @ m.w) + m.b**2) + m.C * hinge


def _check_bags(
    bags: Sequence[np.ndarray], bag_labels: Sequence[int]
) -> tuple[list[np.ndarray], np.ndarray]:
    mats = [np.atleast_2d(np.asarray(b, dtype=np.float64)) for b in bags]
    labels = np.asarray(bag_labels, dtype=np.int64).ravel()
    if len(mats) != labels.shape[0]:
        raise ValueError(f"{len(mats)} bags but {labels.shape[0]} labels")
    if not np.isin(labels, (-1, 1)).all():
        raise ValueError("bag labels must be -1 or +1")
    if (labels == 1).sum() == 0:
        raise ValueError("need at least one positive bag")
    if (labels == -1).sum() == 0:
        raise ValueError("need at least one negative bag")
    dims = {m.shape[1] for m in mats}
    if len(dims) != 1:
        raise ValueError(f"inconsistent instance dimensions: {sorted(dims)}")
    if any(m.shape[0] == 0 for m in mats):
        raise ValueError("empty bag")
    return mats, labels


def _digest(arr: np.ndarray) -> str:
    return hashlib.sha1(np.ascontiguousarray(arr).tobytes()).hexdigest()


def train_misvm(
    bags: Sequence[np.ndarray],
    bag_labels: Sequence[int],
    cfg: MilTrainConfig = MilTrainConfig(),
    iteration_callback: Callable[[int, list[np.ndarray]], None] | None = None,
) -> tuple[LinearModel, MilState]:
    """Instance-level MIL heuristic: alternate SVM solves and instance relabeling.

    Positive-bag instances start positive; after each solve they are
    relabeled by the sign of their score, except that a positive bag whose
    instances all score negative gets its highest-scoring instance forced
    positive, so every positive bag always keeps at least one positive
    instance.  Negative-bag instances stay negative throughout.  Stops at a
    label fixed point, a detected cycle, or cfg.max_outer_iters.
    """
    mats, labels = _check_bags(bags, bag_labels)
    X = np.vstack(mats)
    starts = np.cumsum([0] + [m.shape[0] for m in mats])
    y = np.concatenate([np.full(m.shape[0], lab, dtype=np.float64) for m, lab in zip(mats, labels)])

    history: list[str] = [_digest(y)]
    seen = {history[0]}
    model: LinearModel | None = None
    converged = False
    cycle = False
    iteration = 0
    for iteration in range(1, cfg.max_outer_iters + 1):
        model = train_linear_svm(X, y, cfg)
        scores = X @ model.w + model.b
        new_y = y.copy()
        for i in np.flatnonzero(labels == 1):
            seg = slice(starts[i], starts[i + 1])
            seg_scores = scores[seg]
            seg_labels = np.where(seg_scores > 0, 1.0, -1.0)
            if (seg_labels < 0).all():
                seg_labels[int(np.argmax(seg_scores))] = 1.0
            new_y[seg] = seg_labels
        if iteration_callback is not None:
            iteration_callback(
                iteration, [new_y[starts[i] : starts[i + 1]].astype(np.int64) for i in range(len(mats))]
            )
        if (new_y == y).all():
            converged = True
            break
        digest = _digest(new_y)
        history.append(digest)
        y = new_y
        if digest in seen:
            cycle = True
            break
        seen.add(digest)

    per_bag = [y[starts[i] : starts[i + 1]].astype(np.int64) for i in range(len(mats))]
    state = MilState(
        instance_labels=per_bag,
        witnesses=None,
        iteration=iteration,
        converged=converged,
        cycle_detected=cycle,
        assignment_history=history,
    )
    return model, state


def train_MISVM(
    bags: Sequence[np.ndarray],
    bag_labels: Sequence[int],
    cfg: MilTrainConfig = MilTrainConfig(),
    iteration_callback: Callable[[int, dict[int, int]], None] | None = None,
) -> tuple[LinearModel, MilState]:
    """Bag-level MIL heuristic: one witness instance represents each positive bag.

    Every outer iteration trains on the current witnesses plus all
    negative-bag instances, then reselects each positive bag's witness as its
    highest-scoring instance (ties to the lowest index).  The initial witness
    is the instance nearest the bag's mean vector.  Stops when the witness
    assignment repeats, on a detected cycle, or at cfg.max_outer_iters.
    """
    mats, labels = _check_bags(bags, bag_labels)
    pos_idx = np.flatnonzero(labels == 1)
    neg_X = np.vstack([mats[i] for i in np.flatnonzero(labels == -1)])

    witnesses: dict[int, int] = {}
    for i in pos_idx:
        center = mats[i].mean(axis=0)
        witnesses[int(i)] = int(np.argmin(((mats[i] - center) ** 2).sum(axis=1)))

    def wit_digest(w: dict[int, int]) -> str:
        return hashlib.sha1(json.dumps(sorted(w.items())).encode()).hexdigest()

    history = [wit_digest(witnesses)]
    seen = {history[0]}
    model: LinearModel | None = None
    converged = False
    cycle = False
    iteration = 0
    for iteration in range(1, cfg.max_outer_iters + 1):
        wit_X = np.vstack([mats[i][witnesses[int(i)]] for i in pos_idx])
        X = np.vstack([wit_X, neg_X])
        y = np.concatenate([np.ones(len(pos_idx)), -np.ones(neg_X.shape[0])])
        model = train_linear_svm(X, y, cfg)
        new_wit = {
            int(i): int(np.argmax(mats[i] @ model.w + model.b)) for i in pos_idx
        }
        if iteration_callback is not None:
            iteration_callback(iteration, dict(new_wit))
        if new_wit == witnesses:
            converged = True
            break
        digest = wit_digest(new_wit)
        history.append(digest)
        witnesses = new_wit
        if digest in seen:
            cycle = True
            break
        seen.add(digest)

    state = MilState(
        instance_labels=None,
        witnesses=witnesses,
        iteration=iteration,
        converged=converged,
        cycle_detected=cycle,
        assignment_history=history,
    )
    return model, state


def save_linear_model(
    path: str | Path,
    m: LinearModel,
    iterations: int = 0,
    converged: bool = True,
) -> None:
    """Write weights/bias in binary plus a JSON sidecar with training metadata."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(SVM_MAGIC)
        fh.write(struct.pack("<I", m.w.shape[0]))
        fh.write(struct.pack("<d", m.b))
        fh.write(m.w.astype("<f8").tobytes())
    sidecar = {"C": m.C, "iterations": iterations, "converged": converged}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2))


def load_linear_model(path: str | Path) -> tuple[LinearModel, dict]:
    path = Path(path)
    data = path.read_bytes()
    header = len(SVM_MAGIC) + 12
    if len(data) < header or data[: len(SVM_MAGIC)] != SVM_MAGIC:
        raise ValueError(f"{path}: not a linear model file")
    dim = struct.unpack_from("<I", data, len(SVM_MAGIC))[0]
    bias = struct.unpack_from("<d", data, len(SVM_MAGIC) + 4)[0]
    if len(data) != header + 8 * dim:
        raise ValueError(f"{path}: expected {dim} weights")
    w = np.frombuffer(data, dtype="<f8", offset=header).astype(np.float64)
    meta_path = path.with_suffix(path.suffix + ".json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return LinearModel(w=w, b=float(bias), C=float(meta.get("C", 1.0))), meta
