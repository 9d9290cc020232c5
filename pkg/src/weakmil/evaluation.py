"""Average precision, cross-fold experiment driver, and training-time benchmark."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from weakmil.core import Dataset, FoldPlan
from weakmil.encode import (
    LAYOUT_MEAN_VAR,
    MODE_MEAN,
    MODE_MEAN_VAR,
    EncoderConfig,
    encode_bag,
)
from weakmil.gmm import GmmFitConfig, fit_gmm
from weakmil.milsvm import MilTrainConfig, bag_score, train_linear_svm, train_misvm, train_MISVM

__all__ = [
    "ALGORITHMS",
    "RankedResult",
    "ExperimentConfig",
    "EvalReport",
    "TimingReport",
    "average_precision",
    "mean_average_precision",
    "run_experiment",
    "benchmark_training",
    "export_ap_csv",
]

logger = logging.getLogger(__name__)

ALGORITHMS = ("misvm", "MISVM", "mifv", "misup", "misup_mn")
_SCALABLE = ("mifv", "misup", "misup_mn")


@dataclass(frozen=True)
class RankedResult:
    """Bag scores for one event, sorted by score descending.

    Ties are broken by bag id ascending so rankings are deterministic.
    """

    bag_ids: tuple[str, ...]
    scores: tuple[float, ...]
    labels: tuple[int, ...]

    def __post_init__(self) -> None:
        if not (len(self.bag_ids) == len(self.scores) == len(self.labels)):
            raise ValueError("bag_ids, scores, labels must have equal length")
        if not all(lab in (-1, 1) for lab in self.labels):
            raise ValueError("labels must be -1 or +1")
        if any(a < b for a, b in zip(self.scores, self.scores[1:])):
            raise ValueError("scores must be sorted descending")

    @classmethod
    def from_scores(
        cls,
        bag_ids: Sequence[str],
        scores: Sequence[float],
        labels: Sequence[int],
    ) -> "RankedResult":
        if not (len(bag_ids) == len(scores) == len(labels)):
            raise ValueError("bag_ids, scores, labels must have equal length")
        order = sorted(range(len(scores)), key=lambda i: (-scores[i], bag_ids[i]))
        return cls(
            tuple(bag_ids[i] for i in order),
            tuple(float(scores[i]) for i in order),
            tuple(int(labels[i]) for i in order),
        )


def average_precision(ranked: RankedResult) -> float:
    """Non-interpolated AP: mean of precision at each positive rank."""
    n_pos = sum(1 for lab in ranked.labels if lab == 1)
    if n_pos == 0:
        raise ValueError("average precision is undefined without positives")
    hits = 0
    total = 0.0
    for rank, lab in enumerate(ranked.labels, 1):
        if lab == 1:
            hits += 1
            total += hits / rank
    return total / n_pos


def mean_average_precision(aps: Mapping[str, float]) -> float:
    """Unweighted mean of per-event average precisions."""
    if not aps:
        raise ValueError("cannot average an empty AP map")
    # fixed event order keeps the floating-point sum deterministic
    return float(np.mean([aps[e] for e in sorted(aps)]))


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: algorithm plus the knobs it needs.

    K sizes the instance-space mixture used by the bag encoders;
    relevance_r and ifv configure the supervector and Fisher-vector
    variants.  The per-fold mixture seed is derived as seed * 8191 + fold.
    """

    algorithm: str
    K: int = 4
    relevance_r: float = 16.0
    ifv: bool = True
    mil: MilTrainConfig = field(default_factory=MilTrainConfig)
    gmm_max_iters: int = 100
    gmm_rel_tol: float = 1e-5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")

    def encoder(self) -> EncoderConfig | None:
        if self.algorithm == "mifv":
            return EncoderConfig(kind="fv", K=self.K, layout=LAYOUT_MEAN_VAR, ifv=self.ifv)
        if self.algorithm == "misup":
            return EncoderConfig(kind="sup", K=self.K, mode=MODE_MEAN_VAR, relevance_r=self.relevance_r)
        if self.algorithm == "misup_mn":
            return EncoderConfig(kind="sup", K=self.K, mode=MODE_MEAN, relevance_r=self.relevance_r)
        return None


@dataclass
class EvalReport:
    """Pooled cross-fold evaluation of one algorithm on one dataset.

    `records` carries provenance: every scored bag appears once per event
    with the fold whose held-out model produced its score.  `timing`
    separates mixture-fit, encoding, and SVM phases (seconds).
    """

    algorithm: str
    n_folds: int
    per_event_ap: dict[str, float]
    mean_ap: float
    per_fold: dict[int, list[str]]
    records: list[dict]
    timing: dict[str, float]
    skipped_events: list[str] = field(default_factory=list)

    def core_json(self) -> str:
        """Canonical JSON of everything except wall-clock timing."""
        payload = {
            "algorithm": self.algorithm,
            "n_folds": self.n_folds,
            "per_event_ap": self.per_event_ap,
            "map": self.mean_ap,
            "per_fold": {str(k): v for k, v in self.per_fold.items()},
            "records": self.records,
            "skipped_events": self.skipped_events,
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    def to_json(self) -> str:
        payload = json.loads(self.core_json())
        payload["timing"] = self.timing
        return json.dumps(payload, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        raw = json.loads(text)
        return cls(
            algorithm=raw["algorithm"],
            n_folds=raw["n_folds"],
            per_event_ap=raw["per_event_ap"],
            mean_ap=raw["map"],
            per_fold={int(k): v for k, v in raw["per_fold"].items()},
            records=raw["records"],
            timing=raw.get("timing", {}),
            skipped_events=raw.get("skipped_events", []),
        )


@dataclass
class TimingReport:
    """Mean per-event training seconds per algorithm, with a log10 column."""

    entries: dict[str, dict[str, float]]

    def to_json(self) -> str:
        return json.dumps(self.entries, sort_keys=True, indent=2)


def _check_folds_cover(dataset: Dataset, folds: FoldPlan) -> None:
    missing = [b for b in dataset.bag_ids if b not in folds.assignment]
    if missing:
        raise ValueError(f"fold plan does not cover bags: {missing[:5]}")


def run_experiment(
    dataset: Dataset,
    cfg: ExperimentConfig,
    folds: FoldPlan,
    events: Sequence[str] | None = None,
) -> EvalReport:
    """Leave-one-fold-out evaluation pooled over the whole dataset.

    For every fold, models are trained on the remaining folds and score that
    fold's bags; the pooled scores of all folds are ranked together per
    event.  Bags with an unknown label for an event are excluded from both
    its training and test pools.  Events whose training split lacks a class
    in any fold are skipped with a warning.
    """
    _check_folds_cover(dataset, folds)
    event_list = list(events) if events is not None else dataset.events
    index = {b: i for i, b in enumerate(dataset.bag_ids)}

    fold_train: dict[int, list[str]] = {}
    fold_test: dict[int, list[str]] = {}
    for f in range(folds.n_folds):
        fold_test[f] = [b for b in dataset.bag_ids if folds.fold_of(b) == f]
        fold_train[f] = [b for b in dataset.bag_ids if folds.fold_of(b) != f]

    timing = {"ubm_s": 0.0, "encode_s": 0.0, "svm_s": 0.0}
    svm_s_per_event: dict[str, float] = {e: 0.0 for e in event_list}

    encoded: dict[int, dict[str, np.ndarray]] = {}
    encoder = cfg.encoder()
    if cfg.algorithm in _SCALABLE:
        for f in range(folds.n_folds):
            train_instances = np.vstack([dataset.bags[index[b]] for b in fold_train[f]])
            gmm_cfg = GmmFitConfig(
                K=cfg.K,
                max_iters=cfg.gmm_max_iters,
                rel_tol=cfg.gmm_rel_tol,
                seed=cfg.seed * 8191 + f,
            )
            t0 = time.perf_counter()
            ubm = fit_gmm(train_instances, gmm_cfg)
            timing["ubm_s"] += time.perf_counter() - t0
            t0 = time.perf_counter()
            encoded[f] = {
                b: encode_bag(ubm, dataset.bags[index[b]], encoder) for b in dataset.bag_ids
            }
            timing["encode_s"] += time.perf_counter() - t0

    per_event_ap: dict[str, float] = {}
    skipped: list[str] = []
    records: list[dict] = []
    for event in event_list:
        known = set(dataset.known_ids(event))
        pools = []
        feasible = True
        for f in range(folds.n_folds):
            train_e = [b for b in fold_train[f] if b in known]
            test_e = [b for b in fold_test[f] if b in known]
            y_train = [dataset.label_of(event, b) for b in train_e]
            if sum(1 for v in y_train if v == 1) == 0 or sum(1 for v in y_train if v == -1) == 0:
                feasible = False
                break
            pools.append((f, train_e, test_e))
        if not feasible or not known:
            logger.warning("skipping event %r: a training split lacks a class", event)
            skipped.append(event)
            continue

        event_records: list[dict] = []
        for f, train_e, test_e in pools:
            y = np.asarray([dataset.label_of(event, b) for b in train_e], dtype=np.float64)
            t0 = time.perf_counter()
            if cfg.algorithm in _SCALABLE:
                X = np.vstack([encoded[f][b] for b in train_e])
                model = train_linear_svm(X, y, cfg.mil)
                scores = {b: float(encoded[f][b] @ model.w + model.b) for b in test_e}
            else:
                train_bags = [dataset.bags[index[b]] for b in train_e]
                if cfg.algorithm == "misvm":
                    model, _state = train_misvm(train_bags, y.astype(int), cfg.mil)
                else:
                    model, _state = train_MISVM(train_bags, y.astype(int), cfg.mil)
                scores = {b: bag_score(model, dataset.bags[index[b]]) for b in test_e}
            dt = time.perf_counter() - t0
            timing["svm_s"] += dt
            svm_s_per_event[event] += dt
            for b in test_e:
                event_records.append(
                    {
                        "event": event,
                        "bag_id": b,
                        "fold": f,
                        "score": scores[b],
                        "label": dataset.label_of(event, b),
                    }
                )

        ranked = RankedResult.from_scores(
            [r["bag_id"] for r in event_records],
            [r["score"] for r in event_records],
            [r["label"] for r in event_records],
        )
        if not any(lab == 1 for lab in ranked.labels):
            logger.warning("skipping event %r: no positives to rank", event)
            skipped.append(event)
            continue
        per_event_ap[event] = average_precision(ranked)
        records.extend(event_records)

    shared = timing["ubm_s"] + timing["encode_s"]
    scored_events = sorted(per_event_ap)
    if scored_events:
        # shared phases count fully toward each event: a conservative figure
        per_event_train = {e: shared + svm_s_per_event[e] for e in scored_events}
        timing["train_s_per_event"] = float(np.mean([per_event_train[e] for e in scored_events]))
    timing["total_s"] = shared + timing["svm_s"]

    return EvalReport(
        algorithm=cfg.algorithm,
        n_folds=folds.n_folds,
        per_event_ap=per_event_ap,
        mean_ap=mean_average_precision(per_event_ap) if per_event_ap else 0.0,
        per_fold=fold_test,
        records=records,
        timing=timing,
        skipped_events=skipped,
    )


def benchmark_training(
    configs: Sequence[ExperimentConfig],
    dataset: Dataset,
    folds: FoldPlan,
    events: Sequence[str] | None = None,
) -> TimingReport:
    """Wall-clock comparison of algorithms on one dataset and fold plan.

    Each entry reports the mean per-event training seconds (mixture fit,
    encoding, and SVM phases separated) plus its log10, mirroring how
    training-time comparisons are usually plotted.
    """
    entries: dict[str, dict[str, float]] = {}
    for cfg in configs:
        report = run_experiment(dataset, cfg, folds, events=events)
        mean_s = report.timing.get("train_s_per_event", report.timing["total_s"])
        entries[cfg.algorithm] = {
            "mean_train_s": mean_s,
            "log10_mean_train_s": float(np.log10(mean_s)) if mean_s > 0 else float("-inf"),
            "ubm_s": report.timing["ubm_s"],
            "encode_s": report.timing["encode_s"],
            "svm_s": report.timing["svm_s"],
            "total_s": report.timing["total_s"],
        }
    return TimingReport(entries)


def export_ap_csv(reports: Mapping[str, EvalReport], path: str | Path) -> None:
    """Write a per-event AP table (events as rows, methods as columns) plus a MAP row."""
    methods = list(reports)
    events = sorted({e for rep in reports.values() for e in rep.per_event_ap})
    lines = ["event," + ",".join(methods)]
    for event in events:
        cells = []
        for m in methods:
            ap = reports[m].per_event_ap.get(event)
            cells.append(f"{ap:.4f}" if ap is not None else "")
        lines.append(f"{event}," + ",".join(cells))
    lines.append("MAP," + ",".join(f"{reports[m].mean_ap:.4f}" for m in methods))
    Path(path).write_text("\n".join(lines) + "\n")
