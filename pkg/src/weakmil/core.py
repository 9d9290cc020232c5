"""Data model, manifest ingestion, segmentation planning, and fold splitting."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Presence",
    "EventLabel",
    "BagManifestEntry",
    "SegmentPlan",
    "FoldPlan",
    "Dataset",
    "ManifestError",
    "load_manifest",
    "save_manifest",
    "plan_segments",
    "split_folds",
    "save_fold_plan",
    "load_fold_plan",
]


class ManifestError(ValueError):
    """A manifest file violates the expected JSON-lines format."""


class Presence(Enum):
    """Ternary weak-label state of one event for one recording."""

    POSITIVE = "positive"
    NEGATIVE = "negative"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class EventLabel:
    """Recording-level presence tag for a single named event."""

    name: str
    present: Presence

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("event name must be non-empty")
        if not isinstance(self.present, Presence):
            raise TypeError(f"present must be a Presence, got {self.present!r}")


@dataclass(frozen=True)
class BagManifestEntry:
    """One recording (bag) with its audio location and weak labels."""

    bag_id: str
    audio_path: str
    labels: tuple[EventLabel, ...]

    def label_for(self, event: str) -> Presence:
        """Label state of `event` for this bag; absent events are UNKNOWN."""
        for lab in self.labels:
            if lab.name == event:
                return lab.present
        return Presence.UNKNOWN

    def events(self) -> list[str]:
        return [lab.name for lab in self.labels]


@dataclass(frozen=True)
class SegmentPlan:
    """Fixed-window segmentation of one recording.

    `segments` holds (start_s, end_s) pairs ordered by start.  `short` is set
    when the recording was shorter than one window and the single segment was
    clamped to the recording length.
    """

    window_s: float
    hop_s: float
    segments: tuple[tuple[float, float], ...]
    short: bool = False


@dataclass(frozen=True)
class FoldPlan:
    """Assignment of every bag to exactly one cross-validation fold."""

    n_folds: int
    assignment: Mapping[str, int]

    def fold_of(self, bag_id: str) -> int:
        return self.assignment[bag_id]

    def test_ids(self, fold: int) -> list[str]:
        return [b for b, f in self.assignment.items() if f == fold]

    def train_ids(self, fold: int) -> list[str]:
        return [b for b, f in self.assignment.items() if f != fold]


@dataclass
class Dataset:
    """In-memory bags (instance matrices) with per-event weak labels.

    `labels[event][bag_id]` is +1 or -1; bags absent from an event's map are
    unknown for that event and excluded from its train/test pools.
    """

    bag_ids: list[str]
    bags: list[np.ndarray]
    labels: dict[str, dict[str, int]]

    def __post_init__(self) -> None:
        if len(self.bag_ids) != len(self.bags):
            raise ValueError("bag_ids and bags must have the same length")
        if len(set(self.bag_ids)) != len(self.bag_ids):
            raise ValueError("duplicate bag_id in dataset")

    @property
    def events(self) -> list[str]:
        return sorted(self.labels)

    def bag(self, bag_id: str) -> np.ndarray:
        return self.bags[self.bag_ids.index(bag_id)]

    def known_ids(self, event: str) -> list[str]:
        """Bags with a +1/-1 label for `event`, in dataset order."""
        known = self.labels.get(event, {})
        return [b for b in self.bag_ids if b in known]

    def label_of(self, event: str, bag_id: str) -> int | None:
        return self.labels.get(event, {}).get(bag_id)


def load_manifest(path: str | Path) -> list[BagManifestEntry]:
    """Read a JSON-lines manifest: one {"bag_id", "audio", "labels"} per line.

    Label maps use +1 / -1 values; events absent from a bag's map are
    unknown.  Repeated events within one record keep the last value.

    Raises FileNotFoundError for a missing file and ManifestError (with the
    offending line number) for malformed records or duplicate bag ids.
    """
    entries: list[BagManifestEntry] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(rec, dict):
                raise ManifestError(f"{path}: line {lineno}: record is not an object")
            bag_id = rec.get("bag_id")
            audio = rec.get("audio")
            raw_labels = rec.get("labels", {})
            if not isinstance(bag_id, str) or not bag_id:
                raise ManifestError(f"{path}: line {lineno}: missing or empty bag_id")
            if not isinstance(audio, str):
                raise ManifestError(f"{path}: line {lineno}: missing audio path")
            if not isinstance(raw_labels, dict):
                raise ManifestError(f"{path}: line {lineno}: labels must be an object")
            if bag_id in seen:
                raise ManifestError(f"{path}: line {lineno}: duplicate bag_id {bag_id!r}")
            seen.add(bag_id)
            labels = []
            for name, value in raw_labels.items():
                if value == 1:
                    labels.append(EventLabel(name, Presence.POSITIVE))
                elif value == -1:
                    labels.append(EventLabel(name, Presence.NEGATIVE))
                else:
                    raise ManifestError(
                        f"{path}: line {lineno}: label for {name!r} must be 1 or -1, got {value!r}"
                    )
            entries.append(BagManifestEntry(bag_id, audio, tuple(labels)))
    return entries


def save_manifest(entries: Iterable[BagManifestEntry], path: str | Path) -> None:
    """Write entries as JSON lines; unknown labels are omitted by construction."""
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            labels = {
                lab.name: (1 if lab.present is Presence.POSITIVE else -1)
                for lab in e.labels
                if lab.present is not Presence.UNKNOWN
            }
            fh.write(json.dumps({"bag_id": e.bag_id, "audio": e.audio_path, "labels": labels}))
            fh.write("\n")


def plan_segments(duration_s: float, window_s: float, hop_s: float) -> SegmentPlan:
    """Plan overlapping fixed-length segments over a recording.

    For duration >= window the count is floor((duration - window) / hop) + 1.
    A recording shorter than one window yields a single segment clamped to
    [0, duration] and flagged short, so every bag keeps at least one instance.
    """
    if duration_s <= 0:
        raise ValueError(f"duration_s must be positive, got {duration_s}")
    if hop_s <= 0:
        raise ValueError(f"hop_s must be positive, got {hop_s}")
    if window_s <= 0:
        raise ValueError(f"window_s must be positive, got {window_s}")
    if hop_s > window_s:
        raise ValueError(f"hop_s ({hop_s}) must not exceed window_s ({window_s})")

    if duration_s < window_s:
        return SegmentPlan(window_s, hop_s, ((0.0, duration_s),), short=True)

    # 1e-9 relative slack absorbs float fuzz in (duration - window) / hop.
    n = int(math.floor((duration_s - window_s) / hop_s + 1e-9)) + 1
    segments = tuple(
        (i * hop_s, min(i * hop_s + window_s, duration_s)) for i in range(n)
    )
    return SegmentPlan(window_s, hop_s, segments)


def split_folds(
    bag_ids: Sequence[str],
    n_folds: int,
    seed: int,
    stratify_labels: Mapping[str, int] | None = None,
) -> FoldPlan:
    """Randomly partition bags into folds whose sizes differ by at most one.

    Deterministic for a fixed seed.  When `stratify_labels` maps bag ids to
    +1/-1, each class is dealt round-robin separately so positives spread
    evenly across folds; the default is plain uniform assignment.
    """
    ids = list(bag_ids)
    if n_folds < 2:
        raise ValueError(f"n_folds must be >= 2, got {n_folds}")
    if len(ids) < n_folds:
        raise ValueError(f"need at least {n_folds} bags, got {len(ids)}")
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate bag ids")

    rng = np.random.default_rng(seed)
    assignment: dict[str, int] = {}
    cursor = 0
    if stratify_labels is None:
        groups = [ids]
    else:
        pos = [b for b in ids if stratify_labels.get(b) == 1]
        rest = [b for b in ids if stratify_labels.get(b) != 1]
        groups = [pos, rest]
    for group in groups:
        order = rng.permutation(len(group))
        for idx in order:
            assignment[group[idx]] = cursor % n_folds
            cursor += 1
    # report in input order for stable serialization
    assignment = {b: assignment[b] for b in ids}

    counts = [0] * n_folds
    for f in assignment.values():
        counts[f] += 1
    if min(counts) == 0:
        raise ValueError("empty fold produced; too few bags")
    return FoldPlan(n_folds, assignment)


def save_fold_plan(plan: FoldPlan, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"n_folds": plan.n_folds, "assignment": dict(plan.assignment)}, fh, indent=2)


def load_fold_plan(path: str | Path) -> FoldPlan:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    return FoldPlan(int(raw["n_folds"]), {str(k): int(v) for k, v in raw["assignment"].items()})
