"""Synthetic weakly labeled MIL datasets with hidden instance-level truth.

Positive bags mix instances drawn from a "concept" mixture into a
"background" population; negative bags are background only.  Because the
per-instance truth is recorded, these datasets act as ground-truth oracles
for end-to-end detector tests that real weakly labeled audio cannot provide.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from weakmil.core import Dataset, save_manifest, BagManifestEntry, EventLabel, Presence
from weakmil.dsp import write_features
from weakmil.gmm import GmmModel, sample

__all__ = [
    "SynthConfig",
    "SynthDataset",
    "generate",
    "separated_mixtures",
    "save_dataset",
]


@dataclass(frozen=True)
class SynthConfig:
    """Generator parameters.

    Every positive bag receives ceil(witness_rate * size) concept instances,
    so the at-least-one-positive-instance premise holds by construction.
    Bags are generated from independent seed streams derived from (seed,
    bag index), making datasets byte-identical per seed.
    """

    n_bags: int
    bag_size_range: tuple[int, int]
    witness_rate: float
    D: int
    concept: GmmModel
    background: GmmModel
    noise_sigma: float = 0.0
    seed: int = 0
    positive_fraction: float = 0.5
    event: str = "concept"

    def __post_init__(self) -> None:
        lo, hi = self.bag_size_range
        if not (0 < self.witness_rate <= 1):
            raise ValueError(f"witness_rate must be in (0, 1], got {self.witness_rate}")
        if lo < 1 or lo > hi:
            raise ValueError(f"invalid bag_size_range {self.bag_size_range}")
        if self.n_bags < 2:
            raise ValueError("need at least 2 bags (one per class)")
        if self.concept.D != self.D or self.background.D != self.D:
            raise ValueError("concept/background dimension must match D")
        if not (0 < self.positive_fraction < 1):
            raise ValueError("positive_fraction must be in (0, 1)")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")


@dataclass
class SynthDataset:
    """Generated bags, weak labels, and the hidden per-instance truth."""

    bag_ids: list[str]
    bags: list[np.ndarray]
    labels: dict[str, dict[str, int]]
    truth: list[np.ndarray]  # bool per instance; True = drawn from the concept
    seed: int

    def as_dataset(self) -> Dataset:
        return Dataset(self.bag_ids, self.bags, self.labels)


def separated_mixtures(
    D: int,
    distance: float,
    variance: float = 1.0,
    background_lobes: int = 1,
    lobe_radius: float = 0.0,
    layout_seed: int = 123,
) -> tuple[GmmModel, GmmModel]:
    """Concept/background mixture pair whose means sit `distance` apart.

    The concept is one Gaussian offset evenly over dimensions so its
    Euclidean distance from the background mean is exactly `distance` (in
    units of the shared per-dimension standard deviation when variance=1).
    With background_lobes > 1 the background becomes an equal-weight mixture
    of lobes placed on random directions at `lobe_radius` and re-centered so
    its overall mean stays at the origin; a lobed background denies the
    instance-space mixture a dedicated concept component, which is what
    makes bag encodings of positive bags linearly separable.
    """
    if background_lobes < 1:
        raise ValueError("background_lobes must be >= 1")
    if background_lobes == 1:
        bg_means = np.zeros((1, D))
    else:
        rng = np.random.default_rng(layout_seed)
        dirs = rng.standard_normal((background_lobes, D))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        bg_means = lobe_radius * dirs
        bg_means -= bg_means.mean(axis=0)
    background = GmmModel(
        np.full(background_lobes, 1.0 / background_lobes),
        bg_means,
        np.full((background_lobes, D), variance),
    )
    offset = np.full((1, D), distance / math.sqrt(D))
    concept = GmmModel(np.ones(1), offset, np.full((1, D), variance))
    return concept, background


def generate(cfg: SynthConfig) -> SynthDataset:
    """Generate a weakly labeled dataset with recorded instance truth.

    Negative bags draw every instance from the background mixture; positive
    bags replace ceil(witness_rate * size) instances with concept draws at
    shuffled positions.  Additive N(0, noise_sigma^2) noise is applied to
    all instances when noise_sigma > 0.
    """
    master = np.random.default_rng(cfg.seed)
    n_pos = int(round(cfg.n_bags * cfg.positive_fraction))
    n_pos = min(max(n_pos, 1), cfg.n_bags - 1)
    is_positive = np.zeros(cfg.n_bags, dtype=bool)
    is_positive[master.permutation(cfg.n_bags)[:n_pos]] = True

    lo, hi = cfg.bag_size_range
    width = len(str(cfg.n_bags - 1))
    bag_ids = [f"bag{i:0{max(width, 4)}d}" for i in range(cfg.n_bags)]
    bags: list[np.ndarray] = []
    truth: list[np.ndarray] = []
    labels: dict[str, int] = {}
    for i in range(cfg.n_bags):
        rng = np.random.default_rng((cfg.seed, i))
        size = int(rng.integers(lo, hi + 1))
        if is_positive[i]:
            n_wit = math.ceil(cfg.witness_rate * size)
            concept_rows = sample(cfg.concept, n_wit, rng)
            background_rows = sample(cfg.background, size - n_wit, rng)
            mat = np.vstack([concept_rows, background_rows]) if size > n_wit else concept_rows
            hidden = np.concatenate([np.ones(n_wit, bool), np.zeros(size - n_wit, bool)])
            order = rng.permutation(size)
            mat = mat[order]
            hidden = hidden[order]
        else:
            mat = sample(cfg.background, size, rng)
            hidden = np.zeros(size, bool)
        if cfg.noise_sigma > 0:
            mat = mat + cfg.noise_sigma * rng.standard_normal(mat.shape)
        bags.append(np.ascontiguousarray(mat))
        truth.append(hidden)
        labels[bag_ids[i]] = 1 if is_positive[i] else -1

    return SynthDataset(bag_ids, bags, {cfg.event: labels}, truth, cfg.seed)


def save_dataset(ds: SynthDataset, out_dir: str | Path) -> None:
    """Write manifest, per-bag feature matrices, and the truth sidecar.

    The layout matches the real-audio pipeline's outputs (JSON-lines
    manifest plus feature files named by bag id), so downstream stages run
    unchanged.  Training code must never read truth.json.
    """
    out = Path(out_dir)
    feat_dir = out / "features"
    feat_dir.mkdir(parents=True, exist_ok=True)

    entries = []
    for bag_id, mat in zip(ds.bag_ids, ds.bags):
        rel = f"features/{bag_id}.feat"
        write_features(out / rel, mat)
        labs = tuple(
            EventLabel(event, Presence.POSITIVE if per_bag[bag_id] == 1 else Presence.NEGATIVE)
            for event, per_bag in ds.labels.items()
            if bag_id in per_bag
        )
        entries.append(BagManifestEntry(bag_id, rel, labs))
    save_manifest(entries, out / "manifest.jsonl")

    truth = {bag_id: mask.astype(int).tolist() for bag_id, mask in zip(ds.bag_ids, ds.truth)}
    (out / "truth.json").write_text(json.dumps({"seed": ds.seed, "instances": truth}, indent=2))
