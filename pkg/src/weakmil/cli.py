"""Command-line pipeline: features, ubm, encode, train, eval, sweep, bench, synth.

Configuration comes from built-in defaults, an optional TOML or JSON config
file, and command-line flags, in that order of precedence (flags win).
Every run writes its fully resolved configuration as JSON next to its
outputs; re-running with `--config` on that frozen copy reproduces the
outputs byte for byte given the same inputs.

All randomness flows from the single top-level seed: per-stage seeds are
derived as (seed * 1000003 + crc32(stage_name)) mod 2^31, and the
experiment driver derives its per-fold mixture seeds from its own seed as
documented in `weakmil.evaluation`.

Exit codes: 0 full success, 1 partial failure (some inputs failed), 2
configuration error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import logging
import sys
import zlib
from copy import deepcopy
from pathlib import Path
from typing import Sequence

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ImportError:  # pragma: no cover
    import tomli as tomllib

from weakmil import core, dsp, encode, evaluation, gmm, milsvm, synth

__all__ = ["main", "load_dataset", "ConfigError", "DEFAULTS"]

logger = logging.getLogger("weakmil")


class ConfigError(ValueError):
    """Invalid or inconsistent pipeline configuration."""


DEFAULTS: dict = {
    "manifest": "",
    "algorithm": "mifv",
    "seed": 0,
    "segment": {"window_s": 1.0, "hop_s": 0.5},
    "mfcc": {
        "n_coeffs": 21,
        "frame_len_s": 0.020,
        "frame_hop_s": 0.010,
        "n_mel_filters": 26,
        "pre_emphasis": 0.97,
        "log_floor": 1e-10,
    },
    "audio_words": {"m": 64, "max_iters": 50, "rel_tol": 1e-5, "max_frames": 500_000},
    "encoder": {"k": 4, "relevance_r": 16.0, "ifv": True},
    "svm": {"c": 1.0, "max_outer_iters": 50, "solver_tol": 0.1, "solver_max_iters": 1000},
    "gmm": {"max_iters": 100, "rel_tol": 1e-5},
    "folds": {"n": 4},
    "synth": {
        "n_bags": 200,
        "bag_size_min": 10,
        "bag_size_max": 30,
        "witness_rate": 0.2,
        "d": 8,
        "separation": 4.0,
        "background_lobes": 4,
        "lobe_radius": 6.0,
        "noise_sigma": 0.0,
        "positive_fraction": 0.5,
        "event": "concept",
    },
}


def stage_seed(base: int, stage: str) -> int:
    return (base * 1000003 + zlib.crc32(stage.encode())) % (2**31)


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config_file(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        if path.suffix == ".json":
            return json.loads(path.read_text())
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc


def _mfcc_config(cfg: dict) -> dsp.MfccConfig:
    m = cfg["mfcc"]
    return dsp.MfccConfig(
        n_coeffs=int(m["n_coeffs"]),
        frame_len_s=float(m["frame_len_s"]),
        frame_hop_s=float(m["frame_hop_s"]),
        n_mel_filters=int(m["n_mel_filters"]),
        pre_emphasis=float(m["pre_emphasis"]),
        log_floor=float(m["log_floor"]),
    )


def _mil_config(cfg: dict) -> milsvm.MilTrainConfig:
    s = cfg["svm"]
    return milsvm.MilTrainConfig(
        C=float(s["c"]),
        max_outer_iters=int(s["max_outer_iters"]),
        solver_tol=float(s["solver_tol"]),
        solver_max_iters=int(s["solver_max_iters"]),
    )


def _experiment_config(cfg: dict, algorithm: str, seed: int) -> evaluation.ExperimentConfig:
    enc = cfg["encoder"]
    return evaluation.ExperimentConfig(
        algorithm=algorithm,
        K=int(enc["k"]),
        relevance_r=float(enc["relevance_r"]),
        ifv=bool(enc["ifv"]),
        mil=_mil_config(cfg),
        gmm_max_iters=int(cfg["gmm"]["max_iters"]),
        gmm_rel_tol=float(cfg["gmm"]["rel_tol"]),
        seed=seed,
    )


def load_dataset(manifest_path: str | Path, features_dir: str | Path | None = None) -> core.Dataset:
    """Assemble a Dataset from a manifest plus per-bag feature-matrix files.

    Feature files are looked up as <features_dir>/<bag_id>.feat, falling
    back to the manifest's audio field (relative to the manifest directory)
    when it already points at a feature file.
    """
    manifest_path = Path(manifest_path)
    entries = core.load_manifest(manifest_path)
    feat_dir = Path(features_dir) if features_dir else manifest_path.parent / "features"

    bag_ids: list[str] = []
    bags: list[np.ndarray] = []
    labels: dict[str, dict[str, int]] = {}
    for entry in entries:
        candidate = feat_dir / f"{entry.bag_id}.feat"
        if not candidate.exists() and entry.audio_path.endswith(".feat"):
            candidate = manifest_path.parent / entry.audio_path
        if not candidate.exists():
            raise FileNotFoundError(f"no feature matrix for bag {entry.bag_id!r} ({candidate})")
        bag_ids.append(entry.bag_id)
        bags.append(dsp.read_features(candidate))
        for lab in entry.labels:
            value = 1 if lab.present is core.Presence.POSITIVE else -1
            labels.setdefault(lab.name, {})[entry.bag_id] = value
    return core.Dataset(bag_ids, bags, labels)


def _freeze_config(cfg: dict, command: str, out: Path) -> None:
    frozen = dict(cfg)
    frozen["command"] = command
    (out / f"{command}_config.json").write_text(json.dumps(frozen, indent=2, sort_keys=True))


def _sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _sha256_json(obj) -> str:
    return _sha256_bytes(json.dumps(obj, sort_keys=True).encode())


# ---------------------------------------------------------------------------
# subcommands


def _require_manifest(cfg: dict) -> Path:
    manifest = cfg.get("manifest") or ""
    if not manifest:
        raise ConfigError("no manifest configured (set --manifest or the manifest config key)")
    path = Path(manifest)
    if not path.exists():
        raise ConfigError(f"manifest not found: {path}")
    return path


def cmd_synth(cfg: dict, args: argparse.Namespace, out: Path) -> int:
    s = cfg["synth"]
    concept, background = synth.separated_mixtures(
        int(s["d"]),
        float(s["separation"]),
        background_lobes=int(s["background_lobes"]),
        lobe_radius=float(s["lobe_radius"]),
    )
    scfg = synth.SynthConfig(
        n_bags=int(s["n_bags"]),
        bag_size_range=(int(s["bag_size_min"]), int(s["bag_size_max"])),
        witness_rate=float(s["witness_rate"]),
        D=int(s["d"]),
        concept=concept,
        background=background,
        noise_sigma=float(s["noise_sigma"]),
        seed=stage_seed(cfg["seed"], "synth"),
        positive_fraction=float(s["positive_fraction"]),
        event=str(s["event"]),
    )
    ds = synth.generate(scfg)
    synth.save_dataset(ds, out)
    n_pos = sum(1 for v in ds.labels[scfg.event].values() if v == 1)
    print(f"wrote {scfg.n_bags} bags ({n_pos} positive) for event {scfg.event!r} under {out}")
    return 0


def _fit_audio_words(
    entries: list[core.BagManifestEntry],
    manifest_dir: Path,
    cfg: dict,
    model_path: Path,
) -> tuple[gmm.GmmModel, list[tuple[str, str]]]:
    mfcc_cfg = _mfcc_config(cfg)
    aw = cfg["audio_words"]
    failures: list[tuple[str, str]] = []
    frames = []
    for entry in entries:
        try:
            wav = dsp.read_wav(_resolve_audio(entry, manifest_dir))
            frames.append(dsp.mfcc(wav, mfcc_cfg))
        except (OSError, ValueError) as exc:
            failures.append((entry.bag_id, str(exc)))
    if not frames:
        raise ConfigError("no readable audio to fit the audio-word codebook")
    data = np.vstack(frames)
    seed = stage_seed(cfg["seed"], "audio-words")
    max_frames = int(aw["max_frames"])
    if data.shape[0] > max_frames:
        keep = np.random.default_rng(seed).choice(data.shape[0], max_frames, replace=False)
        data = data[np.sort(keep)]
    model = gmm.fit_gmm(
        data,
        gmm.GmmFitConfig(
            K=int(aw["m"]), max_iters=int(aw["max_iters"]), rel_tol=float(aw["rel_tol"]), seed=seed
        ),
    )
    model_path.parent.mkdir(parents=True, exist_ok=True)
    gmm.save_gmm(model_path, model)
    return model, failures


def _resolve_audio(entry: core.BagManifestEntry, manifest_dir: Path) -> Path:
    path = Path(entry.audio_path)
    return path if path.is_absolute() else manifest_dir / path


def cmd_features(cfg: dict, args: argparse.Namespace, out: Path) -> int:
    manifest_path = _require_manifest(cfg)
    entries = core.load_manifest(manifest_path)
    feat_dir = out / "features"
    feat_dir.mkdir(parents=True, exist_ok=True)

    codebook_path = out / "models" / f"audio_words_m{cfg['audio_words']['m']}.gmm"
    if codebook_path.exists():
        codebook = gmm.load_gmm(codebook_path)
        fit_failures: list[tuple[str, str]] = []
    else:
        codebook, fit_failures = _fit_audio_words(entries, manifest_path.parent, cfg, codebook_path)
    codebook_sha = _sha256_bytes(codebook_path.read_bytes())
    config_sha = _sha256_json({"segment": cfg["segment"], "mfcc": cfg["mfcc"], "m": cfg["audio_words"]["m"]})

    seg = cfg["segment"]
    mfcc_cfg = _mfcc_config(cfg)

    def process(entry: core.BagManifestEntry) -> str | None:
        """Returns 'written', 'skipped', or raises on failure."""
        audio_path = _resolve_audio(entry, manifest_path.parent)
        out_path = feat_dir / f"{entry.bag_id}.feat"
        meta_path = feat_dir / f"{entry.bag_id}.feat.json"
        audio_sha = _sha256_bytes(Path(audio_path).read_bytes())
        meta = {"audio_sha256": audio_sha, "config_sha256": config_sha, "codebook_sha256": codebook_sha}
        if out_path.exists() and meta_path.exists():
            if json.loads(meta_path.read_text()) == meta:
                return "skipped"
        wav = dsp.read_wav(audio_path)
        plan = core.plan_segments(wav.duration_s, float(seg["window_s"]), float(seg["hop_s"]))
        rows = []
        for start, end in plan.segments:
            lo = round(start * wav.sample_rate)
            hi = round(end * wav.sample_rate)
            segment = dsp.Waveform(wav.samples[lo:hi], wav.sample_rate)
            rows.append(gmm.soft_count(codebook, dsp.mfcc(segment, mfcc_cfg)))
        dsp.write_features(out_path, np.vstack(rows))
        meta_path.write_text(json.dumps(meta, indent=2))
        return "written"

    failures = list(fit_failures)
    written = skipped = 0
    with concurrent.futures.ThreadPoolExecutor(max_workers=args.jobs) as pool:
        futures = {pool.submit(process, e): e for e in entries}
        for fut in concurrent.futures.as_completed(futures):
            entry = futures[fut]
            try:
                status = fut.result()
            except (OSError, ValueError) as exc:
                failures.append((entry.bag_id, str(exc)))
                continue
            if status == "written":
                written += 1
            else:
                skipped += 1

    print(f"features: {written} written, {skipped} up to date, {len(failures)} failed")
    for bag_id, msg in failures:
        print(f"  FAILED {bag_id}: {msg}", file=sys.stderr)
    return 1 if failures else 0


def cmd_ubm(cfg: dict, args: argparse.Namespace, out: Path) -> int:
    feat_dir = Path(args.features) if args.features else out / "features"
    files = sorted(feat_dir.glob("*.feat"))
    if not files:
        raise ConfigError(f"no feature files under {feat_dir}")
    data = np.vstack([dsp.read_features(f) for f in files])
    k = int(cfg["encoder"]["k"])
    model = gmm.fit_gmm(
        data,
        gmm.GmmFitConfig(
            K=k,
            max_iters=int(cfg["gmm"]["max_iters"]),
            rel_tol=float(cfg["gmm"]["rel_tol"]),
            seed=stage_seed(cfg["seed"], "ubm"),
        ),
    )
    model_path = Path(args.model_out) if args.model_out else out / "models" / f"ubm_k{k}.gmm"
    model_path.parent.mkdir(parents=True, exist_ok=True)
    gmm.save_gmm(model_path, model)
    print(f"fitted K={k} mixture on {data.shape[0]} instances -> {model_path}")
    return 0


def _encoder_from_cfg(cfg: dict, algorithm: str) -> encode.EncoderConfig:
    exp = _experiment_config(cfg, algorithm, cfg["seed"])
    enc = exp.encoder()
    if enc is None:
        raise ConfigError(f"algorithm {algorithm!r} does not use a bag encoder")
    return enc


def cmd_encode(cfg: dict, args: argparse.Namespace, out: Path) -> int:
    algorithm = cfg["algorithm"]
    enc_cfg = _encoder_from_cfg(cfg, algorithm)
    k = int(cfg["encoder"]["k"])
    ubm_path = Path(args.ubm) if args.ubm else out / "models" / f"ubm_k{k}.gmm"
    if not ubm_path.exists():
        raise ConfigError(f"mixture model not found: {ubm_path} (run the ubm command first)")
    ubm = gmm.load_gmm(ubm_path)

    feat_dir = Path(args.features) if args.features else out / "features"
    files = sorted(feat_dir.glob("*.feat"))
    if not files:
        raise ConfigError(f"no feature files under {feat_dir}")
    enc_dir = out / "encoded"
    enc_dir.mkdir(parents=True, exist_ok=True)

    failures = []
    for f in files:
        try:
            vec = encode.encode_bag(ubm, dsp.read_features(f), enc_cfg)
            encode.save_encoded(enc_dir / f"{f.stem}.enc", vec, enc_cfg.kind)
        except (OSError, ValueError) as exc:
            failures.append((f.stem, str(exc)))
    print(f"encoded {len(files) - len(failures)} bags ({algorithm}), {len(failures)} failed")
    for bag_id, msg in failures:
        print(f"  FAILED {bag_id}: {msg}", file=sys.stderr)
    return 1 if failures else 0


def cmd_train(cfg: dict, args: argparse.Namespace, out: Path) -> int:
    manifest_path = _require_manifest(cfg)
    algorithm = cfg["algorithm"]
    dataset = load_dataset(manifest_path, args.features or out / "features")
    events = [args.event] if args.event else dataset.events
    mil_cfg = _mil_config(cfg)
    model_dir = out / "models"
    model_dir.mkdir(parents=True, exist_ok=True)

    for event in events:
        known = dataset.known_ids(event)
        y = np.asarray([dataset.label_of(event, b) for b in known])
        if (y == 1).sum() == 0 or (y == -1).sum() == 0:
            raise ConfigError(f"event {event!r} lacks a class; cannot train")
        if algorithm in ("misvm", "MISVM"):
            bags = [dataset.bag(b) for b in known]
            trainer = milsvm.train_misvm if algorithm == "misvm" else milsvm.train_MISVM
            model, state = trainer(bags, y, mil_cfg)
            iterations, converged = state.iteration, state.converged
        else:
            enc_dir = Path(args.encoded) if args.encoded else out / "encoded"
            vectors = []
            for b in known:
                path = enc_dir / f"{b}.enc"
                if not path.exists():
                    raise ConfigError(f"missing encoded bag {path} (run the encode command first)")
                vectors.append(encode.load_encoded(path)[0])
            model = milsvm.train_linear_svm(np.vstack(vectors), y.astype(float), mil_cfg)
            iterations, converged = 1, True
        model_path = model_dir / f"{event}_{algorithm}.svm"
        milsvm.save_linear_model(model_path, model, iterations=iterations, converged=converged)
        print(f"trained {algorithm} for {event!r} on {len(known)} bags -> {model_path}")
    return 0


def _folds_for(cfg: dict, args: argparse.Namespace, dataset: core.Dataset, out: Path) -> core.FoldPlan:
    if getattr(args, "folds", None):
        return core.load_fold_plan(args.folds)
    plan = core.split_folds(dataset.bag_ids, int(cfg["folds"]["n"]), stage_seed(cfg["seed"], "folds"))
    core.save_fold_plan(plan, out / "folds.json")
    return plan


def cmd_eval(cfg: dict, args: argparse.Namespace, out: Path) -> int:
    manifest_path = _require_manifest(cfg)
    dataset = load_dataset(manifest_path, args.features or None)
    folds = _folds_for(cfg, args, dataset, out)
    exp = _experiment_config(cfg, cfg["algorithm"], cfg["seed"])
    events = args.events.split(",") if args.events else None
    report = evaluation.run_experiment(dataset, exp, folds, events=events)

    eval_dir = out / "eval"
    eval_dir.mkdir(parents=True, exist_ok=True)
    report_path = eval_dir / f"{exp.algorithm}_report.json"
    report_path.write_text(report.to_json())
    evaluation.export_ap_csv({exp.algorithm: report}, eval_dir / f"{exp.algorithm}_ap.csv")

    for event in sorted(report.per_event_ap):
        print(f"AP[{event}] = {report.per_event_ap[event]:.4f}")
    print(f"MAP({exp.algorithm}) = {report.mean_ap:.4f}  ->  {report_path}")
    return 0


def _parse_grid(text: str | None, cast, default: list) -> list:
    if not text:
        return default
    try:
        return [cast(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad grid {text!r}: {exc}") from exc


def cmd_sweep(cfg: dict, args: argparse.Namespace, out: Path) -> int:
    manifest_path = _require_manifest(cfg)
    dataset = load_dataset(manifest_path, args.features or None)
    folds = _folds_for(cfg, args, dataset, out)

    algorithms = args.algorithms.split(",") if args.algorithms else [cfg["algorithm"]]
    k_grid = _parse_grid(args.k_grid, int, [1, 4, 8, 16, 32, 64, 128])
    r_grid = _parse_grid(args.r_grid, float, [float(cfg["encoder"]["relevance_r"])])
    c_grid = _parse_grid(args.c_grid, float, [float(cfg["svm"]["c"])])
    if not k_grid or not r_grid or not c_grid or not algorithms:
        raise ConfigError("sweep grids must be non-empty")

    sweep_dir = out / "sweep"
    sweep_dir.mkdir(parents=True, exist_ok=True)

    points = []
    for algorithm in algorithms:
        if algorithm in ("misvm", "MISVM"):
            # instance-level methods ignore K and r; sweep C only
            points.extend((algorithm, k_grid[0], r_grid[0], c) for c in c_grid)
        else:
            points.extend(
                (algorithm, k, r, c) for k in k_grid for r in r_grid for c in c_grid
            )

    def run_point(point):
        algorithm, k, r, c = point
        local = _deep_merge(cfg, {"encoder": {"k": k, "relevance_r": r}, "svm": {"c": c}})
        exp = _experiment_config(local, algorithm, cfg["seed"])
        report = evaluation.run_experiment(dataset, exp, folds)
        name = f"{algorithm}_K{k}_r{r:g}_C{c:g}.json"
        (sweep_dir / name).write_text(report.to_json())
        return point, report

    results = {}
    with concurrent.futures.ThreadPoolExecutor(max_workers=args.jobs) as pool:
        for point, report in pool.map(run_point, points):
            results[point] = report

    events = sorted({e for rep in results.values() for e in rep.per_event_ap})
    for algorithm in algorithms:
        algo_ks = sorted({k for (a, k, _r, _c) in results if a == algorithm})
        lines = ["event," + ",".join(f"K={k}" for k in algo_ks)]
        for event in events:
            cells = []
            for k in algo_ks:
                aps = [
                    rep.per_event_ap[event]
                    for (a, kk, _r, _c), rep in results.items()
                    if a == algorithm and kk == k and event in rep.per_event_ap
                ]
                cells.append(f"{max(aps):.4f}" if aps else "")
            lines.append(f"{event}," + ",".join(cells))
        summary = sweep_dir / f"summary_{algorithm}.csv"
        summary.write_text("\n".join(lines) + "\n")
        print(f"sweep: {summary}")
    print(f"sweep: {len(points)} grid points -> {sweep_dir}")
    return 0


def cmd_bench(cfg: dict, args: argparse.Namespace, out: Path) -> int:
    manifest_path = _require_manifest(cfg)
    dataset = load_dataset(manifest_path, args.features or None)
    folds = _folds_for(cfg, args, dataset, out)
    names = args.algorithms.split(",") if args.algorithms else ["misvm", "MISVM", "mifv", "misup"]
    for name in names:
        if name not in evaluation.ALGORITHMS:
            raise ConfigError(f"unknown algorithm {name!r}")
    configs = [_experiment_config(cfg, name, cfg["seed"]) for name in names]
    report = evaluation.benchmark_training(configs, dataset, folds)
    bench_path = out / "bench.json"
    bench_path.write_text(report.to_json())
    print(f"{'algorithm':<10} {'mean train s':>14} {'log10 s':>9}")
    for name in names:
        entry = report.entries[name]
        print(f"{name:<10} {entry['mean_train_s']:>14.3f} {entry['log10_mean_train_s']:>9.3f}")
    print(f"-> {bench_path}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="weakmil",
        description="Weakly supervised audio event detection with multiple instance learning.",
    )
    parser.add_argument("--config", help="TOML or JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="top-level random seed")
    parser.add_argument("--out", default="out", help="output directory (default: out)")
    parser.add_argument("--jobs", type=int, default=1, help="worker pool size (default: 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic weakly labeled dataset")
    p.set_defaults(func=cmd_synth)
    p.add_argument("--n-bags", type=int, default=None)
    p.add_argument("--witness-rate", type=float, default=None)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--separation", type=float, default=None)

    p = sub.add_parser("features", help="audio -> per-bag instance matrices")
    p.set_defaults(func=cmd_features)
    p.add_argument("--manifest", default=None)
    p.add_argument("--m", type=int, default=None, help="audio-word codebook size")

    p = sub.add_parser("ubm", help="fit the instance-space mixture used by encoders")
    p.set_defaults(func=cmd_ubm)
    p.add_argument("--features", default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--model-out", default=None)

    p = sub.add_parser("encode", help="encode bags to fixed-length vectors")
    p.set_defaults(func=cmd_encode)
    p.add_argument("--features", default=None)
    p.add_argument("--ubm", default=None)
    p.add_argument("--algorithm", default=None, choices=list(evaluation.ALGORITHMS))

    p = sub.add_parser("train", help="train detectors for one or all events")
    p.set_defaults(func=cmd_train)
    p.add_argument("--manifest", default=None)
    p.add_argument("--features", default=None)
    p.add_argument("--encoded", default=None)
    p.add_argument("--event", default=None)
    p.add_argument("--algorithm", default=None, choices=list(evaluation.ALGORITHMS))

    p = sub.add_parser("eval", help="cross-fold evaluation with pooled ranking")
    p.set_defaults(func=cmd_eval)
    p.add_argument("--manifest", default=None)
    p.add_argument("--features", default=None)
    p.add_argument("--folds", default=None, help="existing fold plan JSON")
    p.add_argument("--events", default=None, help="comma-separated event subset")
    p.add_argument("--algorithm", default=None, choices=list(evaluation.ALGORITHMS))
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--r", type=float, default=None)
    p.add_argument("--svm-c", type=float, default=None)

    p = sub.add_parser("sweep", help="grid sweep over K, r, and C")
    p.set_defaults(func=cmd_sweep)
    p.add_argument("--manifest", default=None)
    p.add_argument("--features", default=None)
    p.add_argument("--folds", default=None)
    p.add_argument("--algorithms", default=None, help="comma-separated algorithm list")
    p.add_argument("--k-grid", default=None, help="comma-separated K values")
    p.add_argument("--r-grid", default=None)
    p.add_argument("--c-grid", default=None)

    p = sub.add_parser("bench", help="wall-clock training-time comparison")
    p.set_defaults(func=cmd_bench)
    p.add_argument("--manifest", default=None)
    p.add_argument("--features", default=None)
    p.add_argument("--folds", default=None)
    p.add_argument("--algorithms", default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--r", type=float, default=None)
    p.add_argument("--svm-c", type=float, default=None)

    return parser


def _apply_flag_overrides(cfg: dict, args: argparse.Namespace) -> dict:
    overrides: dict = {}
    if getattr(args, "manifest", None):
        overrides["manifest"] = args.manifest
    if getattr(args, "algorithm", None):
        overrides["algorithm"] = args.algorithm
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "m", None) is not None:
        overrides["audio_words"] = {"m": args.m}
    if getattr(args, "k", None) is not None:
        overrides.setdefault("encoder", {})["k"] = args.k
    if getattr(args, "r", None) is not None:
        overrides.setdefault("encoder", {})["relevance_r"] = args.r
    if getattr(args, "svm_c", None) is not None:
        overrides["svm"] = {"c": args.svm_c}
    synth_over = {}
    if getattr(args, "n_bags", None) is not None:
        synth_over["n_bags"] = args.n_bags
    if getattr(args, "witness_rate", None) is not None:
        synth_over["witness_rate"] = args.witness_rate
    if getattr(args, "dim", None) is not None:
        synth_over["d"] = args.dim
    if getattr(args, "separation", None) is not None:
        synth_over["separation"] = args.separation
    if synth_over:
        overrides["synth"] = synth_over
    return _deep_merge(cfg, overrides)


def _validate_config(cfg: dict) -> None:
    if cfg["algorithm"] not in evaluation.ALGORITHMS:
        raise ConfigError(f"unknown algorithm {cfg['algorithm']!r}; expected one of {evaluation.ALGORITHMS}")
    if int(cfg["folds"]["n"]) < 2:
        raise ConfigError("folds.n must be >= 2")
    if int(cfg["audio_words"]["m"]) < 1 or int(cfg["encoder"]["k"]) < 1:
        raise ConfigError("audio_words.m and encoder.k must be >= 1")
    if float(cfg["svm"]["c"]) <= 0:
        raise ConfigError("svm.c must be positive")
    if float(cfg["encoder"]["relevance_r"]) < 0:
        raise ConfigError("encoder.relevance_r must be >= 0")


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = deepcopy(DEFAULTS)
        if args.config:
            cfg = _deep_merge(cfg, load_config_file(args.config))
        cfg = _apply_flag_overrides(cfg, args)
        cfg.pop("command", None)  # tolerate re-running from a frozen copy
        _validate_config(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _freeze_config(cfg, args.command, out)
    try:
        return args.func(cfg, args, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except core.ManifestError as exc:
        print(f"manifest error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
