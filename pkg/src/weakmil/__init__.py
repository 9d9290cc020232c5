"""Weakly supervised audio event detection via multiple instance learning.

Recordings carry only recording-level event tags.  The pipeline segments
each recording into overlapping instances, represents instances by
soft-count audio-word histograms over MFCC frames, and learns per-event
detectors either with instance-level SVM heuristics (miSVM, MISVM) or by
encoding whole bags into fixed-length vectors (Fisher vectors, MAP
supervectors) for fast linear classification.
"""

from weakmil.core import (
    BagManifestEntry,
    Dataset,
    EventLabel,
    FoldPlan,
    Presence,
    SegmentPlan,
    load_manifest,
    plan_segments,
    save_manifest,
    split_folds,
)
from weakmil.dsp import MfccConfig, Waveform, mfcc, read_features, read_wav, write_features
from weakmil.encode import (
    EncoderConfig,
    FisherVector,
    Supervector,
    encode_bag,
    encode_fv,
    encode_sup,
    ifv_normalize,
)
from weakmil.evaluation import (
    EvalReport,
    ExperimentConfig,
    RankedResult,
    TimingReport,
    average_precision,
    benchmark_training,
    mean_average_precision,
    run_experiment,
)
from weakmil.gmm import GmmFitConfig, GmmModel, fit_gmm, posteriors, soft_count
from weakmil.milsvm import (
    LinearModel,
    MilState,
    MilTrainConfig,
    decision,
    train_linear_svm,
    train_misvm,
    train_MISVM,
)
from weakmil.synth import SynthConfig, SynthDataset, generate, separated_mixtures

__version__ = "0.1.0"
