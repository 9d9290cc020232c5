"""Bag encoders: Fisher vectors and MAP-adaptation supervectors.

Both encoders map a variable-size bag of instance vectors to one fixed-length
vector under a shared diagonal GMM, after which any standard classifier can
be trained at the bag level.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from weakmil.gmm import GmmModel, posteriors_matrix

__all__ = [
    "FisherVector",
    "Supervector",
    "EncoderConfig",
    "encode_fv",
    "ifv_normalize",
    "encode_sup",
    "encode_bag",
    "save_encoded",
    "load_encoded",
    "ENCODED_MAGIC",
]

ENCODED_MAGIC = b"WMENC1"

LAYOUT_MEAN_VAR = "mean_var"              # 2KD: mean block then variance block
LAYOUT_MEAN_VAR_WEIGHT = "mean_var_weight"  # (2D+1)K: adds the per-component weight block

MODE_MEAN = "mean"          # KD: adapted means only
MODE_MEAN_VAR = "mean_var"  # 2KD: adapted means then adapted variances

_VAR_UPDATE_FLOOR = 1e-8  # degenerate single-instance bags with r=0 can reach zero

_KIND_BYTES = {"fv": 0, "sup": 1}
_KIND_NAMES = {v: k for k, v in _KIND_BYTES.items()}


@dataclass
class FisherVector:
    """Gradient-statistic encoding of one bag with respect to a GMM."""

    values: np.ndarray
    layout: str
    normalized: bool = False


@dataclass
class Supervector:
    """Concatenated MAP-adapted GMM parameters for one bag."""

    values: np.ndarray
    mode: str
    relevance_r: float


@dataclass(frozen=True)
class EncoderConfig:
    """Which encoder to use and its knobs.

    `layout` applies to kind="fv", `mode` and `relevance_r` to kind="sup".
    `ifv` turns on signed-square-root plus L2 normalization of Fisher
    vectors in pipeline encoding.  K, when set, is validated against the
    mixture actually used.
    """

    kind: str
    K: int | None = None
    layout: str = LAYOUT_MEAN_VAR
    mode: str = MODE_MEAN_VAR
    relevance_r: float = 16.0
    ifv: bool = True

    def __post_init__(self) -> None:
        if self.kind not in ("fv", "sup"):
            raise ValueError(f"kind must be 'fv' or 'sup', got {self.kind!r}")
        if self.layout not in (LAYOUT_MEAN_VAR, LAYOUT_MEAN_VAR_WEIGHT):
            raise ValueError(f"unknown layout {self.layout!r}")
        if self.mode not in (MODE_MEAN, MODE_MEAN_VAR):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.relevance_r < 0:
            raise ValueError(f"relevance_r must be >= 0, got {self.relevance_r}")


def _bag_stats(g: GmmModel, bag: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Zeroth/first/second order posterior-weighted statistics of a bag."""
    X = np.atleast_2d(np.asarray(bag, dtype=np.float64))
    if X.shape[0] == 0:
        raise ValueError("cannot encode an empty bag")
    if X.shape[1] != g.D:
        raise ValueError(f"instance dimension {X.shape[1]} does not match model D={g.D}")
    gamma = posteriors_matrix(g, X)       # (m, K)
    s0 = gamma.sum(axis=0)                # (K,)
    s1 = gamma.T @ X                      # (K, D)
    s2 = gamma.T @ (X**2)                 # (K, D)
    return s0, s1, s2


def encode_fv(g: GmmModel, bag: np.ndarray, layout: str = LAYOUT_MEAN_VAR) -> FisherVector:
    """Encode a bag as an (unnormalized) Fisher vector.

    The default mean+variance layout is 2KD long: the K mean-gradient blocks
    followed by the K variance-gradient blocks, components in order.  The
    "mean_var_weight" layout appends the K weight gradients for a total of
    (2D+1)K entries.
    """
    if layout not in (LAYOUT_MEAN_VAR, LAYOUT_MEAN_VAR_WEIGHT):
        raise ValueError(f"unknown layout {layout!r}")
    X = np.atleast_2d(np.asarray(bag, dtype=np.float64))
    s0, s1, s2 = _bag_stats(g, X)
    m = X.shape[0]

    w = g.weights
    mu = g.means
    var = g.variances
    sigma = np.sqrt(var)

    scale_mu = 1.0 / (m * np.sqrt(w))            # (K,)
    alpha_mu = scale_mu[:, None] * (s1 - s0[:, None] * mu) / sigma
    scale_sig = 1.0 / (m * np.sqrt(2.0 * w))
    central2 = s2 - 2.0 * mu * s1 + mu**2 * s0[:, None]
    alpha_sigma = scale_sig[:, None] * (central2 / var - s0[:, None])

    blocks = [alpha_mu.ravel(), alpha_sigma.ravel()]
    if layout == LAYOUT_MEAN_VAR_WEIGHT:
        alpha_w = (s0 - m * w) / (m * np.sqrt(w))
        blocks.append(alpha_w)
    return FisherVector(np.concatenate(blocks), layout)


def ifv_normalize(fv: FisherVector, eps: float = 1e-12) -> FisherVector:
    """Improved-Fisher-vector normalization: signed square root, then L2.

    Accepts only unnormalized input; a vector with Euclidean norm below eps
    maps to the zero vector instead of dividing by (near) zero.
    """
    if fv.normalized:
        raise ValueError("Fisher vector is already normalized")
    v = np.sign(fv.values) * np.sqrt(np.abs(fv.values))
    norm = float(np.linalg.norm(v))
    out = np.zeros_like(v) if norm < eps else v / norm
    return FisherVector(out, fv.layout, normalized=True)


def encode_sup(g: GmmModel, bag: np.ndarray, cfg: EncoderConfig) -> Supervector:
    """Encode a bag by MAP adaptation of the mixture's means (and variances).

    With soft counts n_k and relevance factor r, the adapted mean of
    component k is (sum_j gamma_j(k) x_j + r mu_k) / (n_k + r); the adapted
    variance follows the matching second-moment update minus the squared
    adapted mean.  Mode "mean" concatenates the K adapted means (KD values);
    "mean_var" appends the K adapted variances (2KD values).
    """
    if cfg.kind != "sup":
        raise ValueError(f"encode_sup requires kind='sup' config, got {cfg.kind!r}")
    if cfg.K is not None and cfg.K != g.K:
        raise ValueError(f"config K={cfg.K} does not match model K={g.K}")
    r = cfg.relevance_r
    s0, s1, s2 = _bag_stats(g, bag)

    denom = s0 + r
    if (denom <= 0).any():
        raise ValueError("zero adaptation denominator; relevance_r=0 needs positive soft counts")
    beta_mu = (s1 + r * g.means) / denom[:, None]
    if cfg.mode == MODE_MEAN:
        return Supervector(beta_mu.ravel(), cfg.mode, r)

    beta_sigma = (s2 + r * (g.means**2 + g.variances)) / denom[:, None] - beta_mu**2
    beta_sigma = np.maximum(beta_sigma, _VAR_UPDATE_FLOOR)
    return Supervector(np.concatenate([beta_mu.ravel(), beta_sigma.ravel()]), cfg.mode, r)


def encode_bag(g: GmmModel, bag: np.ndarray, cfg: EncoderConfig) -> np.ndarray:
    """Pipeline dispatch: encode one bag per config, returning the raw vector."""
    if cfg.kind == "fv":
        fv = encode_fv(g, bag, cfg.layout)
        if cfg.ifv:
            fv = ifv_normalize(fv)
        return fv.values
    return encode_sup(g, bag, cfg).values


def save_encoded(path: str | Path, values: np.ndarray, kind: str) -> None:
    """Write one encoded bag: magic, kind byte, u32 length, LE f64 values."""
    if kind not in _KIND_BYTES:
        raise ValueError(f"unknown encoder kind {kind!r}")
    vec = np.ascontiguousarray(values, dtype=np.float64).ravel()
    with open(path, "wb") as fh:
        fh.write(ENCODED_MAGIC)
        fh.write(struct.pack("<BI", _KIND_BYTES[kind], vec.shape[0]))
        fh.write(vec.astype("<f8").tobytes())


def load_encoded(path: str | Path) -> tuple[np.ndarray, str]:
    data = Path(path).read_bytes()
    header = len(ENCODED_MAGIC) + 5
    if len(data) < header or data[: len(ENCODED_MAGIC)] != ENCODED_MAGIC:
        raise ValueError(f"{path}: not an encoded-bag file")
    kind_byte, length = struct.unpack_from("<BI", data, len(ENCODED_MAGIC))
    if kind_byte not in _KIND_NAMES:
        raise ValueError(f"{path}: unknown encoder kind byte {kind_byte}")
    if len(data) != header + 8 * length:
        raise ValueError(f"{path}: expected {length} values")
    values = np.frombuffer(data, dtype="<f8", offset=header).astype(np.float64)
    return values, _KIND_NAMES[kind_byte]
