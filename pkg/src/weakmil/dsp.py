"""WAV ingestion, MFCC extraction, and the binary feature-matrix format.

Frame matrices are plain float64 ndarrays of shape (T, D), one feature
vector per row.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft

__all__ = [
    "Waveform",
    "MfccConfig",
    "WavFormatError",
    "read_wav",
    "mfcc",
    "frame_count",
    "mel_filterbank",
    "write_features",
    "read_features",
    "FEATURE_MAGIC",
]

FEATURE_MAGIC = b"WMFEAT1"


class WavFormatError(ValueError):
    """Unsupported or corrupt WAV input."""


@dataclass(frozen=True)
class Waveform:
    """Mono audio samples in [-1, 1] at a fixed sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if np.asarray(self.samples).ndim != 1:
            raise ValueError("samples must be a 1-D array")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class MfccConfig:
    """MFCC front-end parameters.

    Defaults follow common ASR conventions: 21 cepstra including C0 over
    20 ms frames with 10 ms hop, 26 mel filters, pre-emphasis 0.97, and an
    FFT size of the next power of two at or above the frame length
    (fft_size=None).
    """

    n_coeffs: int = 21
    frame_len_s: float = 0.020
    frame_hop_s: float = 0.010
    n_mel_filters: int = 26
    fft_size: int | None = None
    pre_emphasis: float = 0.97
    log_floor: float = 1e-10

    def __post_init__(self) -> None:
        if self.n_coeffs < 1 or self.n_coeffs > self.n_mel_filters:
            raise ValueError(
                f"n_coeffs must be in [1, n_mel_filters={self.n_mel_filters}], got {self.n_coeffs}"
            )
        if self.frame_len_s <= 0 or self.frame_hop_s <= 0:
            raise ValueError("frame_len_s and frame_hop_s must be positive")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")


def read_wav(path: str | Path) -> Waveform:
    """Read a RIFF WAV file (16-bit PCM or 32-bit float) as mono float64.

    Stereo or multichannel input is downmixed by the channel mean; integer
    samples are scaled to [-1, 1].
    """
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")

    fmt: tuple[int, int, int, int] | None = None
    raw: bytes | None = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        size = int.from_bytes(data[pos + 4 : pos + 8], "little")
        body = data[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise WavFormatError(f"{path}: truncated {chunk_id!r} chunk")
        if chunk_id == b"fmt ":
            if size < 16:
                raise WavFormatError(f"{path}: fmt chunk too small")
            audio_format, channels = struct.unpack_from("<HH", body, 0)
            sample_rate = struct.unpack_from("<I", body, 4)[0]
            bits = struct.unpack_from("<H", body, 14)[0]
            fmt = (audio_format, channels, sample_rate, bits)
        elif chunk_id == b"data":
            raw = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned

    if fmt is None or raw is None:
        raise WavFormatError(f"{path}: missing fmt or data chunk")
    audio_format, channels, sample_rate, bits = fmt
    if channels < 1:
        raise WavFormatError(f"{path}: invalid channel count {channels}")

    if audio_format == 1 and bits == 16:
        itemsize = 2
        decode = lambda b: np.frombuffer(b, dtype="<i2").astype(np.float64) / 32768.0
    elif audio_format == 3 and bits == 32:
        itemsize = 4
        decode = lambda b: np.frombuffer(b, dtype="<f4").astype(np.float64)
    else:
        raise WavFormatError(
            f"{path}: unsupported codec (format {audio_format}, {bits}-bit); "
            "expected 16-bit PCM or 32-bit float"
        )
    frame_bytes = itemsize * channels
    if len(raw) % frame_bytes != 0:
        raise WavFormatError(f"{path}: data chunk is not a whole number of sample frames")

    samples = decode(raw)
    if channels > 1:
        samples = samples.reshape(-1, channels).mean(axis=1)
    return Waveform(samples, sample_rate)


def frame_count(n_samples: int, frame_len: int, hop: int) -> int:
    """Number of full analysis frames: floor((N - frame_len) / hop) + 1."""
    if n_samples < frame_len:
        raise ValueError(f"signal of {n_samples} samples is shorter than one frame ({frame_len})")
    return (n_samples - frame_len) // hop + 1


def _hz_to_mel(hz: np.ndarray | float) -> np.ndarray | float:
    return 2595.0 * np.log10(1.0 + np.asarray(hz) / 700.0)


def _mel_to_hz(mel: np.ndarray | float) -> np.ndarray | float:
    return 700.0 * (10.0 ** (np.asarray(mel) / 2595.0) - 1.0)


def mel_filterbank(n_filters: int, fft_size: int, sample_rate: int) -> np.ndarray:
    """Triangular mel filterbank, shape (n_filters, fft_size // 2 + 1)."""
    low_mel = _hz_to_mel(0.0)
    high_mel = _hz_to_mel(sample_rate / 2.0)
    mel_points = np.linspace(low_mel, high_mel, n_filters + 2)
    bins = np.floor((fft_size + 1) * _mel_to_hz(mel_points) / sample_rate).astype(int)

    fb = np.zeros((n_filters, fft_size // 2 + 1))
    for j in range(n_filters):
        left, center, right = bins[j], bins[j + 1], bins[j + 2]
        for i in range(left, center):
            fb[j, i] = (i - left) / max(center - left, 1)
        for i in range(center, right):
            fb[j, i] = (right - i) / max(right - center, 1)
    return fb


def mfcc(w: Waveform, cfg: MfccConfig = MfccConfig()) -> np.ndarray:
    """Extract an MFCC frame matrix of shape (T, n_coeffs), C0 included.

    Per frame: pre-emphasis, Hamming window, power spectrum, mel filterbank,
    floored log, orthonormal DCT-II.  T follows the frame_count formula; the
    trailing partial frame is dropped.
    """
    frame_len = round(cfg.frame_len_s * w.sample_rate)
    hop = round(cfg.frame_hop_s * w.sample_rate)
    x = np.asarray(w.samples, dtype=np.float64)
    if len(x) < frame_len:
        raise ValueError(
            f"waveform of {len(x)} samples is shorter than one frame ({frame_len} samples)"
        )
    nfft = cfg.fft_size
    if nfft is None:
        nfft = 1
        while nfft < frame_len:
            nfft *= 2
    if nfft < frame_len:
        raise ValueError(f"fft_size {nfft} is smaller than the frame length {frame_len}")

    emphasized = np.concatenate(([x[0]], x[1:] - cfg.pre_emphasis * x[:-1]))
    n_frames = frame_count(len(x), frame_len, hop)
    idx = np.arange(frame_len)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = emphasized[idx] * np.hamming(frame_len)

    power = np.abs(np.fft.rfft(frames, nfft, axis=1)) ** 2 / nfft
    fb = mel_filterbank(cfg.n_mel_filters, nfft, w.sample_rate)
    energies = power @ fb.T
    log_energies = np.log(np.maximum(energies, cfg.log_floor))
    cepstra = scipy.fft.dct(log_energies, type=2, axis=1, norm="ortho")
    return np.ascontiguousarray(cepstra[:, : cfg.n_coeffs])


def write_features(path: str | Path, matrix: np.ndarray) -> None:
    """Write a feature matrix: magic, u32 rows, u32 cols, row-major LE f64."""
    mat = np.ascontiguousarray(matrix, dtype=np.float64)
    if mat.ndim != 2:
        raise ValueError(f"feature matrix must be 2-D, got shape {mat.shape}")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<II", mat.shape[0], mat.shape[1]))
        fh.write(mat.astype("<f8").tobytes())


def read_features(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    header = len(FEATURE_MAGIC) + 8
    if len(data) < header or data[: len(FEATURE_MAGIC)] != FEATURE_MAGIC:
        raise ValueError(f"{path}: not a feature matrix file")
    rows, cols = struct.unpack_from("<II", data, len(FEATURE_MAGIC))
    expect = header + rows * cols * 8
    if len(data) != expect:
        raise ValueError(f"{path}: expected {expect} bytes for {rows}x{cols}, got {len(data)}")
    body = np.frombuffer(data, dtype="<f8", offset=header)
    return body.reshape(rows, cols).astype(np.float64)
