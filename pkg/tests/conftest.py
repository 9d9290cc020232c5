import struct
import wave

import numpy as np
import pytest


def write_wav_pcm16(path, samples, sample_rate=16000, channels=1):
    """Write float samples in [-1, 1] as a 16-bit PCM WAV."""
    pcm = (np.clip(np.asarray(samples), -1.0, 1.0) * 32767.0).astype("<i2")
    if channels > 1 and pcm.ndim == 1:
        pcm = np.repeat(pcm[:, None], channels, axis=1)
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(channels)
        fh.setsampwidth(2)
        fh.setframerate(sample_rate)
        fh.writeframes(pcm.tobytes())


def write_wav_float32(path, samples, sample_rate=16000):
    """Write float samples as a 32-bit IEEE-float WAV (format code 3)."""
    data = np.asarray(samples, dtype="<f4").tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVE"
    fmt = struct.pack("<HHIIHH", 3, 1, sample_rate, sample_rate * 4, 4, 32)
    chunks = b"fmt " + struct.pack("<I", len(fmt)) + fmt
    chunks += b"data" + struct.pack("<I", len(data)) + data
    path.write_bytes(header + chunks)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
