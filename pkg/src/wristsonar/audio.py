"""16-bit PCM mono WAV reading and writing."""

from __future__ import annotations

import wave

import numpy as np

from .errors import IngestionError

INT16_SCALE = 32768.0  # maps [-32768, 32767] onto [-1, 1)


def write_wav_mono(path, samples, sample_rate: int = 48_000) -> None:
    """Write floats as 16-bit mono PCM; values are rounded then clipped."""
    scaled = np.round(np.asarray(samples, dtype=np.float64) * INT16_SCALE)
    quantized = np.clip(scaled, -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(sample_rate))
        w.writeframes(quantized.tobytes())


def read_wav_mono(path) -> tuple[np.ndarray, int]:
    """Read a 16-bit mono PCM WAV; returns (samples in [-1, 1), sample_rate)."""
    try:
        handle = wave.open(str(path), "rb")
    except (OSError, wave.Error) as exc:
        raise IngestionError(f"{path}: {exc}") from exc
    with handle as w:
        if w.getnchannels() != 1:
            raise IngestionError(f"{path}: expected mono audio, got {w.getnchannels()} channels")
        if w.getsampwidth() != 2:
            raise IngestionError(f"{path}: expected 16-bit samples, got {8 * w.getsampwidth()}-bit")
        rate = w.getframerate()
        raw = w.readframes(w.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / INT16_SCALE
    return samples, rate
