"""WAV input for the exporter: strictly PCM16 mono 16 kHz, no resampling."""

from __future__ import annotations

import wave

import numpy as np

SAMPLE_RATE = 16000


def load_wav(path: str) -> np.ndarray:
    """Return float32 samples in [-1, 1] from a PCM16 mono 16 kHz WAV."""
    try:
        with wave.open(str(path), "rb") as wf:
            if wf.getcomptype() != "NONE":
                raise ValueError(f"{path}: compressed WAV is not supported")
            if wf.getsampwidth() != 2:
                raise ValueError(f"{path}: expected 16-bit PCM")
            if wf.getnchannels() != 1:
                raise ValueError(f"{path}: expected mono audio")
            if wf.getframerate() != SAMPLE_RATE:
                raise ValueError(f"{path}: expected {SAMPLE_RATE} Hz, got {wf.getframerate()}")
            raw = wf.readframes(wf.getnframes())
    except (wave.Error, EOFError) as exc:
        raise ValueError(f"{path}: not a valid WAV file ({exc})") from exc
    return np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32768.0
