"""Spectrogram branch: WAV loading, STFT power spectra, log-mel, pooling.

All functions are pure and operate in float64. The end of the chain is a
fixed-size vector per utterance (pooled log-mel grid) that feeds the fusion
encoder alongside the self-supervised speech embedding.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass

import numpy as np

PIPELINE_SAMPLE_RATE = 16000

# Front-end defaults; the upstream method leaves these unspecified.
DEFAULT_N_FFT = 1024
DEFAULT_HOP = 256
DEFAULT_N_MELS = 80
DEFAULT_GRID_T = 8
DEFAULT_GRID_F = 8

LOG_FLOOR = 1e-10


@dataclass
class Waveform:
    """Mono audio at a fixed sample rate, samples in [-1, 1]."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("waveform samples must be one-dimensional")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample rate must be positive")
        if self.samples.size and np.max(np.abs(self.samples)) > 1.0:
            raise ValueError("waveform samples must lie in [-1, 1]")


@dataclass
class Spectrogram:
    """T x F matrix of power (or log-power) values plus its framing params."""

    values: np.ndarray
    n_fft: int
    hop: int
    n_mels: int = 0  # 0 means linear-frequency bins

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("spectrogram values must be a 2-D matrix")

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]


def load_wav(path: str) -> Waveform:
    """Load a RIFF/WAVE file: PCM 16-bit, mono, 16 kHz only.

    Anything else (other sample rates included) is an error; there is no
    silent resampling or channel mixdown.
    """
    try:
        with wave.open(str(path), "rb") as wf:
            n_channels = wf.getnchannels()
            sampwidth = wf.getsampwidth()
            rate = wf.getframerate()
            comptype = wf.getcomptype()
            n_frames = wf.getnframes()
            raw = wf.readframes(n_frames)
    except FileNotFoundError:
        raise
    except (wave.Error, EOFError) as exc:
        raise ValueError(f"{path}: not a valid PCM WAV file ({exc})") from exc
    if comptype != "NONE":
        raise ValueError(f"{path}: compressed WAV ({comptype}) is not supported")
    if sampwidth != 2:
        raise ValueError(f"{path}: expected 16-bit PCM, got {8 * sampwidth}-bit")
    if n_channels != 1:
        raise ValueError(f"{path}: expected mono audio, got {n_channels} channels")
    if rate != PIPELINE_SAMPLE_RATE:
        raise ValueError(
            f"{path}: expected {PIPELINE_SAMPLE_RATE} Hz, got {rate} Hz (resampling is not performed)"
        )
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return Waveform(samples=samples, sample_rate_hz=rate)


def write_wav(path: str, samples: np.ndarray, sample_rate_hz: int = PIPELINE_SAMPLE_RATE) -> None:
    """Write mono float samples in [-1, 1] as PCM16."""
    quantized = np.clip(np.round(np.asarray(samples, dtype=np.float64) * 32767.0), -32768, 32767)
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(sample_rate_hz)
        wf.writeframes(quantized.astype("<i2").tobytes())


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window of length n."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_count(n_samples: int, n_fft: int, hop: int) -> int:
    if n_samples < n_fft:
        raise ValueError(f"input of {n_samples} samples is shorter than one frame (n_fft={n_fft})")
    return 1 + (n_samples - n_fft) // hop


def stft_power(w: Waveform, n_fft: int = DEFAULT_N_FFT, hop: int = DEFAULT_HOP) -> Spectrogram:
    """Power spectrogram over Hann-windowed frames, no padding.

    Frame t covers samples [t*hop, t*hop + n_fft); entry (t, k) is the
    squared DFT magnitude at non-negative frequency bin k.
    """
    if n_fft < 2 or hop < 1:
        raise ValueError("n_fft must be >= 2 and hop >= 1")
    n = w.samples.size
    n_frames = frame_count(n, n_fft, hop)
    window = hann_window(n_fft)
    starts = np.arange(n_frames) * hop
    frames = w.samples[starts[:, None] + np.arange(n_fft)[None, :]] * window
    spectrum = np.fft.rfft(frames, axis=1)
    power = spectrum.real**2 + spectrum.imag**2
    return Spectrogram(values=power, n_fft=n_fft, hop=hop, n_mels=0)


def hz_to_mel(f: np.ndarray | float) -> np.ndarray | float:
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m: np.ndarray | float) -> np.ndarray | float:
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, sample_rate_hz: int, n_fft: int) -> np.ndarray:
    """Triangular mel filterbank, shape (n_mels, n_fft//2 + 1).

    Corner frequencies are equally spaced on the mel scale between 0 Hz and
    Nyquist; each triangle is evaluated at the FFT bin centres and rescaled
    so its peak is exactly 1.0.
    """
    if n_mels < 1:
        raise ValueError("n_mels must be >= 1")
    n_bins = n_fft // 2 + 1
    if n_mels > n_bins:
        raise ValueError(f"n_mels={n_mels} exceeds the {n_bins} FFT bins")
    corners = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate_hz / 2.0), n_mels + 2))
    bin_freqs = np.arange(n_bins) * sample_rate_hz / n_fft
    fb = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        left, center, right = corners[m], corners[m + 1], corners[m + 2]
        rising = (bin_freqs - left) / (center - left)
        falling = (right - bin_freqs) / (right - center)
        tri = np.maximum(0.0, np.minimum(rising, falling))
        peak = tri.max()
        if peak <= 0.0:
            raise ValueError(
                f"mel filter {m} has no support at n_fft={n_fft}; reduce n_mels or raise n_fft"
            )
        fb[m] = tri / peak
    return fb


def log_mel(spec: Spectrogram, fb: np.ndarray) -> Spectrogram:
    """Apply a filterbank to a linear power spectrogram and log-compress."""
    if spec.n_mels != 0:
        raise ValueError("log_mel expects a linear-frequency power spectrogram")
    fb = np.asarray(fb, dtype=np.float64)
    if fb.ndim != 2 or fb.shape[1] != spec.values.shape[1]:
        raise ValueError(
            f"filterbank has {fb.shape[-1] if fb.ndim == 2 else '?'} bins, "
            f"spectrogram has {spec.values.shape[1]}"
        )
    banded = spec.values @ fb.T
    return Spectrogram(
        values=np.log(banded + LOG_FLOOR), n_fft=spec.n_fft, hop=spec.hop, n_mels=fb.shape[0]
    )


def pool_spectrogram(spec: Spectrogram, grid_t: int = DEFAULT_GRID_T, grid_f: int = DEFAULT_GRID_F) -> np.ndarray:
    """Adaptive average pooling onto a grid_t x grid_f grid, flattened row-major.

    Output cell (i, j) averages input rows [floor(i*T/grid_t), ceil((i+1)*T/grid_t))
    and columns likewise, so any T x F input maps to a fixed-length vector.
    """
    if grid_t < 1 or grid_f < 1:
        raise ValueError("pooling grid dims must be >= 1")
    t, f = spec.values.shape
    if t == 0 or f == 0:
        raise ValueError("cannot pool an empty spectrogram")
    out = np.empty((grid_t, grid_f))
    for i in range(grid_t):
        r0, r1 = (i * t) // grid_t, -(-((i + 1) * t) // grid_t)
        for j in range(grid_f):
            c0, c1 = (j * f) // grid_f, -(-((j + 1) * f) // grid_f)
            out[i, j] = spec.values[r0:r1, c0:c1].mean()
    return out.reshape(-1)


@dataclass
class DspConfig:
    """Knobs for the full WAV -> feature-vector chain."""

    n_fft: int = DEFAULT_N_FFT
    hop: int = DEFAULT_HOP
    n_mels: int = DEFAULT_N_MELS
    grid_t: int = DEFAULT_GRID_T
    grid_f: int = DEFAULT_GRID_F


def spectrogram_features(w: Waveform, cfg: DspConfig = DspConfig()) -> np.ndarray:
    """Run the full spectrogram branch: STFT power -> log-mel -> pooled vector."""
    spec = stft_power(w, n_fft=cfg.n_fft, hop=cfg.hop)
    fb = mel_filterbank(cfg.n_mels, w.sample_rate_hz, cfg.n_fft)
    return pool_spectrogram(log_mel(spec, fb), cfg.grid_t, cfg.grid_f)
