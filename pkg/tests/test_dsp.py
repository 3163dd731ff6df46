"""DSP chain tests: WAV contract, STFT vs direct-DFT oracle, mel, pooling."""

import math
import wave

import numpy as np
import pytest
from helpers import naive_power_spectrogram

from speechalign import dsp


def write_pcm16(path, samples_i16, rate=16000, channels=1, sampwidth=2):
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(channels)
        wf.setsampwidth(sampwidth)
        wf.setframerate(rate)
        wf.writeframes(np.asarray(samples_i16, dtype="<i2").tobytes())


class TestLoadWav:
    def test_scaling_identity(self, tmp_path):
        path = tmp_path / "one.wav"
        write_pcm16(path, [32767, -32768, 0])
        w = dsp.load_wav(path)
        assert w.samples[0] == pytest.approx(0.999969482, abs=1e-9)
        assert w.samples[1] == -1.0
        assert w.samples[2] == 0.0
        assert w.sample_rate_hz == 16000

    def test_all_zero_pcm(self, tmp_path):
        path = tmp_path / "zero.wav"
        write_pcm16(path, np.zeros(128, dtype=np.int16))
        assert np.all(dsp.load_wav(path).samples == 0.0)

    def test_wrong_sample_rate_is_error(self, tmp_path):
        path = tmp_path / "8k.wav"
        write_pcm16(path, np.zeros(16, dtype=np.int16), rate=8000)
        with pytest.raises(ValueError, match="8000"):
            dsp.load_wav(path)

    def test_stereo_is_error(self, tmp_path):
        path = tmp_path / "stereo.wav"
        write_pcm16(path, np.zeros(32, dtype=np.int16), channels=2)
        with pytest.raises(ValueError, match="mono"):
            dsp.load_wav(path)

    def test_wrong_width_is_error(self, tmp_path):
        path = tmp_path / "8bit.wav"
        with wave.open(str(path), "wb") as wf:
            wf.setnchannels(1)
            wf.setsampwidth(1)
            wf.setframerate(16000)
            wf.writeframes(bytes(64))
        with pytest.raises(ValueError, match="16-bit"):
            dsp.load_wav(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            dsp.load_wav(tmp_path / "nope.wav")

    def test_not_a_wav(self, tmp_path):
        path = tmp_path / "junk.wav"
        path.write_bytes(b"definitely not RIFF data")
        with pytest.raises(ValueError):
            dsp.load_wav(path)

    def test_roundtrip_with_write_wav(self, tmp_path):
        rng = np.random.default_rng(5)
        samples = rng.uniform(-0.9, 0.9, size=2048)
        path = tmp_path / "rt.wav"
        dsp.write_wav(path, samples)
        back = dsp.load_wav(path).samples
        assert np.max(np.abs(back - samples)) <= 1.5 / 32768.0


class TestStftPower:
    def test_zero_signal(self):
        w = dsp.Waveform(np.zeros(4096), 16000)
        spec = dsp.stft_power(w, n_fft=1024, hop=256)
        assert spec.values.shape == (13, 513)
        assert np.all(spec.values == 0.0)

    def test_frame_count(self):
        w = dsp.Waveform(np.zeros(2048), 16000)
        spec = dsp.stft_power(w, n_fft=1024, hop=256)
        assert spec.n_frames == 5

    def test_too_short_is_error(self):
        w = dsp.Waveform(np.zeros(512), 16000)
        with pytest.raises(ValueError, match="shorter"):
            dsp.stft_power(w, n_fft=1024, hop=256)

    def test_sine_at_bin_matches_oracle(self):
        n_fft, hop, k = 256, 64, 19
        t = np.arange(4096)
        samples = 0.7 * np.sin(2 * np.pi * k * t / n_fft)
        w = dsp.Waveform(samples, 16000)
        spec = dsp.stft_power(w, n_fft=n_fft, hop=hop)
        assert np.all(spec.values.argmax(axis=1) == k)
        oracle = naive_power_spectrogram(samples, n_fft, hop)
        rel = np.linalg.norm(spec.values - oracle) / np.linalg.norm(oracle)
        assert rel < 1e-6

    def test_random_signals_match_oracle(self):
        rng = np.random.default_rng(42)
        for n_fft, hop in [(64, 16), (128, 64), (256, 100)]:
            samples = rng.uniform(-1, 1, size=1500)
            spec = dsp.stft_power(dsp.Waveform(samples, 16000), n_fft=n_fft, hop=hop)
            oracle = naive_power_spectrogram(samples, n_fft, hop)
            rel = np.linalg.norm(spec.values - oracle) / np.linalg.norm(oracle)
            assert rel < 1e-6

    def test_frame_count_formula_property(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            n_fft = int(rng.integers(2, 64)) * 2
            hop = int(rng.integers(1, 64))
            n = int(rng.integers(n_fft, 2000))
            w = dsp.Waveform(np.zeros(n), 16000)
            spec = dsp.stft_power(w, n_fft=n_fft, hop=hop)
            assert spec.n_frames == 1 + (n - n_fft) // hop

    def test_purity(self):
        rng = np.random.default_rng(3)
        samples = rng.uniform(-1, 1, size=2048)
        w = dsp.Waveform(samples, 16000)
        a = dsp.stft_power(w, 512, 128).values
        b = dsp.stft_power(w, 512, 128).values
        assert np.array_equal(a, b)


class TestMelFilterbank:
    def test_mel_scale_anchor_values(self):
        assert dsp.hz_to_mel(0.0) == 0.0
        assert dsp.hz_to_mel(700.0) == pytest.approx(2595.0 * math.log10(2.0), rel=1e-12)

    def test_single_filter_matches_hand_oracle(self):
        n_fft, sr = 512, 16000
        fb = dsp.mel_filterbank(1, sr, n_fft)
        # One triangle spanning the full band: corners at mel-equal spacing.
        mel_max = 2595.0 * math.log10(1.0 + (sr / 2.0) / 700.0)
        center = 700.0 * (10.0 ** ((mel_max / 2.0) / 2595.0) - 1.0)
        right = sr / 2.0
        bin_freqs = np.arange(n_fft // 2 + 1) * sr / n_fft
        tri = np.maximum(
            0.0, np.minimum(bin_freqs / center, (right - bin_freqs) / (right - center))
        )
        tri = tri / tri.max()
        assert fb.shape == (1, 257)
        np.testing.assert_allclose(fb[0], tri, atol=1e-12)

    def test_rows_are_unimodal_with_unit_peak(self):
        fb = dsp.mel_filterbank(80, 16000, 1024)
        assert np.all(fb >= 0.0)
        for row in fb:
            assert row.max() == 1.0
            peak = int(row.argmax())
            assert np.all(np.diff(row[: peak + 1]) >= 0)
            assert np.all(np.diff(row[peak:]) <= 0)
            support = np.flatnonzero(row)
            assert np.array_equal(support, np.arange(support[0], support[-1] + 1))

    def test_too_many_mels_is_error(self):
        with pytest.raises(ValueError, match="exceeds"):
            dsp.mel_filterbank(300, 16000, 512)


class TestLogMel:
    def test_zero_power_hits_log_floor(self):
        spec = dsp.Spectrogram(np.zeros((4, 257)), n_fft=512, hop=128)
        fb = dsp.mel_filterbank(8, 16000, 512)
        out = dsp.log_mel(spec, fb)
        assert out.values == pytest.approx(math.log(1e-10))
        assert out.n_mels == 8

    def test_single_unit_filter_reproduces_log_power(self):
        values = np.abs(np.random.default_rng(0).normal(size=(3, 5))) + 0.1
        spec = dsp.Spectrogram(values, n_fft=8, hop=4)
        fb = np.zeros((1, 5))
        fb[0, 2] = 1.0
        out = dsp.log_mel(spec, fb)
        np.testing.assert_allclose(out.values[:, 0], np.log(values[:, 2] + 1e-10))

    def test_matches_naive_matmul_oracle(self):
        rng = np.random.default_rng(11)
        values = np.abs(rng.normal(size=(3, 513)))
        spec = dsp.Spectrogram(values, n_fft=1024, hop=256)
        fb = dsp.mel_filterbank(40, 16000, 1024)
        out = dsp.log_mel(spec, fb)
        oracle = np.empty((3, 40))
        for t in range(3):
            for m in range(40):
                oracle[t, m] = math.log(sum(fb[m][f] * values[t][f] for f in range(513)) + 1e-10)
        np.testing.assert_allclose(out.values, oracle, rtol=1e-12, atol=1e-12)

    def test_dimension_mismatch_is_error(self):
        spec = dsp.Spectrogram(np.zeros((2, 257)), n_fft=512, hop=128)
        with pytest.raises(ValueError, match="bins"):
            dsp.log_mel(spec, np.zeros((4, 100)))


class TestPoolSpectrogram:
    def test_constant_input(self):
        spec = dsp.Spectrogram(np.full((7, 5), 3.25), n_fft=8, hop=4)
        out = dsp.pool_spectrogram(spec, 2, 2)
        assert out == pytest.approx(np.full(4, 3.25))

    def test_identity_grid(self):
        values = np.arange(12.0).reshape(3, 4)
        spec = dsp.Spectrogram(values, n_fft=8, hop=4)
        np.testing.assert_array_equal(dsp.pool_spectrogram(spec, 3, 4), values.reshape(-1))

    def test_block_means_oracle(self):
        values = np.arange(16.0).reshape(4, 4)
        spec = dsp.Spectrogram(values, n_fft=8, hop=4)
        out = dsp.pool_spectrogram(spec, 2, 2)
        expected = [
            values[:2, :2].mean(),
            values[:2, 2:].mean(),
            values[2:, :2].mean(),
            values[2:, 2:].mean(),
        ]
        assert out == pytest.approx(expected)

    def test_fewer_rows_than_grid(self):
        spec = dsp.Spectrogram(np.ones((1, 3)), n_fft=8, hop=4)
        assert dsp.pool_spectrogram(spec, 4, 4) == pytest.approx(np.ones(16))

    def test_constant_append_invariance(self):
        spec = dsp.Spectrogram(np.full((6, 6), 2.5), n_fft=8, hop=4)
        grown = dsp.Spectrogram(np.full((9, 6), 2.5), n_fft=8, hop=4)
        np.testing.assert_allclose(
            dsp.pool_spectrogram(spec, 3, 3), dsp.pool_spectrogram(grown, 3, 3)
        )

    def test_empty_is_error(self):
        spec = dsp.Spectrogram(np.zeros((0, 5)), n_fft=8, hop=4)
        with pytest.raises(ValueError, match="empty"):
            dsp.pool_spectrogram(spec, 2, 2)


def test_full_chain_is_deterministic():
    rng = np.random.default_rng(9)
    w = dsp.Waveform(rng.uniform(-1, 1, size=6400), 16000)
    a = dsp.spectrogram_features(w)
    b = dsp.spectrogram_features(w)
    assert a.shape == (64,)
    assert np.array_equal(a, b)
