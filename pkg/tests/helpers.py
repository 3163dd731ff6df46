"""Shared independent oracles used by unit and acceptance tests."""

import numpy as np

from speechalign.fusion import backward, forward, init_params
from speechalign.losses import contrastive, huber


def naive_power_spectrogram(samples, n_fft, hop, basis_cache={}):
    """Direct O(n^2) DFT of each Hann-windowed frame (no FFT)."""
    if n_fft not in basis_cache:
        k = np.arange(n_fft // 2 + 1)
        n = np.arange(n_fft)
        basis_cache[n_fft] = np.exp(-2j * np.pi * np.outer(k, n) / n_fft)
    basis = basis_cache[n_fft]
    window = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n_fft) / n_fft)
    n_frames = 1 + (len(samples) - n_fft) // hop
    out = np.empty((n_frames, n_fft // 2 + 1))
    for t in range(n_frames):
        frame = samples[t * hop : t * hop + n_fft] * window
        out[t] = np.abs(basis @ frame) ** 2
    return out


def loss_for_params(params, cfg, speech, spec, text, loss_kind):
    out, _ = forward(params, cfg, speech, spec, mode="train")
    if loss_kind == "huber":
        return huber(out, text)[0]
    return contrastive(out, text, params.temperature)[0]


def analytic_grads(params, cfg, speech, spec, text, loss_kind):
    out, cache = forward(params, cfg, speech, spec, mode="train")
    if loss_kind == "huber":
        _, grad_out = huber(out, text)
        grad_temp = 0.0
    else:
        _, grad_out, grad_temp = contrastive(out, text, params.temperature)
    grads = backward(params, cfg, cache, grad_out)
    grads["temperature"] = np.asarray([grad_temp])
    return grads


def check_grads_against_fd(cfg, loss_kind, seed=0, batch=4, h=1e-4, tol=1e-4):
    """Every parameter gradient vs central differences; returns worst rel error."""
    rng = np.random.default_rng(seed)
    params = init_params(cfg, seed)
    speech = rng.normal(size=(batch, cfg.d_speech))
    spec = rng.normal(size=(batch, cfg.d_spec))
    text = rng.normal(size=(batch, cfg.d_out))
    grads = analytic_grads(params, cfg, speech, spec, text, loss_kind)
    worst = 0.0
    for name in params.tensors:
        tensor = params.tensors[name]
        analytic = np.asarray(grads[name], dtype=np.float64).reshape(-1)
        flat = tensor.reshape(-1)  # view: writes perturb the live parameters
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_for_params(params, cfg, speech, spec, text, loss_kind)
            flat[i] = orig - h
            down = loss_for_params(params, cfg, speech, spec, text, loss_kind)
            flat[i] = orig
            fd = (up - down) / (2 * h)
            err = abs(analytic[i] - fd)
            if err > 1e-9:  # absolute floor for genuinely zero gradients
                rel = err / max(abs(analytic[i]), abs(fd))
                worst = max(worst, rel)
                assert rel < tol, f"{name}[{i}]: analytic {analytic[i]} vs fd {fd}"
    return worst
