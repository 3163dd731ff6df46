"""Alignment objectives: Huber regression and symmetric contrastive loss.

Both return the scalar loss together with analytic gradients for the
speech-side inputs. Text embeddings come from a frozen encoder and are
treated as constants, so no text gradients exist anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_HUBER_DELTA = 1.0

LOSS_KINDS = ("huber", "contrastive")


@dataclass
class LossConfig:
    kind: str = "contrastive"
    huber_delta: float = DEFAULT_HUBER_DELTA

    def __post_init__(self) -> None:
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {LOSS_KINDS}")
        if self.huber_delta <= 0:
            raise ValueError("huber_delta must be positive")


def l2_normalize(v: np.ndarray) -> np.ndarray:
    """v / ||v||_2; zero vectors are an error."""
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / norm


def huber(pred: np.ndarray, target: np.ndarray, delta: float = DEFAULT_HUBER_DELTA) -> tuple[float, np.ndarray]:
    """Elementwise Huber loss averaged over all B*d entries.

    h(r) = r^2/2 for |r| <= delta, else delta*(|r| - delta/2); returns the
    mean loss and its gradient with respect to pred.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs target {target.shape}")
    r = pred - target
    small = np.abs(r) <= delta
    elementwise = np.where(small, 0.5 * r * r, delta * (np.abs(r) - 0.5 * delta))
    dh_dr = np.where(small, r, delta * np.sign(r))
    loss = float(elementwise.mean())
    grad_pred = dh_dr / r.size
    return loss, grad_pred


def _normalize_rows(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("cannot normalize a zero row")
    return m / norms, norms


def contrastive(
    speech: np.ndarray, text: np.ndarray, temperature: float
) -> tuple[float, np.ndarray, float]:
    """Symmetric cross-entropy over scaled cosine logits, matched pairs on the diagonal.

    Rows are L2-normalized internally; logits[i][j] = temperature * s_hat_i . t_hat_j.
    Returns (loss, grad wrt raw speech rows, grad wrt temperature); the text
    side is constant.
    """
    speech = np.asarray(speech, dtype=np.float64)
    text = np.asarray(text, dtype=np.float64)
    if speech.shape != text.shape:
        raise ValueError(f"shape mismatch: speech {speech.shape} vs text {text.shape}")
    b = speech.shape[0]
    if b < 2:
        raise ValueError("contrastive loss needs a batch of at least 2")
    s_hat, s_norms = _normalize_rows(speech)
    t_hat, _ = _normalize_rows(text)
    sims = s_hat @ t_hat.T
    logits = temperature * sims

    # Row/column softmax with the usual max-shift for stability.
    row = np.exp(logits - logits.max(axis=1, keepdims=True))
    row /= row.sum(axis=1, keepdims=True)
    col = np.exp(logits - logits.max(axis=0, keepdims=True))
    col /= col.sum(axis=0, keepdims=True)

    diag = np.arange(b)
    loss_rows = -np.log(row[diag, diag]).mean()
    loss_cols = -np.log(col[diag, diag]).mean()
    loss = 0.5 * (loss_rows + loss_cols)

    grad_logits = (row + col - 2.0 * np.eye(b)) / (2.0 * b)
    grad_temperature = float(np.sum(grad_logits * sims))
    grad_s_hat = temperature * (grad_logits @ t_hat)
    # Through the normalization: d(s/||s||) projects out the radial component.
    grad_speech = (grad_s_hat - s_hat * np.sum(grad_s_hat * s_hat, axis=1, keepdims=True)) / s_norms
    return float(loss), grad_speech, grad_temperature
