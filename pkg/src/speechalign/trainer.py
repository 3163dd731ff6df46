"""Training loop: Adam over the fusion encoder, early stopping on dev MRR.

One run is a single logical thread of parameter mutation, fully determined
by (seed, data, config): batch order, dropout masks, and dev-candidate
sampling all derive from the run seed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import fusion, losses, retrieval
from .dataset import ManifestRecord, SplitAssignment
from .losses import LossConfig
from .seeds import derive_seed, rng_for

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    learning_rate: float = 5e-6
    batch_size: int = 32
    max_epochs: int = 50
    early_stop_patience: int = 5
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")


@dataclass
class AdamState:
    """First/second moment accumulators per parameter tensor."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: fusion.FusionParams) -> "AdamState":
        return cls(
            m={k: np.zeros_like(val) for k, val in params.tensors.items()},
            v={k: np.zeros_like(val) for k, val in params.tensors.items()},
        )


def adam_step(
    params: fusion.FusionParams,
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> tuple[fusion.FusionParams, AdamState]:
    """One bias-corrected Adam update, in place, over all trainable tensors."""
    state.t += 1
    bc1 = 1.0 - ADAM_BETA1**state.t
    bc2 = 1.0 - ADAM_BETA2**state.t
    for name, tensor in params.tensors.items():
        g = np.asarray(grads.get(name, np.zeros_like(tensor)), dtype=np.float64)
        if g.shape != tensor.shape:
            raise ValueError(f"gradient for {name!r} has shape {g.shape}, expected {tensor.shape}")
        state.m[name] = ADAM_BETA1 * state.m[name] + (1.0 - ADAM_BETA1) * g
        state.v[name] = ADAM_BETA2 * state.v[name] + (1.0 - ADAM_BETA2) * g * g
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        params.tensors[name] = tensor - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return params, state


@dataclass
class FeatureSet:
    """Aligned per-id feature vectors: SSL, spectrogram, and text-target."""

    ssl: dict[str, np.ndarray]
    spec: dict[str, np.ndarray]
    text: dict[str, np.ndarray]

    def check_coverage(self, ids: list[str]) -> None:
        for name, table in (("ssl", self.ssl), ("spec", self.spec), ("text", self.text)):
            missing = [i for i in ids if i not in table]
            if missing:
                raise ValueError(f"ids missing from {name} features: {missing[:5]}")

    def matrix(self, which: str, ids: list[str]) -> np.ndarray:
        table = getattr(self, which)
        return np.stack([table[i] for i in ids])


def batch_loss_and_grads(
    params: fusion.FusionParams,
    cfg: fusion.FusionConfig,
    loss_cfg: LossConfig,
    speech: np.ndarray,
    spec: np.ndarray,
    text: np.ndarray,
    rng: np.random.Generator | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Forward + loss + backward for one batch; returns loss and full grads."""
    out, cache = fusion.forward(params, cfg, speech, spec, mode="train", rng=rng)
    if loss_cfg.kind == "huber":
        loss, grad_out = losses.huber(out, text, delta=loss_cfg.huber_delta)
        grad_temperature = 0.0
    else:
        loss, grad_out, grad_temperature = losses.contrastive(out, text, params.temperature)
    grads = fusion.backward(params, cfg, cache, grad_out)
    grads["temperature"] = np.asarray([grad_temperature])
    return loss, grads


@dataclass
class FitResult:
    params: fusion.FusionParams
    config: fusion.FusionConfig
    log: list[dict]
    best_epoch: int
    best_dev_mrr: float
    epochs_run: int


def _dev_mrr(
    params: fusion.FusionParams,
    cfg: fusion.FusionConfig,
    features: FeatureSet,
    dev_ids: list[str],
    seed: int,
) -> float:
    """Dev MRR under the five-random-candidate regime (pool may be smaller)."""
    fused = fusion.fuse_eval(
        params, cfg, features.matrix("ssl", dev_ids), features.matrix("spec", dev_ids)
    )
    index = retrieval.EmbeddingIndex.build(dev_ids, fused)
    k = min(retrieval.DEFAULT_CANDIDATES_K, len(dev_ids))
    ranks = []
    for qid in dev_ids:
        candidates = retrieval.sample_candidates(dev_ids, qid, k=k, seed=seed)
        ordered = retrieval.rank(index, features.text[qid], candidates)
        ranks.append(1 + next(i for i, (cid, _) in enumerate(ordered) if cid == qid))
    return retrieval.metrics(ranks)[1]


def fit(
    records: list[ManifestRecord],
    splits: SplitAssignment,
    features: FeatureSet,
    fusion_cfg: fusion.FusionConfig,
    train_cfg: TrainConfig,
) -> FitResult:
    """Train the fusion encoder; returns the best-dev-MRR parameters.

    Epochs iterate seeded-shuffled batches (a trailing batch of one is
    dropped); after each epoch dev MRR is measured under the five-candidate
    regime. On ties the later epoch's parameters are kept, so a plateau
    still returns the most-trained equally-good model. Stops after
    ``early_stop_patience`` consecutive epochs without strict improvement.
    """
    manifest_ids = {rec.id for rec in records}
    train_ids = sorted(i for i in splits.ids_for("train") if i in manifest_ids)
    dev_ids = sorted(i for i in splits.ids_for("dev") if i in manifest_ids)
    if not train_ids or not dev_ids:
        raise ValueError(
            f"empty split: {len(train_ids)} train / {len(dev_ids)} dev ids in manifest"
        )
    features.check_coverage(train_ids)
    features.check_coverage(dev_ids)

    params = fusion.init_params(fusion_cfg, train_cfg.seed)
    state = AdamState.for_params(params)
    run_rng = rng_for(train_cfg.seed, "train-loop")
    dev_seed = derive_seed(train_cfg.seed, "dev-eval")

    ssl_train = features.matrix("ssl", train_ids)
    spec_train = features.matrix("spec", train_ids)
    text_train = features.matrix("text", train_ids)

    log: list[dict] = []
    best: fusion.FusionParams | None = None
    best_mrr = -np.inf
    best_epoch = 0
    stall = 0
    epochs_run = 0
    for epoch in range(1, train_cfg.max_epochs + 1):
        started = time.perf_counter()
        perm = run_rng.permutation(len(train_ids))
        batch_losses = []
        for lo in range(0, len(perm), train_cfg.batch_size):
            sel = perm[lo : lo + train_cfg.batch_size]
            if sel.size < 2:
                continue
            loss, grads = batch_loss_and_grads(
                params,
                fusion_cfg,
                train_cfg.loss,
                ssl_train[sel],
                spec_train[sel],
                text_train[sel],
                rng=run_rng,
            )
            adam_step(params, grads, state, train_cfg.learning_rate)
            params.clamp_temperature()
            batch_losses.append(loss)
        mrr = _dev_mrr(params, fusion_cfg, features, dev_ids, dev_seed)
        epochs_run = epoch
        log.append(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(batch_losses)),
                "dev_mrr": mrr,
                "elapsed_s": time.perf_counter() - started,
            }
        )
        if mrr > best_mrr:
            best_mrr = mrr
            best = params.copy()
            best_epoch = epoch
            stall = 0
        else:
            if mrr == best_mrr:
                best = params.copy()
                best_epoch = epoch
            stall += 1
            if stall >= train_cfg.early_stop_patience:
                break
    assert best is not None
    return FitResult(
        params=best,
        config=fusion_cfg,
        log=log,
        best_epoch=best_epoch,
        best_dev_mrr=float(best_mrr),
        epochs_run=epochs_run,
    )
