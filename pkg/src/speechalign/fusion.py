"""Trainable fusion encoder: (SSL vector, spectrogram vector) -> joint embedding.

Two architectures share one parameter store:

* concat -- per-branch linear+ReLU projections, concatenation, then a stack
  of [linear -> batch norm -> ReLU -> dropout] blocks and a final linear head.
* gating -- per-branch two-layer FFNs to the output width, then a learned
  per-dimension two-way softmax that mixes the branches convexly.

Gradients are computed analytically (no autodiff); the forward pass caches
exactly what the backward pass needs. Everything runs in float64; the
checkpoint format stores float32.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from typing import BinaryIO

import numpy as np

from .encoders import FormatError

CHECKPOINT_MAGIC = b"CCKP"
CHECKPOINT_VERSION = 1

STRATEGIES = ("concat", "gating")
BN_EPS = 1e-5
BN_MOMENTUM = 0.1
TEMPERATURE_INIT = 1.0 / 0.07
TEMPERATURE_MIN = 1e-3
TEMPERATURE_MAX = 100.0


@dataclass
class FusionConfig:
    strategy: str = "concat"
    d_speech: int = 32
    d_spec: int = 64
    d_hidden: int = 64
    d_out: int = 32
    n_encoder_blocks: int = 2
    dropout_p: float = 0.1
    activation: str = "relu"

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        for name in ("d_speech", "d_spec", "d_hidden", "d_out"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.n_encoder_blocks < 0:
            raise ValueError("n_encoder_blocks must be >= 0")
        if not (0.0 <= self.dropout_p < 1.0):
            raise ValueError("dropout_p must lie in [0, 1)")
        if self.activation != "relu":
            raise ValueError("only relu activation is supported")


@dataclass
class FusionParams:
    """All trainable tensors plus batch-norm running statistics."""

    tensors: dict[str, np.ndarray]
    running: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def temperature(self) -> float:
        return float(self.tensors["temperature"][0])

    def copy(self) -> "FusionParams":
        return FusionParams(
            tensors={k: v.copy() for k, v in self.tensors.items()},
            running={k: v.copy() for k, v in self.running.items()},
        )

    def clamp_temperature(self) -> None:
        t = self.tensors["temperature"]
        self.tensors["temperature"] = np.clip(t, TEMPERATURE_MIN, TEMPERATURE_MAX)


@dataclass
class ForwardCache:
    """Intermediates from one forward call, consumed by backward."""

    strategy: str
    mode: str
    batch_size: int
    data: dict[str, np.ndarray | list | None]


def _block_widths(cfg: FusionConfig) -> list[tuple[int, int]]:
    """(in, out) widths of each concat encoder block; input is the 2*d_hidden concat."""
    widths = []
    w_in = 2 * cfg.d_hidden
    for _ in range(cfg.n_encoder_blocks):
        widths.append((w_in, cfg.d_hidden))
        w_in = cfg.d_hidden
    return widths


def param_shapes(cfg: FusionConfig) -> tuple[dict[str, tuple], dict[str, tuple]]:
    """Ordered name -> shape maps for trainable tensors and running stats.

    The iteration order here is the canonical serialization order: branch
    FFNs, encoder blocks, gates, temperature; running stats last.
    """
    trainable: dict[str, tuple] = {}
    running: dict[str, tuple] = {}
    if cfg.strategy == "concat":
        trainable["speech_ffn.w"] = (cfg.d_speech, cfg.d_hidden)
        trainable["speech_ffn.b"] = (cfg.d_hidden,)
        trainable["spec_ffn.w"] = (cfg.d_spec, cfg.d_hidden)
        trainable["spec_ffn.b"] = (cfg.d_hidden,)
        head_in = 2 * cfg.d_hidden
        for i, (w_in, w_out) in enumerate(_block_widths(cfg)):
            trainable[f"block{i}.w"] = (w_in, w_out)
            trainable[f"block{i}.b"] = (w_out,)
            trainable[f"block{i}.gamma"] = (w_out,)
            trainable[f"block{i}.beta"] = (w_out,)
            running[f"block{i}.running_mean"] = (w_out,)
            running[f"block{i}.running_var"] = (w_out,)
            head_in = w_out
        trainable["head.w"] = (head_in, cfg.d_out)
        trainable["head.b"] = (cfg.d_out,)
    else:
        for branch, d_in in (("speech_ffn", cfg.d_speech), ("spec_ffn", cfg.d_spec)):
            trainable[f"{branch}.w1"] = (d_in, cfg.d_hidden)
            trainable[f"{branch}.b1"] = (cfg.d_hidden,)
            trainable[f"{branch}.w2"] = (cfg.d_hidden, cfg.d_out)
            trainable[f"{branch}.b2"] = (cfg.d_out,)
        for gate in ("gate_speech", "gate_spec"):
            trainable[f"{gate}.w"] = (2 * cfg.d_out, cfg.d_out)
            trainable[f"{gate}.b"] = (cfg.d_out,)
    trainable["temperature"] = (1,)
    return trainable, running


def init_params(cfg: FusionConfig, seed: int) -> FusionParams:
    """Seeded init: fan-balanced uniform weights, zero biases, unit BN gain.

    Weight bound is sqrt(6 / (fan_in + fan_out)); the contrastive logit
    scale starts at 1/0.07.
    """
    rng = np.random.default_rng(seed)
    trainable_shapes, running_shapes = param_shapes(cfg)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in trainable_shapes.items():
        if name == "temperature":
            tensors[name] = np.full(shape, TEMPERATURE_INIT)
        elif name.endswith(".gamma"):
            tensors[name] = np.ones(shape)
        elif len(shape) == 2:
            bound = np.sqrt(6.0 / (shape[0] + shape[1]))
            tensors[name] = rng.uniform(-bound, bound, size=shape)
        else:
            tensors[name] = np.zeros(shape)
    running = {
        name: (np.ones(shape) if name.endswith("var") else np.zeros(shape))
        for name, shape in running_shapes.items()
    }
    return FusionParams(tensors=tensors, running=running)


def validate_params(params: FusionParams, cfg: FusionConfig) -> None:
    trainable_shapes, running_shapes = param_shapes(cfg)
    for name, shape in trainable_shapes.items():
        if name not in params.tensors:
            raise ValueError(f"missing parameter {name!r}")
        if params.tensors[name].shape != shape:
            raise ValueError(
                f"parameter {name!r} has shape {params.tensors[name].shape}, expected {shape}"
            )
    for name, shape in running_shapes.items():
        if name not in params.running or params.running[name].shape != shape:
            raise ValueError(f"missing or misshaped running stat {name!r}")
        if name.endswith("var") and not np.all(params.running[name] > 0):
            raise ValueError(f"{name!r} must be strictly positive")
    if params.temperature <= 0:
        raise ValueError("temperature must be positive")


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def forward(
    params: FusionParams,
    cfg: FusionConfig,
    speech_batch: np.ndarray,
    spec_batch: np.ndarray,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, ForwardCache]:
    """Map a batch of (SSL, spectrogram) feature pairs to joint embeddings.

    Train mode uses batch statistics for batch norm (updating the running
    averages) and samples dropout masks from ``rng``; eval mode uses running
    statistics, disables dropout, and never mutates state.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown mode {mode!r}")
    speech = np.asarray(speech_batch, dtype=np.float64)
    spec = np.asarray(spec_batch, dtype=np.float64)
    if speech.ndim != 2 or spec.ndim != 2 or speech.shape[0] != spec.shape[0]:
        raise ValueError("speech and spec batches must be 2-D with equal batch size")
    b = speech.shape[0]
    if b < 1:
        raise ValueError("batch must contain at least one row")
    if speech.shape[1] != cfg.d_speech or spec.shape[1] != cfg.d_spec:
        raise ValueError(
            f"feature dims ({speech.shape[1]}, {spec.shape[1]}) do not match config "
            f"({cfg.d_speech}, {cfg.d_spec})"
        )
    t = params.tensors
    if cfg.strategy == "concat":
        if mode == "train" and cfg.n_encoder_blocks > 0 and b < 2:
            raise ValueError("train mode needs a batch of at least 2 when batch norm is active")
        if mode == "train" and cfg.dropout_p > 0 and rng is None:
            raise ValueError("train mode with dropout needs an rng")
        a_s = speech @ t["speech_ffn.w"] + t["speech_ffn.b"]
        h_s = _relu(a_s)
        a_p = spec @ t["spec_ffn.w"] + t["spec_ffn.b"]
        h_p = _relu(a_p)
        z = np.hstack([h_s, h_p])
        blocks = []
        for i in range(cfg.n_encoder_blocks):
            z_in = z
            u = z_in @ t[f"block{i}.w"] + t[f"block{i}.b"]
            if mode == "train":
                mu = u.mean(axis=0)
                var = u.var(axis=0)
                params.running[f"block{i}.running_mean"] = (
                    (1 - BN_MOMENTUM) * params.running[f"block{i}.running_mean"] + BN_MOMENTUM * mu
                )
                params.running[f"block{i}.running_var"] = (
                    (1 - BN_MOMENTUM) * params.running[f"block{i}.running_var"] + BN_MOMENTUM * var
                )
            else:
                mu = params.running[f"block{i}.running_mean"]
                var = params.running[f"block{i}.running_var"]
            inv_std = 1.0 / np.sqrt(var + BN_EPS)
            x_hat = (u - mu) * inv_std
            y = t[f"block{i}.gamma"] * x_hat + t[f"block{i}.beta"]
            r = _relu(y)
            if mode == "train" and cfg.dropout_p > 0:
                mask = (rng.random(r.shape) >= cfg.dropout_p) / (1.0 - cfg.dropout_p)
                z = r * mask
            else:
                mask = None
                z = r
            blocks.append(
                {"z_in": z_in, "u": u, "x_hat": x_hat, "inv_std": inv_std, "y": y, "mask": mask}
            )
        out = z @ t["head.w"] + t["head.b"]
        cache = ForwardCache(
            strategy="concat",
            mode=mode,
            batch_size=b,
            data={"speech": speech, "spec": spec, "a_s": a_s, "a_p": a_p,
                  "blocks": blocks, "head_in": z},
        )
        return out, cache

    # gating
    a1_s = speech @ t["speech_ffn.w1"] + t["speech_ffn.b1"]
    r1_s = _relu(a1_s)
    h_s = r1_s @ t["speech_ffn.w2"] + t["speech_ffn.b2"]
    a1_p = spec @ t["spec_ffn.w1"] + t["spec_ffn.b1"]
    r1_p = _relu(a1_p)
    h_p = r1_p @ t["spec_ffn.w2"] + t["spec_ffn.b2"]
    c = np.hstack([h_s, h_p])
    g_s = c @ t["gate_speech.w"] + t["gate_speech.b"]
    g_p = c @ t["gate_spec.w"] + t["gate_spec.b"]
    # Per-dimension two-way softmax over (g_s, g_p).
    alpha = 1.0 / (1.0 + np.exp(g_p - g_s))
    out = alpha * h_s + (1.0 - alpha) * h_p
    cache = ForwardCache(
        strategy="gating",
        mode=mode,
        batch_size=b,
        data={"speech": speech, "spec": spec, "a1_s": a1_s, "r1_s": r1_s, "h_s": h_s,
              "a1_p": a1_p, "r1_p": r1_p, "h_p": h_p, "c": c, "alpha": alpha},
    )
    return out, cache


def backward(
    params: FusionParams,
    cfg: FusionConfig,
    cache: ForwardCache,
    grad_out: np.ndarray,
) -> dict[str, np.ndarray]:
    """Gradients of the loss w.r.t. every network parameter.

    ``grad_out`` is dLoss/dOutput from the loss; the temperature gradient is
    produced by the loss itself and is not part of this dict.
    """
    if cache.strategy != cfg.strategy:
        raise ValueError(f"cache was built for strategy {cache.strategy!r}, not {cfg.strategy!r}")
    if cache.mode != "train":
        raise ValueError("backward needs a cache from a train-mode forward")
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != (cache.batch_size, cfg.d_out):
        raise ValueError(
            f"grad_out shape {grad_out.shape} does not match ({cache.batch_size}, {cfg.d_out})"
        )
    t = params.tensors
    d = cache.data
    grads: dict[str, np.ndarray] = {}
    if cfg.strategy == "concat":
        grads["head.w"] = d["head_in"].T @ grad_out
        grads["head.b"] = grad_out.sum(axis=0)
        dz = grad_out @ t["head.w"].T
        for i in reversed(range(cfg.n_encoder_blocks)):
            blk = d["blocks"][i]
            if blk["mask"] is not None:
                dz = dz * blk["mask"]
            dy = dz * (blk["y"] > 0)
            grads[f"block{i}.gamma"] = (dy * blk["x_hat"]).sum(axis=0)
            grads[f"block{i}.beta"] = dy.sum(axis=0)
            dx_hat = dy * t[f"block{i}.gamma"]
            # Batch-norm backward through the batch statistics.
            du = (
                dx_hat
                - dx_hat.mean(axis=0)
                - blk["x_hat"] * (dx_hat * blk["x_hat"]).mean(axis=0)
            ) * blk["inv_std"]
            grads[f"block{i}.w"] = blk["z_in"].T @ du
            grads[f"block{i}.b"] = du.sum(axis=0)
            dz = du @ t[f"block{i}.w"].T
        h = cfg.d_hidden
        dh_s, dh_p = dz[:, :h], dz[:, h:]
        da_s = dh_s * (d["a_s"] > 0)
        grads["speech_ffn.w"] = d["speech"].T @ da_s
        grads["speech_ffn.b"] = da_s.sum(axis=0)
        da_p = dh_p * (d["a_p"] > 0)
        grads["spec_ffn.w"] = d["spec"].T @ da_p
        grads["spec_ffn.b"] = da_p.sum(axis=0)
        return grads

    alpha = d["alpha"]
    dh_s = grad_out * alpha
    dh_p = grad_out * (1.0 - alpha)
    d_delta = grad_out * (d["h_s"] - d["h_p"]) * alpha * (1.0 - alpha)
    grads["gate_speech.w"] = d["c"].T @ d_delta
    grads["gate_speech.b"] = d_delta.sum(axis=0)
    grads["gate_spec.w"] = -(d["c"].T @ d_delta)
    grads["gate_spec.b"] = -d_delta.sum(axis=0)
    dc = d_delta @ (t["gate_speech.w"] - t["gate_spec.w"]).T
    dh_s = dh_s + dc[:, : cfg.d_out]
    dh_p = dh_p + dc[:, cfg.d_out :]
    for branch, dh, x_key, a_key, r_key in (
        ("speech_ffn", dh_s, "speech", "a1_s", "r1_s"),
        ("spec_ffn", dh_p, "spec", "a1_p", "r1_p"),
    ):
        grads[f"{branch}.w2"] = d[r_key].T @ dh
        grads[f"{branch}.b2"] = dh.sum(axis=0)
        dr1 = dh @ t[f"{branch}.w2"].T
        da1 = dr1 * (d[a_key] > 0)
        grads[f"{branch}.w1"] = d[x_key].T @ da1
        grads[f"{branch}.b1"] = da1.sum(axis=0)
    return grads


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_checkpoint(path: str, cfg: FusionConfig, params: FusionParams, meta: dict | None = None) -> None:
    """Serialize config, metadata, and all tensors (float32, fixed order)."""
    validate_params(params, cfg)
    header = _canonical_json({"config": asdict(cfg), "meta": meta or {}})
    trainable_shapes, running_shapes = param_shapes(cfg)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
        fh.write(header)
        for name in trainable_shapes:
            fh.write(params.tensors[name].astype("<f4").tobytes())
        for name in running_shapes:
            fh.write(params.running[name].astype("<f4").tobytes())


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"truncated checkpoint while reading {what}")
    return data


def load_checkpoint(path: str) -> tuple[FusionConfig, FusionParams, dict]:
    """Read a checkpoint back; inverse of save_checkpoint up to f32 precision."""
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != CHECKPOINT_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        version, header_len = struct.unpack("<II", _read_exact(fh, 8, "header"))
        if version != CHECKPOINT_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        try:
            header = json.loads(_read_exact(fh, header_len, "config").decode("utf-8"))
            cfg = FusionConfig(**header["config"])
            meta = header["meta"]
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}: invalid checkpoint header ({exc})") from exc
        trainable_shapes, running_shapes = param_shapes(cfg)
        tensors = {}
        for name, shape in trainable_shapes.items():
            raw = _read_exact(fh, 4 * int(np.prod(shape)), name)
            tensors[name] = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)
        running = {}
        for name, shape in running_shapes.items():
            raw = _read_exact(fh, 4 * int(np.prod(shape)), name)
            running[name] = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after parameter tensors")
    params = FusionParams(tensors=tensors, running=running)
    validate_params(params, cfg)
    return cfg, params, meta


def fuse_eval(params: FusionParams, cfg: FusionConfig, speech: np.ndarray, spec: np.ndarray) -> np.ndarray:
    """Eval-mode forward without the cache; pure in (params, inputs)."""
    out, _ = forward(params, cfg, speech, spec, mode="eval")
    return out
