"""Run pretrained backbones over a manifest and write CEMB interchange files.

Speech models (Wav2Vec2/HuBERT families) produce frame-level hidden states
(kind 1); text models produce one sentence vector per record (kind 0),
either the model's native sentence embedding or a masked mean over token
states. Each output file gets a `<name>.meta.json` sidecar recording the
model id, pooling, and date.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np
import torch

from . import audio, cemb, manifest

POOLING_MODES = ("model-native-sentence", "mean-of-tokens")


@dataclass
class ExportConfig:
    speech_model_id: str = ""
    text_model_id: str = ""
    device: str = "cpu"
    batch_size: int = 8
    text_pooling: str = "model-native-sentence"

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.text_pooling not in POOLING_MODES:
            raise ValueError(f"text_pooling must be one of {POOLING_MODES}")


def _write_sidecar(out_path: str, payload: dict) -> None:
    payload = dict(payload)
    payload["created"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    with open(f"{out_path}.meta.json", "w", encoding="utf-8") as fh:
        fh.write(json.dumps(payload, sort_keys=True) + "\n")


def _batches(items: list, size: int):
    for lo in range(0, len(items), size):
        yield items[lo : lo + size]


def export_speech_frames(manifest_path: str, out_path: str, cfg: ExportConfig,
                         audio_root: str | None = None) -> dict:
    """Final hidden states of the pretrained speech model, one record per id."""
    if not cfg.speech_model_id:
        raise ValueError("speech_model_id must be set")
    from transformers import AutoFeatureExtractor, AutoModel

    records = manifest.load(manifest_path)
    root = audio_root or os.path.dirname(os.path.abspath(manifest_path))
    waves = []
    for rec in records:
        wav_path = os.path.join(root, rec.audio)
        if not os.path.exists(wav_path):
            raise ValueError(f"record {rec.id!r}: audio file missing ({wav_path})")
        waves.append(audio.load_wav(wav_path))

    extractor = AutoFeatureExtractor.from_pretrained(cfg.speech_model_id)
    model = AutoModel.from_pretrained(cfg.speech_model_id).to(cfg.device).eval()
    out: list[tuple[str, np.ndarray]] = []
    with torch.inference_mode():
        for batch in _batches(list(zip(records, waves)), cfg.batch_size):
            batch_waves = [w for _, w in batch]
            feats = extractor(
                batch_waves, sampling_rate=audio.SAMPLE_RATE, padding=True,
                return_tensors="pt", return_attention_mask=True,
            )
            mask = feats.get("attention_mask")
            if mask is not None and hasattr(model, "_get_feat_extract_output_lengths"):
                hidden = model(
                    feats["input_values"].to(cfg.device), attention_mask=mask.to(cfg.device)
                ).last_hidden_state.cpu().numpy()
                lengths = model._get_feat_extract_output_lengths(mask.sum(-1)).tolist()
                for (rec, _), states, length in zip(batch, hidden, lengths):
                    out.append((rec.id, states[: max(1, int(length))]))
            else:
                # No usable padding mask: run the batch one utterance at a time.
                for rec, wave in batch:
                    single = extractor([wave], sampling_rate=audio.SAMPLE_RATE,
                                       return_tensors="pt")
                    states = model(single["input_values"].to(cfg.device)).last_hidden_state
                    out.append((rec.id, states[0].cpu().numpy()))
    cemb.write_records(out_path, cemb.KIND_FRAMES, out)
    dim = out[0][1].shape[-1] if out else 0
    _write_sidecar(out_path, {"model_id": cfg.speech_model_id, "kind": "speech-frames",
                              "dim": dim, "count": len(out)})
    return {"count": len(out), "dim": dim}


def export_text_embeddings(manifest_path: str, out_path: str, cfg: ExportConfig) -> dict:
    """One sentence vector per manifest record from the pretrained text model."""
    if not cfg.text_model_id:
        raise ValueError("text_model_id must be set")
    from transformers import AutoModel, AutoTokenizer

    records = manifest.load(manifest_path)
    tokenizer = AutoTokenizer.from_pretrained(cfg.text_model_id)
    model = AutoModel.from_pretrained(cfg.text_model_id).to(cfg.device).eval()
    out: list[tuple[str, np.ndarray]] = []
    pooling_used = cfg.text_pooling
    with torch.inference_mode():
        for batch in _batches(records, cfg.batch_size):
            enc = tokenizer([rec.text for rec in batch], padding=True, truncation=True,
                            return_tensors="pt").to(cfg.device)
            outputs = model(**enc)
            pooled = None
            if cfg.text_pooling == "model-native-sentence":
                pooled = getattr(outputs, "pooler_output", None)
                if pooled is None:
                    pooling_used = "mean-of-tokens"  # model has no native sentence head
            if pooled is None:
                mask = enc["attention_mask"].unsqueeze(-1).to(outputs.last_hidden_state.dtype)
                pooled = (outputs.last_hidden_state * mask).sum(1) / mask.sum(1).clamp(min=1.0)
            vectors = pooled.cpu().numpy()
            out.extend((rec.id, vec) for rec, vec in zip(batch, vectors))
    cemb.write_records(out_path, cemb.KIND_SENTENCE, out)
    dim = out[0][1].shape[-1] if out else 0
    _write_sidecar(out_path, {"model_id": cfg.text_model_id, "kind": "text-sentences",
                              "pooling": pooling_used, "dim": dim, "count": len(out)})
    return {"count": len(out), "dim": dim, "pooling": pooling_used}


def verify_roundtrip(cemb_path: str) -> dict:
    """Re-read a CEMB file and check structure and value sanity.

    Raises FormatError on any violation (bad magic/version/kind, truncation,
    duplicate ids, trailing bytes, non-finite values).
    """
    kind, dim, records = cemb.read_records(cemb_path)
    total = 0
    for rec_id, values in records:
        if not np.all(np.isfinite(values)):
            raise cemb.FormatError(f"{cemb_path}: non-finite values in record {rec_id!r}")
        if values.shape[-1] != dim:
            raise cemb.FormatError(f"{cemb_path}: record {rec_id!r} dim mismatch")
        total += values.size
    return {"path": str(cemb_path), "kind": kind, "dim": dim,
            "count": len(records), "total_values": total, "ok": True}
