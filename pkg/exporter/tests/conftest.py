"""Fixtures: tiny randomly-initialized local models and a small WAV corpus.

Everything is created on disk inside the test session; no network access
and no real pretrained weights are involved.
"""

import json
import os
import wave

import numpy as np
import pytest

os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")

VOCAB_WORDS = [
    "red", "blue", "green", "bird", "fish", "tree",
    "rock", "wind", "rain", "snow", "moon", "star",
]


@pytest.fixture(scope="session")
def tiny_speech_model_dir(tmp_path_factory):
    import torch
    from transformers import Wav2Vec2Config, Wav2Vec2FeatureExtractor, Wav2Vec2Model

    torch.manual_seed(0)
    out = tmp_path_factory.mktemp("tiny-wav2vec2")
    config = Wav2Vec2Config(
        hidden_size=16, num_hidden_layers=2, num_attention_heads=2, intermediate_size=32,
        conv_dim=(16, 16), conv_kernel=(10, 3), conv_stride=(5, 2), num_feat_extract_layers=2,
        feat_extract_norm="layer", do_stable_layer_norm=True, vocab_size=32,
    )
    Wav2Vec2Model(config).save_pretrained(out)
    Wav2Vec2FeatureExtractor(
        feature_size=1, sampling_rate=16000, padding_value=0.0,
        do_normalize=True, return_attention_mask=True,
    ).save_pretrained(out)
    return str(out)


@pytest.fixture(scope="session")
def tiny_text_model_dir(tmp_path_factory):
    import torch
    from transformers import BertConfig, BertModel, BertTokenizer

    torch.manual_seed(1)
    out = tmp_path_factory.mktemp("tiny-bert")
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"] + VOCAB_WORDS
    vocab_file = out / "vocab.txt"
    vocab_file.write_text("\n".join(vocab) + "\n")
    config = BertConfig(
        vocab_size=len(vocab), hidden_size=16, num_hidden_layers=2, num_attention_heads=2,
        intermediate_size=32, max_position_embeddings=64,
    )
    BertModel(config).save_pretrained(out)
    BertTokenizer(str(vocab_file)).save_pretrained(out)
    return str(out)


def write_sine_wav(path, freqs, seconds=0.35, rate=16000):
    t = np.arange(int(seconds * rate)) / rate
    samples = sum(0.3 * np.sin(2 * np.pi * f * t) for f in freqs)
    pcm = np.clip(np.round(samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(rate)
        wf.writeframes(pcm.tobytes())


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    """10-record manifest with tone WAVs and texts over the tiny vocabulary."""
    rng = np.random.default_rng(12)
    out = tmp_path_factory.mktemp("corpus")
    (out / "wav").mkdir()
    lines = []
    for i in range(10):
        rec_id = f"utt-{i:03d}"
        words = [VOCAB_WORDS[int(j)] for j in rng.integers(len(VOCAB_WORDS), size=3)]
        freqs = [300.0 + 150.0 * int(j) for j in rng.integers(12, size=2)]
        write_sine_wav(out / "wav" / f"{rec_id}.wav", freqs)
        lines.append(json.dumps({
            "id": rec_id,
            "audio": f"wav/{rec_id}.wav",
            "text": " ".join(words),
            "category": "synthetic",
            "language": "en",
        }))
    (out / "manifest.jsonl").write_text("\n".join(lines) + "\n")
    return str(out)


@pytest.fixture(scope="session")
def manifest_path(corpus_dir):
    return os.path.join(corpus_dir, "manifest.jsonl")
