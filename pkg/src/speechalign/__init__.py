"""Audio-text embedding alignment and retrieval.

Fuses spectrogram features with self-supervised speech embeddings, aligns
the fused embedding to a frozen text-embedding space (Huber or contrastive
objective), and evaluates text -> speech retrieval.
"""

__version__ = "0.1.0"

from .dataset import ManifestRecord, SplitAssignment, corpus_stats, generate_synthetic, load_manifest, split
from .dsp import DspConfig, Spectrogram, Waveform, load_wav, log_mel, mel_filterbank, pool_spectrogram, spectrogram_features, stft_power
from .encoders import (
    FormatError,
    FrameEmbeddings,
    SentenceEmbedding,
    mean_pool,
    read_cemb,
    synthetic_frames,
    synthetic_text_embedding,
    write_cemb,
)
from .fusion import FusionConfig, FusionParams, backward, forward, init_params, load_checkpoint, save_checkpoint
from .losses import LossConfig, contrastive, huber, l2_normalize
from .retrieval import EmbeddingIndex, RetrievalReport, classify_and_f1, cosine, evaluate, metrics, rank, sample_candidates
from .trainer import AdamState, FeatureSet, TrainConfig, adam_step, fit
