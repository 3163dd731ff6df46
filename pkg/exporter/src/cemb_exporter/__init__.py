"""Bridge from pretrained speech/text backbones to CEMB interchange files."""

__version__ = "0.1.0"

from .cemb import FormatError, read_records, write_records
from .export import ExportConfig, export_speech_frames, export_text_embeddings, verify_roundtrip
