"""Embedding extraction from frozen encoders into latent-align file formats."""

from .encoders import (
    BUILTIN_MODELS,
    HashedNGramTextEncoder,
    ModelLoadError,
    PatchStatsVisionEncoder,
    UndecodableInput,
    load_encoder,
)
from .extract import (
    ExtractionError,
    ExtractionJob,
    ExtractionResult,
    extract,
    extract_prompt_bank,
    image_inputs,
    text_inputs,
)

__version__ = "0.1.0"
