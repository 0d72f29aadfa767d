"""Frozen encoder backends.

Every backend maps a batch of raw inputs to a B x d float32 matrix and is
strictly deterministic: weights are never updated (transformer models run
in eval mode under no_grad), and the classical encoders are pure functions
of their input bytes. Each backend reports the pooling convention it uses
so the extraction manifest can record it.

Model identifiers:

- ``hashed-ngram``          text; feature-hashed word uni+bigrams, L2-normalized
- ``patch-stats``           vision; 8x8 RGB patch means + 64-bin luminance histogram
- ``hf:<model-id>``         any transformers checkpoint (text or vision)
- ``st:<model-id>``         any sentence-transformers checkpoint (text)

The ``hf:`` / ``st:`` backends require the optional heavy dependencies and a
reachable model cache or hub; a failure to obtain the model raises
``ModelLoadError``.
"""

from __future__ import annotations

import hashlib
import logging
import re
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

MODALITIES = ("text", "vision")


class UndecodableInput(ValueError):
    """A single input that cannot be decoded (skipped, not fatal)."""


class ModelLoadError(RuntimeError):
    """The requested encoder could not be constructed."""


_TOKEN_RE = re.compile(r"[a-z0-9]+")


class HashedNGramTextEncoder:
    """Feature hashing over word unigrams and bigrams.

    A classical frozen text encoder: no weights, fully deterministic across
    processes (hashing via blake2b, not Python's salted hash). Rows are
    L2-normalized.
    """

    modality = "text"
    pooling = "hashed-ngram-sum/l2"

    def __init__(self, dim: int = 256):
        if dim < 2:
            raise ModelLoadError(f"hashed-ngram needs dim >= 2, got {dim}")
        self.name = "hashed-ngram"
        self.dim = dim

    def prepare(self, line: str) -> list[str]:
        tokens = _TOKEN_RE.findall(str(line).lower())
        if not tokens:
            raise UndecodableInput("no tokens after normalization")
        return tokens

    def _features(self, tokens: list[str]):
        yield from tokens
        for a, b in zip(tokens, tokens[1:]):
            yield f"{a}__{b}"

    def encode_batch(self, batch: list[list[str]]) -> np.ndarray:
        out = np.zeros((len(batch), self.dim), dtype=np.float64)
        for row, tokens in enumerate(batch):
            for feature in self._features(tokens):
                digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest()
                value = int.from_bytes(digest, "little")
                index = value % self.dim
                sign = 1.0 if (value >> 63) & 1 else -1.0
                out[row, index] += sign
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        return (out / norms).astype(np.float32)


class PatchStatsVisionEncoder:
    """Downsampled RGB patch means plus a luminance histogram (256-dim)."""

    modality = "vision"
    pooling = "patch-means+luma-histogram"
    dim = 8 * 8 * 3 + 64

    def __init__(self):
        self.name = "patch-stats"

    def prepare(self, path: str | Path):
        from PIL import Image, UnidentifiedImageError

        try:
            with Image.open(path) as img:
                return img.convert("RGB").copy()
        except (OSError, UnidentifiedImageError, ValueError) as exc:
            raise UndecodableInput(f"cannot decode image {path}: {exc}") from None

    def encode_batch(self, batch: list) -> np.ndarray:
        from PIL import Image

        rows = []
        for image in batch:
            small = np.asarray(
                image.resize((8, 8), Image.Resampling.BILINEAR), dtype=np.float64
            ) / 255.0
            luma = np.asarray(image.convert("L"), dtype=np.float64).ravel() / 255.0
            hist, _ = np.histogram(luma, bins=64, range=(0.0, 1.0))
            hist = hist / max(luma.size, 1)
            rows.append(np.concatenate([small.ravel(), hist]))
        return np.asarray(rows, dtype=np.float32)


class TransformersEncoder:
    """Any transformers checkpoint, frozen, with its standard pooled output.

    Text models pool with ``pooler_output`` when the architecture provides
    one, otherwise the first (class) token; vision models likewise. The
    pooling actually used is recorded in ``self.pooling``.
    """

    def __init__(self, model_id: str, modality: str, batch_device: str = "cpu"):
        self.name = f"hf:{model_id}"
        self.modality = modality
        try:
            import torch
            from transformers import AutoModel

            self._torch = torch
            self._model = AutoModel.from_pretrained(model_id)
            self._model.eval()
            self._model.to(batch_device)
            if modality == "text":
                from transformers import AutoTokenizer

                self._processor = AutoTokenizer.from_pretrained(model_id)
            else:
                from transformers import AutoImageProcessor

                self._processor = AutoImageProcessor.from_pretrained(model_id)
        except Exception as exc:
            raise ModelLoadError(f"cannot load transformers model {model_id!r}: {exc}") from None
        self._device = batch_device
        # resolved to the convention actually used on the first encoded batch
        self.pooling = "pooler-or-first-token"

    def prepare(self, raw):
        if self.modality == "text":
            text = str(raw)
            if not text.strip():
                raise UndecodableInput("empty text line")
            return text
        from PIL import Image, UnidentifiedImageError

        try:
            with Image.open(raw) as img:
                return img.convert("RGB").copy()
        except (OSError, UnidentifiedImageError, ValueError) as exc:
            raise UndecodableInput(f"cannot decode image {raw}: {exc}") from None

    def encode_batch(self, batch: list) -> np.ndarray:
        torch = self._torch
        if self.modality == "text":
            encoded = self._processor(
                batch, padding=True, truncation=True, return_tensors="pt"
            ).to(self._device)
        else:
            encoded = self._processor(images=batch, return_tensors="pt").to(self._device)
        with torch.no_grad():
            output = self._model(**encoded)
        pooled = getattr(output, "pooler_output", None)
        if pooled is not None:
            self.pooling = "pooler_output"
        else:
            pooled = output.last_hidden_state[:, 0]
            self.pooling = "first-token"
        return pooled.cpu().numpy().astype(np.float32)


class SentenceTransformerEncoder:
    """sentence-transformers checkpoint; uses the model's own pooling."""

    modality = "text"
    pooling = "model-default"

    def __init__(self, model_id: str):
        self.name = f"st:{model_id}"
        try:
            from sentence_transformers import SentenceTransformer

            self._model = SentenceTransformer(model_id)
            self._model.eval()
        except Exception as exc:
            raise ModelLoadError(
                f"cannot load sentence-transformers model {model_id!r}: {exc}"
            ) from None

    def prepare(self, raw) -> str:
        text = str(raw)
        if not text.strip():
            raise UndecodableInput("empty text line")
        return text

    def encode_batch(self, batch: list[str]) -> np.ndarray:
        return np.asarray(
            self._model.encode(batch, show_progress_bar=False), dtype=np.float32
        )


BUILTIN_MODELS = {
    "hashed-ngram": "text",
    "patch-stats": "vision",
}


def load_encoder(model_id: str, modality: str, dim: int | None = None):
    """Construct a frozen encoder for ``model_id`` in the given modality."""
    if modality not in MODALITIES:
        raise ModelLoadError(f"modality must be one of {MODALITIES}, got {modality!r}")
    if model_id == "hashed-ngram":
        if modality != "text":
            raise ModelLoadError("hashed-ngram is a text encoder")
        return HashedNGramTextEncoder(dim=dim or 256)
    if model_id == "patch-stats":
        if modality != "vision":
            raise ModelLoadError("patch-stats is a vision encoder")
        return PatchStatsVisionEncoder()
    if model_id.startswith("hf:"):
        return TransformersEncoder(model_id[3:], modality)
    if model_id.startswith("st:"):
        if modality != "text":
            raise ModelLoadError("sentence-transformers models are text encoders")
        return SentenceTransformerEncoder(model_id[3:])
    raise ModelLoadError(
        f"unknown model {model_id!r}; use one of {sorted(BUILTIN_MODELS)} "
        "or an 'hf:<id>' / 'st:<id>' checkpoint"
    )
