"""Unimodal zero-shot classification via cross-modal alignment.

The standard multimodal recipe scores an image embedding against class text
embeddings by cosine similarity, which requires a jointly trained
image/text space. The unimodal variant removes that requirement: image
embeddings are first translated into the text space through an
AlignmentTransform fitted on image/text anchor pairs, and similarity is then
computed entirely between text-space vectors.

Prompt handling: each class is described by one or more prompt embeddings;
prompts are unit-normalized, averaged, and the mean re-normalized to give
the class embedding. Translated image embeddings are unit-normalized after
de-normalization, just before cosine scoring.

Binary tasks score positive-vs-negative prompt banks: the ranking score is
score(positive class) - score(negative class).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import DataError
from .metrics import auroc, macro_auroc
from .store import EmbeddingSpace, read_matrix
from .transform import AlignmentTransform, translate_rows

logger = logging.getLogger(__name__)


@dataclass
class ClassPromptBank:
    """Per-class prompt embeddings plus their normalized class centroids."""

    class_names: list[str]
    prompt_embeddings: list[np.ndarray]
    class_embedding: np.ndarray
    roles: list[str] | None = None

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def dim(self) -> int:
        return self.class_embedding.shape[1]

    def positive_index(self) -> int:
        """Index of the positive class for binary score differencing."""
        if self.roles is not None:
            for i, role in enumerate(self.roles):
                if role == "positive":
                    return i
        return self.n_classes - 1

    def negative_index(self) -> int:
        if self.roles is not None:
            for i, role in enumerate(self.roles):
                if role == "negative":
                    return i
        return 0


@dataclass
class ZeroShotResult:
    scores: np.ndarray
    predictions: np.ndarray
    auroc: float | None = None


def _unit_rows(matrix: np.ndarray, what: str) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise DataError(f"zero-norm {what}")
    return matrix / norms


def build_prompt_bank(
    per_class_prompts: Mapping[str, np.ndarray],
    roles: Mapping[str, str] | None = None,
) -> ClassPromptBank:
    """Average unit-normalized prompts per class into unit class embeddings."""
    if not per_class_prompts:
        raise DataError("prompt bank needs at least one class")
    class_names = list(per_class_prompts.keys())
    dims = set()
    prompt_embeddings: list[np.ndarray] = []
    centroids: list[np.ndarray] = []
    for name in class_names:
        prompts = np.asarray(per_class_prompts[name], dtype=np.float64)
        if prompts.ndim == 1:
            prompts = prompts[None, :]
        if prompts.ndim != 2 or prompts.shape[0] < 1:
            raise DataError(f"class {name!r}: prompts must form a P x d matrix, P >= 1")
        if not np.all(np.isfinite(prompts)):
            raise DataError(f"class {name!r}: non-finite prompt embedding")
        dims.add(prompts.shape[1])
        unit_prompts = _unit_rows(prompts, f"prompt embedding for class {name!r}")
        mean = unit_prompts.mean(axis=0)
        norm = np.linalg.norm(mean)
        if norm == 0:
            raise DataError(f"degenerate class embedding for class {name!r}")
        prompt_embeddings.append(prompts)
        centroids.append(mean / norm)
    if len(dims) != 1:
        raise DataError(f"prompt dimensions differ across classes: {sorted(dims)}")
    role_list = [roles.get(name, "") for name in class_names] if roles else None
    return ClassPromptBank(
        class_names=class_names,
        prompt_embeddings=prompt_embeddings,
        class_embedding=np.stack(centroids),
        roles=role_list,
    )


def _cosine_result(
    embeddings: np.ndarray, bank: ClassPromptBank, labels: np.ndarray | None
) -> ZeroShotResult:
    unit = _unit_rows(embeddings, "embedding")
    scores = unit @ bank.class_embedding.T
    predictions = np.argmax(scores, axis=1)  # ties resolve to the lowest index
    roc = None
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
        if bank.n_classes == 2:
            pos, neg = bank.positive_index(), bank.negative_index()
            margin = scores[:, pos] - scores[:, neg]
            roc = auroc(margin, (labels == pos).astype(np.int64))
        else:
            roc = macro_auroc(scores, labels)
    return ZeroShotResult(scores=scores, predictions=predictions, auroc=roc)


def zero_shot_unimodal(
    image_space: EmbeddingSpace,
    transform: AlignmentTransform,
    bank: ClassPromptBank,
    labels: np.ndarray | None = None,
) -> ZeroShotResult:
    """Translate image embeddings into the text space, then cosine-score."""
    if transform.source_dim != image_space.dim:
        raise DataError(
            f"transform expects {transform.source_dim}-dim images, "
            f"space is {image_space.dim}-dim"
        )
    if transform.target_dim != bank.dim:
        raise DataError(
            f"transform target dim {transform.target_dim} does not match "
            f"prompt bank dim {bank.dim}"
        )
    translated = translate_rows(transform, image_space.data)
    return _cosine_result(translated, bank, labels)


def zero_shot_multimodal(
    image_space: EmbeddingSpace,
    bank: ClassPromptBank,
    labels: np.ndarray | None = None,
) -> ZeroShotResult:
    """Cosine scoring without any transform (shared-space baseline)."""
    if image_space.dim != bank.dim:
        raise DataError(
            f"image dim {image_space.dim} does not match prompt bank dim {bank.dim}"
        )
    return _cosine_result(image_space.data, bank, labels)


def load_prompt_bank(path: str | Path) -> ClassPromptBank:
    """Load a bank from a JSON listing of class names, roles, and NPY files.

    Schema: ``{"classes": [{"name": ..., "file": ..., "role": ...}, ...]}``
    with file paths relative to the JSON document; ``role`` is optional
    ("positive" / "negative" for binary score differencing).
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: cannot parse prompt bank ({exc})") from None
    entries = doc.get("classes")
    if not isinstance(entries, list) or not entries:
        raise DataError(f"{path}: prompt bank needs a non-empty 'classes' list")
    prompts: dict[str, np.ndarray] = {}
    roles: dict[str, str] = {}
    for entry in entries:
        name = entry.get("name")
        file_rel = entry.get("file")
        if not name or not file_rel:
            raise DataError(f"{path}: every class needs 'name' and 'file'")
        prompts[name] = read_matrix(path.parent / file_rel)
        if entry.get("role"):
            roles[name] = entry["role"]
    return build_prompt_bank(prompts, roles=roles or None)
