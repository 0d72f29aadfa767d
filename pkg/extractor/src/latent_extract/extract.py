"""Batch extraction of embeddings into the latent-align file formats.

One extraction job produces, for an output stem ``out/reports``:

- ``out/reports.npy``            N x d float32, NPY format version 1.0
- ``out/reports.ids.txt``        one id per row, UTF-8, input order
- ``out/reports.manifest.json``  space entry + encoder provenance (model,
                                 modality, pooling), mergeable into a
                                 dataset manifest
- ``out/reports.skipped.txt``    only when inputs were skipped

Rows appear in input order; undecodable inputs are skipped with a warning
and recorded in the skip list. Encoder weights are never updated.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import numpy.lib.format as npy_format

from .encoders import UndecodableInput, load_encoder

logger = logging.getLogger(__name__)

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tif", ".tiff", ".webp"}


class ExtractionError(ValueError):
    """Job-level failure: bad inputs, nothing extractable, unwritable output."""


@dataclass
class ExtractionJob:
    model: str
    modality: str  # "text" | "vision"
    inputs: list[tuple[str, object]]  # (row id, raw input) in output order
    output_stem: Path
    batch_size: int = 32
    dim: int | None = None  # classical backends only

    def __post_init__(self) -> None:
        self.output_stem = Path(self.output_stem)
        if self.batch_size < 1:
            raise ExtractionError("batch_size must be >= 1")
        if not self.inputs:
            raise ExtractionError("extraction job has no inputs")
        ids = [row_id for row_id, _ in self.inputs]
        if len(set(ids)) != len(ids):
            raise ExtractionError("input ids are not unique")


@dataclass
class ExtractionResult:
    matrix_path: Path
    ids_path: Path
    manifest_path: Path
    n_rows: int
    dim: int
    pooling: str
    skipped: list[tuple[str, str]] = field(default_factory=list)


def text_inputs(path: str | Path) -> list[tuple[str, str]]:
    """One input per line; ids are the 0-based line indices."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [(str(i), line) for i, line in enumerate(lines)]


def image_inputs(path: str | Path) -> list[tuple[str, str]]:
    """Images from a directory (recursive, sorted) or a list file."""
    path = Path(path)
    if path.is_dir():
        files = sorted(
            p for p in path.rglob("*")
            if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
        )
        if not files:
            raise ExtractionError(f"no image files under {path}")
        return [(str(p.relative_to(path)), str(p)) for p in files]
    listed = Path(path).read_text(encoding="utf-8").splitlines()
    listed = [line.strip() for line in listed if line.strip()]
    if not listed:
        raise ExtractionError(f"no image paths listed in {path}")
    return [(line, line) for line in listed]


def _write_npy_f4(path: Path, matrix: np.ndarray) -> None:
    out = np.ascontiguousarray(matrix, dtype="<f4")
    with open(path, "wb") as fh:
        npy_format.write_array_header_1_0(
            fh, {"descr": "<f4", "fortran_order": False, "shape": out.shape}
        )
        fh.write(out.tobytes(order="C"))


def extract(job: ExtractionJob) -> ExtractionResult:
    """Run one job: decode, batch-encode, and write matrix + sidecars."""
    encoder = load_encoder(job.model, job.modality, dim=job.dim)

    kept_ids: list[str] = []
    prepared: list[object] = []
    skipped: list[tuple[str, str]] = []
    for row_id, raw in job.inputs:
        try:
            prepared.append(encoder.prepare(raw))
            kept_ids.append(row_id)
        except UndecodableInput as exc:
            logger.warning("skipping input %r: %s", row_id, exc)
            skipped.append((row_id, str(exc)))
    if not prepared:
        raise ExtractionError("every input was skipped; nothing to extract")

    blocks = [
        encoder.encode_batch(prepared[start : start + job.batch_size])
        for start in range(0, len(prepared), job.batch_size)
    ]
    matrix = np.vstack(blocks).astype(np.float32)
    if matrix.shape[0] != len(kept_ids):
        raise ExtractionError(
            f"encoder returned {matrix.shape[0]} rows for {len(kept_ids)} inputs"
        )
    if not np.all(np.isfinite(matrix)):
        raise ExtractionError("encoder produced non-finite values")

    stem = job.output_stem
    stem.parent.mkdir(parents=True, exist_ok=True)
    matrix_path = stem.with_name(stem.name + ".npy")
    ids_path = stem.with_name(stem.name + ".ids.txt")
    manifest_path = stem.with_name(stem.name + ".manifest.json")
    _write_npy_f4(matrix_path, matrix)
    ids_path.write_text("".join(s + "\n" for s in kept_ids), encoding="utf-8")
    if skipped:
        skip_path = stem.with_name(stem.name + ".skipped.txt")
        skip_path.write_text(
            "".join(f"{row_id}\t{reason}\n" for row_id, reason in skipped),
            encoding="utf-8",
        )

    manifest = {
        "space": {
            "name": stem.name,
            "file": matrix_path.name,
            "ids_file": ids_path.name,
            "rows": int(matrix.shape[0]),
            "dim": int(matrix.shape[1]),
        },
        "encoder": {
            "model": encoder.name,
            "modality": job.modality,
            "pooling": encoder.pooling,
            "batch_size": job.batch_size,
        },
        "skipped": [row_id for row_id, _ in skipped],
    }
    manifest_path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    logger.info(
        "extracted %d x %d (%s, %s), %d skipped",
        matrix.shape[0], matrix.shape[1], encoder.name, encoder.pooling, len(skipped),
    )
    return ExtractionResult(
        matrix_path=matrix_path,
        ids_path=ids_path,
        manifest_path=manifest_path,
        n_rows=int(matrix.shape[0]),
        dim=int(matrix.shape[1]),
        pooling=encoder.pooling,
        skipped=skipped,
    )


def extract_prompt_bank(
    classes: list[dict],
    model: str,
    output_dir: str | Path,
    batch_size: int = 32,
    dim: int | None = None,
) -> Path:
    """Embed per-class prompt files and emit a loadable prompt-bank JSON.

    ``classes`` entries: ``{"name": ..., "prompts": <text file>, "role": ...}``
    (role optional). Output: one ``<name>.npy`` per class plus ``bank.json``
    in the consumer's prompt-bank schema.
    """
    if not classes:
        raise ExtractionError("prompt bank needs at least one class")
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for entry in classes:
        name = entry.get("name")
        prompts_file = entry.get("prompts")
        if not name or not prompts_file:
            raise ExtractionError("every bank class needs 'name' and 'prompts'")
        result = extract(ExtractionJob(
            model=model,
            modality="text",
            inputs=text_inputs(prompts_file),
            output_stem=output_dir / str(name),
            batch_size=batch_size,
            dim=dim,
        ))
        bank_entry = {"name": str(name), "file": result.matrix_path.name}
        if entry.get("role"):
            bank_entry["role"] = entry["role"]
        entries.append(bank_entry)
    bank_path = output_dir / "bank.json"
    bank_path.write_text(
        json.dumps({"classes": entries}, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return bank_path
