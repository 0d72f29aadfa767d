"""Load, save, and organize embedding spaces, labels, and anchor pairs.

On-disk layout:

- Embedding matrices are NPY format version 1.0 files, restricted to 2-D
  little-endian float32/float64 C-order arrays. float32 is widened to
  float64 on load; everything downstream runs in float64.
- Row identifiers live in a sidecar next to the matrix: ``<stem>.ids.txt``,
  one id per line, UTF-8. A missing sidecar yields synthesized positional
  ids ("row_0", "row_1", ...).
- Labels are CSV with header ``sample_id,label``; class names may be given
  in a ``<stem>.classes.json`` sidecar (a JSON list of strings).
- Cross-modal correspondences are CSV with header ``source_id,target_id``.
- A dataset manifest is a JSON document with space/label paths (relative to
  the manifest) and train/test row-index splits.

Rows are addressed by sample_id across files, never by position, so label
and correspondence files cannot silently misalign with a reordered matrix.
Loaded spaces are immutable (the underlying array is marked read-only) and
safe for concurrent readers.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import numpy.lib.format as npy_format

from .errors import DataError

logger = logging.getLogger(__name__)

IDS_SUFFIX = ".ids.txt"
CLASSES_SUFFIX = ".classes.json"


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass
class EmbeddingSpace:
    """An N x d matrix of real-valued representations with per-row ids."""

    name: str
    data: np.ndarray
    sample_ids: list[str]

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise DataError(
                f"space '{self.name}': expected 2-D array, got {self.data.ndim}-D"
            )
        n, d = self.data.shape
        if n < 1 or d < 1:
            raise DataError(f"space '{self.name}': empty matrix {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise DataError(f"space '{self.name}': non-finite values in matrix")
        self.sample_ids = [str(s) for s in self.sample_ids]
        if len(self.sample_ids) != n:
            raise DataError(
                f"space '{self.name}': {len(self.sample_ids)} ids for {n} rows"
            )
        if len(set(self.sample_ids)) != n:
            raise DataError(f"space '{self.name}': duplicate sample_ids")
        self.data.setflags(write=False)

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def row_index(self) -> dict[str, int]:
        return {sid: i for i, sid in enumerate(self.sample_ids)}


@dataclass
class LabelSet:
    """Class labels for samples, addressed by sample_id."""

    sample_ids: list[str]
    labels: np.ndarray
    class_names: list[str]

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.ndim != 1 or len(self.labels) != len(self.sample_ids):
            raise DataError("labels and sample_ids must have equal length")
        if len(self.class_names) < 2:
            raise DataError("a label set needs at least 2 classes")
        if len(self.labels) and (
            self.labels.min() < 0 or self.labels.max() >= len(self.class_names)
        ):
            raise DataError(
                f"labels must lie in [0, {len(self.class_names)}), "
                f"got range [{self.labels.min()}, {self.labels.max()}]"
            )
        self.labels.setflags(write=False)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def aligned_with(self, space: EmbeddingSpace) -> np.ndarray:
        """Label vector in the row order of ``space`` (joined on sample_id)."""
        by_id = dict(zip(self.sample_ids, self.labels.tolist()))
        try:
            return np.array([by_id[sid] for sid in space.sample_ids], dtype=np.int64)
        except KeyError as exc:
            raise DataError(
                f"space '{space.name}' row {exc.args[0]!r} has no label"
            ) from None


@dataclass
class AnchorSet:
    """Paired row indices establishing semantic correspondence."""

    source_space: str
    target_space: str
    pairs: list[tuple[int, int]]
    seed: int | None = None

    def __post_init__(self) -> None:
        if len(self.pairs) < 1:
            raise DataError("anchor set must contain at least one pair")
        src_rows = [p[0] for p in self.pairs]
        if len(set(src_rows)) != len(src_rows):
            raise DataError("anchor set contains duplicated source rows")

    def __len__(self) -> int:
        return len(self.pairs)

    def source_rows(self) -> np.ndarray:
        return np.array([p[0] for p in self.pairs], dtype=np.int64)

    def target_rows(self) -> np.ndarray:
        return np.array([p[1] for p in self.pairs], dtype=np.int64)


@dataclass
class DatasetManifest:
    """Paths and splits binding a dataset's files together."""

    spaces: dict[str, Path]
    labels: dict[str, Path]
    anchors: Path | None = None
    split: dict[str, dict[str, list[int]]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name, part in self.split.items():
            train = set(part.get("train", []))
            test = set(part.get("test", []))
            if train & test:
                raise DataError(f"split for '{name}': train and test overlap")


# ---------------------------------------------------------------------------
# NPY matrix files
# ---------------------------------------------------------------------------

def write_matrix(path: str | Path, matrix: np.ndarray) -> None:
    """Write a 2-D float64 matrix as an NPY version 1.0 file."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise DataError(f"expected 2-D array, got {matrix.ndim}-D")
    if not np.all(np.isfinite(matrix)):
        raise DataError("refusing to write non-finite values")
    out = np.ascontiguousarray(matrix, dtype="<f8")
    with open(path, "wb") as fh:
        npy_format.write_array_header_1_0(
            fh,
            {"descr": "<f8", "fortran_order": False, "shape": out.shape},
        )
        fh.write(out.tobytes(order="C"))


def read_matrix(path: str | Path) -> np.ndarray:
    """Read an NPY file, accepting only 2-D little-endian f4/f8 C-order data.

    float32 payloads are widened to float64.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        try:
            version = npy_format.read_magic(fh)
        except ValueError as exc:
            raise DataError(f"{path}: not an NPY file ({exc})") from None
        if version != (1, 0):
            raise DataError(f"{path}: unsupported NPY version {version}")
        try:
            shape, fortran_order, dtype = npy_format.read_array_header_1_0(fh)
        except ValueError as exc:
            raise DataError(f"{path}: malformed header ({exc})") from None
        if len(shape) != 2:
            raise DataError(f"{path}: expected 2-D array, got shape {shape}")
        if fortran_order:
            raise DataError(f"{path}: fortran-order arrays are not accepted")
        if dtype.byteorder == ">":
            raise DataError(f"{path}: big-endian data is not accepted")
        if dtype.kind != "f" or dtype.itemsize not in (4, 8):
            raise DataError(
                f"{path}: dtype {dtype.str!r} not accepted (need <f4 or <f8)"
            )
        count = int(shape[0]) * int(shape[1])
        payload = fh.read(count * dtype.itemsize)
        if len(payload) != count * dtype.itemsize:
            raise DataError(f"{path}: truncated data section")
        flat = np.frombuffer(payload, dtype=dtype, count=count)
    return flat.reshape(shape).astype(np.float64)


def _ids_path(matrix_path: Path) -> Path:
    return matrix_path.with_name(matrix_path.stem + IDS_SUFFIX)


def load_space(path: str | Path, name: str | None = None) -> EmbeddingSpace:
    """Load an embedding space from an NPY file plus optional ids sidecar."""
    path = Path(path)
    data = read_matrix(path)
    ids_file = _ids_path(path)
    if ids_file.exists():
        sample_ids = ids_file.read_text(encoding="utf-8").splitlines()
        if len(sample_ids) != data.shape[0]:
            raise DataError(
                f"{ids_file}: {len(sample_ids)} ids for {data.shape[0]} rows"
            )
    else:
        sample_ids = [f"row_{i}" for i in range(data.shape[0])]
    return EmbeddingSpace(name=name or path.stem, data=data, sample_ids=sample_ids)


def save_space(space: EmbeddingSpace, path: str | Path) -> None:
    """Write a space as NPY + ids sidecar; round-trips bit-exactly."""
    path = Path(path)
    write_matrix(path, space.data)
    _ids_path(path).write_text(
        "".join(sid + "\n" for sid in space.sample_ids), encoding="utf-8"
    )


# ---------------------------------------------------------------------------
# Labels, correspondences, manifests
# ---------------------------------------------------------------------------

def load_labels(path: str | Path) -> LabelSet:
    path = Path(path)
    sample_ids: list[str] = []
    labels: list[int] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["sample_id", "label"]:
            raise DataError(f"{path}: expected CSV header 'sample_id,label'")
        for row in reader:
            if not row:
                continue
            sample_ids.append(row[0])
            try:
                labels.append(int(row[1]))
            except (IndexError, ValueError):
                raise DataError(f"{path}: bad label row {row!r}") from None
    classes_file = path.with_name(path.stem + CLASSES_SUFFIX)
    if classes_file.exists():
        class_names = json.loads(classes_file.read_text(encoding="utf-8"))
        if not isinstance(class_names, list):
            raise DataError(f"{classes_file}: expected a JSON list of class names")
    else:
        n_classes = max(labels, default=1) + 1
        class_names = [f"class_{i}" for i in range(max(n_classes, 2))]
    return LabelSet(sample_ids=sample_ids, labels=np.array(labels), class_names=class_names)


def save_labels(labels: LabelSet, path: str | Path) -> None:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "label"])
        for sid, lab in zip(labels.sample_ids, labels.labels.tolist()):
            writer.writerow([sid, lab])
    classes_file = path.with_name(path.stem + CLASSES_SUFFIX)
    classes_file.write_text(
        json.dumps(labels.class_names, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_correspondence(path: str | Path) -> list[tuple[str, str]]:
    """Read a cross-modal correspondence CSV (source_id,target_id)."""
    path = Path(path)
    pairs: list[tuple[str, str]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["source_id", "target_id"]:
            raise DataError(f"{path}: expected CSV header 'source_id,target_id'")
        for row in reader:
            if not row:
                continue
            if len(row) < 2:
                raise DataError(f"{path}: bad correspondence row {row!r}")
            pairs.append((row[0], row[1]))
    return pairs


def save_correspondence(pairs: Sequence[tuple[str, str]], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source_id", "target_id"])
        for src, tgt in pairs:
            writer.writerow([src, tgt])


def correspondence_from_shared_ids(
    source: EmbeddingSpace, target: EmbeddingSpace
) -> list[tuple[str, str]]:
    """Identity correspondence over sample_ids present in both spaces."""
    target_ids = set(target.sample_ids)
    pairs = [(sid, sid) for sid in source.sample_ids if sid in target_ids]
    if not pairs:
        raise DataError(
            f"spaces '{source.name}' and '{target.name}' share no sample_ids"
        )
    return pairs


def sample_anchors(
    source: EmbeddingSpace,
    target: EmbeddingSpace,
    correspondence: Sequence[tuple[str, str]],
    k: int,
    seed: int,
) -> AnchorSet:
    """Draw k anchor pairs uniformly without replacement.

    Deterministic for a fixed seed. Every returned pair references rows whose
    sample_ids appear in ``correspondence``.
    """
    if k < 1:
        raise DataError(f"anchor count must be >= 1, got {k}")
    if k > len(correspondence):
        raise DataError(
            f"requested {k} anchors but only {len(correspondence)} correspondences available"
        )
    src_index = source.row_index()
    tgt_index = target.row_index()
    row_pairs: list[tuple[int, int]] = []
    for src_id, tgt_id in correspondence:
        if src_id not in src_index:
            raise DataError(f"correspondence id {src_id!r} not in space '{source.name}'")
        if tgt_id not in tgt_index:
            raise DataError(f"correspondence id {tgt_id!r} not in space '{target.name}'")
        row_pairs.append((src_index[src_id], tgt_index[tgt_id]))
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(row_pairs), size=k, replace=False)
    pairs = [row_pairs[i] for i in sorted(chosen.tolist())]
    logger.debug("sampled %d/%d anchors with seed %d", k, len(row_pairs), seed)
    return AnchorSet(
        source_space=source.name, target_space=target.name, pairs=pairs, seed=seed
    )


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: cannot parse manifest ({exc})") from None
    base = path.parent
    spaces = {name: base / rel for name, rel in doc.get("spaces", {}).items()}
    labels = {name: base / rel for name, rel in doc.get("labels", {}).items()}
    anchors = base / doc["anchors"] if doc.get("anchors") else None
    manifest = DatasetManifest(
        spaces=spaces, labels=labels, anchors=anchors, split=doc.get("split", {})
    )
    for group in (spaces, labels):
        for name, file_path in group.items():
            if not file_path.exists():
                raise DataError(f"{path}: referenced file missing: {file_path}")
    if anchors is not None and not anchors.exists():
        raise DataError(f"{path}: referenced file missing: {anchors}")
    return manifest


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    path = Path(path)
    base = path.parent
    doc = {
        "spaces": {k: str(v.relative_to(base)) for k, v in manifest.spaces.items()},
        "labels": {k: str(v.relative_to(base)) for k, v in manifest.labels.items()},
        "anchors": str(manifest.anchors.relative_to(base)) if manifest.anchors else None,
        "split": manifest.split,
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
