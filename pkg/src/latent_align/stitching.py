"""Linear-probe decoders and model-stitching evaluation.

A probe is a linear max-margin classifier (one weight row per class,
one-vs-rest) trained by mini-batch subgradient descent on the L2-regularized
hinge loss, on raw (unscaled) embeddings of its own space. Stitching encodes
with a source space, translates rows through an AlignmentTransform into the
probe's space, and decodes with the probe; the upper bound is the probe
evaluated directly on its own space.

Binary AUROC uses the positive class's raw decision value (class index 1);
multiclass tasks use macro-averaged one-vs-rest AUROC.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .metrics import accuracy, auroc, macro_auroc
from .store import EmbeddingSpace, LabelSet, read_matrix, write_matrix
from .transform import AlignmentTransform, translate_rows

logger = logging.getLogger(__name__)


@dataclass
class ProbeHyperparams:
    c_reg: float = 1.0
    max_epochs: int = 1000
    seed: int = 0
    batch_size: int = 256

    def __post_init__(self) -> None:
        if self.c_reg <= 0:
            raise DataError("c_reg must be positive")
        if self.max_epochs < 1 or self.batch_size < 1:
            raise DataError("max_epochs and batch_size must be >= 1")


@dataclass
class LinearProbe:
    """A trained linear classifier over one embedding space."""

    weights: np.ndarray
    bias: np.ndarray
    class_names: list[str]
    trained_on: str
    hyperparams: ProbeHyperparams
    training_accuracy: float = float("nan")

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or len(self.class_names) < 2:
            raise DataError("probe needs a C x d weight matrix with C >= 2")
        if self.weights.shape[0] != len(self.class_names):
            raise DataError("one weight row per class required")
        if self.bias.shape != (self.weights.shape[0],):
            raise DataError("bias must hold one entry per class")

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


@dataclass
class StitchReport:
    source_space: str
    target_space: str
    kind: str
    anchor_count: int
    seed: int | None
    auroc: float
    accuracy: float


def train_probe(
    space: EmbeddingSpace,
    labels: LabelSet,
    train_rows: np.ndarray,
    hyperparams: ProbeHyperparams | None = None,
) -> LinearProbe:
    """Fit one-vs-rest hinge-loss classifiers by seeded subgradient descent.

    The regularization weight is ``1 / (c_reg * n)`` (so larger ``c_reg``
    means a softer penalty, as in the usual SVM C parameterization); sample
    order is reshuffled every epoch from the probe seed, and the step size
    decays as 1/t. Deterministic for fixed inputs and seed.
    """
    hp = hyperparams or ProbeHyperparams()
    train_rows = np.asarray(train_rows, dtype=np.int64)
    X = space.data[train_rows]
    y = labels.aligned_with(space)[train_rows]
    if not np.all(np.isfinite(X)):
        raise DataError("probe training features contain non-finite values")
    present = np.unique(y)
    if len(present) < 2:
        raise DataError("probe training needs at least 2 classes present")

    n, d = X.shape
    n_classes = labels.n_classes
    lam = 1.0 / (hp.c_reg * n)
    W = np.zeros((n_classes, d))
    B = np.zeros(n_classes)
    # n x C matrix of one-vs-rest targets in {-1, +1}
    Y = np.where(y[:, None] == np.arange(n_classes)[None, :], 1.0, -1.0)

    rng = np.random.default_rng(hp.seed)
    t = 0
    warmup = 100  # steps before the 1/t decay takes full effect
    for _ in range(hp.max_epochs):
        perm = rng.permutation(n)
        for start in range(0, n, hp.batch_size):
            idx = perm[start : start + hp.batch_size]
            t += 1
            eta = 1.0 / (lam * (t + warmup))
            margins = Y[idx] * (X[idx] @ W.T + B)
            active = (margins < 1.0) * Y[idx]  # batch x C
            W -= eta * (lam * W - (active.T @ X[idx]) / len(idx))
            B += eta * active.mean(axis=0)

    train_acc = accuracy(np.argmax(X @ W.T + B, axis=1), y)
    logger.info(
        "probe on '%s': %d samples, %d classes, training accuracy %.4f",
        space.name, n, n_classes, train_acc,
    )
    return LinearProbe(
        weights=W,
        bias=B,
        class_names=list(labels.class_names),
        trained_on=space.name,
        hyperparams=hp,
        training_accuracy=train_acc,
    )


def probe_scores(probe: LinearProbe, X: np.ndarray) -> np.ndarray:
    """Raw affine decision values, one column per class (no calibration)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != probe.dim:
        raise DataError(f"probe expects {probe.dim}-dim rows, got shape {X.shape}")
    return X @ probe.weights.T + probe.bias


def _score_metrics(scores: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    predictions = np.argmax(scores, axis=1)
    acc = accuracy(predictions, y)
    if scores.shape[1] == 2:
        roc = auroc(scores[:, 1], (y == 1).astype(np.int64))
    else:
        roc = macro_auroc(scores, y)
    return roc, acc


def stitch_evaluate(
    source: EmbeddingSpace,
    transform: AlignmentTransform,
    probe: LinearProbe,
    labels: LabelSet,
    test_rows: np.ndarray,
) -> StitchReport:
    """Encode with the source space, translate, decode with the probe."""
    if probe.dim != transform.target_dim:
        raise DataError(
            f"probe dim {probe.dim} does not match transform target dim "
            f"{transform.target_dim}"
        )
    test_rows = np.asarray(test_rows, dtype=np.int64)
    y = labels.aligned_with(source)[test_rows]
    translated = translate_rows(transform, source.data[test_rows])
    scores = probe_scores(probe, translated)
    roc, acc = _score_metrics(scores, y)
    return StitchReport(
        source_space=source.name,
        target_space=probe.trained_on,
        kind=transform.kind.value,
        anchor_count=transform.fit_info.anchor_count,
        seed=transform.fit_info.seed,
        auroc=roc,
        accuracy=acc,
    )


def upper_bound_evaluate(
    space: EmbeddingSpace,
    probe: LinearProbe,
    labels: LabelSet,
    test_rows: np.ndarray,
) -> StitchReport:
    """Direct probe evaluation on its own space (no stitching)."""
    test_rows = np.asarray(test_rows, dtype=np.int64)
    y = labels.aligned_with(space)[test_rows]
    scores = probe_scores(probe, space.data[test_rows])
    roc, acc = _score_metrics(scores, y)
    return StitchReport(
        source_space=space.name,
        target_space=probe.trained_on,
        kind="upper-bound",
        anchor_count=0,
        seed=None,
        auroc=roc,
        accuracy=acc,
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

PROBE_FORMAT = "latent-align.probe/v1"
_PROBE_HEADER = "probe.json"


def save_probe(probe: LinearProbe, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    header = {
        "format": PROBE_FORMAT,
        "class_names": probe.class_names,
        "trained_on": probe.trained_on,
        "hyperparams": {
            "c_reg": probe.hyperparams.c_reg,
            "max_epochs": probe.hyperparams.max_epochs,
            "seed": probe.hyperparams.seed,
            "batch_size": probe.hyperparams.batch_size,
        },
        "training_accuracy": probe.training_accuracy,
    }
    (directory / _PROBE_HEADER).write_text(
        json.dumps(header, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    write_matrix(directory / "weights.npy", probe.weights)
    write_matrix(directory / "bias.npy", probe.bias[None, :])


def is_probe_dir(directory: str | Path) -> bool:
    return (Path(directory) / _PROBE_HEADER).exists()


def load_probe(directory: str | Path) -> LinearProbe:
    directory = Path(directory)
    header_path = directory / _PROBE_HEADER
    try:
        header = json.loads(header_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{header_path}: cannot parse probe header ({exc})") from None
    if header.get("format") != PROBE_FORMAT:
        raise DataError(f"{header_path}: unknown format {header.get('format')!r}")
    hp = header.get("hyperparams", {})
    return LinearProbe(
        weights=read_matrix(directory / "weights.npy"),
        bias=read_matrix(directory / "bias.npy")[0],
        class_names=list(header["class_names"]),
        trained_on=header.get("trained_on", ""),
        hyperparams=ProbeHyperparams(
            c_reg=float(hp.get("c_reg", 1.0)),
            max_epochs=int(hp.get("max_epochs", 1000)),
            seed=int(hp.get("seed", 0)),
            batch_size=int(hp.get("batch_size", 256)),
        ),
        training_accuracy=float(header.get("training_accuracy", float("nan"))),
    )
