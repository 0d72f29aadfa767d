"""Estimation and application of at-most-affine maps between latent spaces.

Four estimators with progressively stronger constraints, all operating on
pre-processed (padded + anchor-scaled) anchor matrices AX, AY of shape
K x D with rows in correspondence order:

- ``affine``: Y ~ X R + b, fit by first-order gradient descent with
  backtracking, initialized at the least-squares solution by default so its
  training objective never exceeds the linear one.
- ``linear``: Y ~ X R, the minimum-norm least-squares solution.
- ``l-ortho``: the orthogonal factor of the linear solution, obtained by
  replacing its singular values with ones.
- ``ortho``: the orthogonal minimizer of ||X R - Y||_F, from the SVD of
  X^T Y (classic Procrustes; reflections allowed).

``naive`` carries R = I, b = 0 and serves as the no-alignment baseline:
padding and scaling still apply, but nothing is estimated.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import DataError, NumericalError
from .preprocess import (
    DEFAULT_EPSILON,
    PaddingSpec,
    ScalerStats,
    apply_scaler,
    fit_scaler,
    invert_scaler,
    zero_pad,
)
from .store import AnchorSet, EmbeddingSpace, read_matrix, write_matrix

logger = logging.getLogger(__name__)

ORTHOGONALITY_TOL = 1e-6


class TransformKind(str, Enum):
    AFFINE = "affine"
    LINEAR = "linear"
    L_ORTHO = "l-ortho"
    ORTHO = "ortho"
    NAIVE = "naive"


class AffineInit(str, Enum):
    FROM_LINEAR = "from-linear"
    IDENTITY = "identity"


@dataclass
class AffineFitOptions:
    max_steps: int = 2000
    learning_rate: float = 1e-2
    tolerance: float = 1e-7
    init: AffineInit = AffineInit.FROM_LINEAR

    def __post_init__(self) -> None:
        if self.max_steps < 1:
            raise DataError("affine fit needs max_steps >= 1")
        if self.learning_rate <= 0 or self.tolerance <= 0:
            raise DataError("affine learning_rate and tolerance must be positive")
        self.init = AffineInit(self.init)


@dataclass
class FitInfo:
    anchor_count: int
    seed: int | None
    objective: float


@dataclass
class AlignmentTransform:
    """A fitted translation between two spaces: padding, scaling, R, b."""

    kind: TransformKind
    source_pad: PaddingSpec
    target_pad: PaddingSpec
    source_scaler: ScalerStats
    target_scaler: ScalerStats
    R: np.ndarray
    b: np.ndarray
    fit_info: FitInfo = field(
        default_factory=lambda: FitInfo(anchor_count=0, seed=None, objective=float("nan"))
    )

    def __post_init__(self) -> None:
        self.kind = TransformKind(self.kind)
        self.R = np.asarray(self.R, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        D = self.padded_dim
        if self.R.shape != (D, D):
            raise DataError(f"R must be {D}x{D}, got {self.R.shape}")
        if self.b.shape != (D,):
            raise DataError(f"b must be a {D}-vector, got {self.b.shape}")
        if self.source_pad.padded_dim != self.target_pad.padded_dim:
            raise DataError("source and target must be padded to the same dim")
        if self.kind is not TransformKind.AFFINE and np.any(self.b != 0.0):
            raise DataError(f"kind {self.kind.value} must have b = 0")
        if self.kind in (TransformKind.ORTHO, TransformKind.L_ORTHO):
            dev = orthogonality_deviation(self.R)
            if dev >= ORTHOGONALITY_TOL:
                raise NumericalError(
                    f"{self.kind.value} transform violates orthogonality "
                    f"(max |R^T R - I| = {dev:.3e})"
                )

    @property
    def padded_dim(self) -> int:
        return self.source_pad.padded_dim

    @property
    def source_dim(self) -> int:
        return self.source_pad.original_dim

    @property
    def target_dim(self) -> int:
        return self.target_pad.original_dim

    @classmethod
    def identity(cls, dim: int) -> "AlignmentTransform":
        """A transform that maps every row to itself (unit scalers, R = I)."""
        return cls(
            kind=TransformKind.NAIVE,
            source_pad=PaddingSpec(dim, dim),
            target_pad=PaddingSpec(dim, dim),
            source_scaler=ScalerStats(mean=np.zeros(dim), std=np.ones(dim)),
            target_scaler=ScalerStats(mean=np.zeros(dim), std=np.ones(dim)),
            R=np.eye(dim),
            b=np.zeros(dim),
            fit_info=FitInfo(anchor_count=0, seed=None, objective=0.0),
        )


def orthogonality_deviation(R: np.ndarray) -> float:
    """Max absolute entry of R^T R - I."""
    R = np.asarray(R, dtype=np.float64)
    return float(np.max(np.abs(R.T @ R - np.eye(R.shape[1]))))


def frobenius_objective(
    AX: np.ndarray, AY: np.ndarray, R: np.ndarray, b: np.ndarray | None = None
) -> float:
    """Squared Frobenius residual ||AX R + 1 b^T - AY||_F^2."""
    residual = AX @ R - AY
    if b is not None:
        residual = residual + b
    with np.errstate(over="ignore"):  # overflow to inf signals divergence upstream
        return float(np.sum(residual * residual))


def _check_anchor_matrices(AX: np.ndarray, AY: np.ndarray, min_rows: int = 1) -> None:
    if AX.ndim != 2 or AY.ndim != 2:
        raise DataError("anchor matrices must be 2-D")
    if AX.shape != AY.shape:
        raise DataError(f"anchor shapes differ: {AX.shape} vs {AY.shape}")
    if AX.shape[0] < min_rows:
        raise DataError(f"need at least {min_rows} anchor rows, got {AX.shape[0]}")
    if not (np.all(np.isfinite(AX)) and np.all(np.isfinite(AY))):
        raise DataError("anchor matrices contain non-finite values")


def estimate_linear(AX: np.ndarray, AY: np.ndarray) -> np.ndarray:
    """Least-squares R minimizing ||AX R - AY||_F.

    Uses a rank-revealing solve; returns the minimum-norm solution when
    AX is rank-deficient.
    """
    AX = np.asarray(AX, dtype=np.float64)
    AY = np.asarray(AY, dtype=np.float64)
    _check_anchor_matrices(AX, AY)
    R, _, _, _ = np.linalg.lstsq(AX, AY, rcond=None)
    return R


def estimate_l_ortho(AX: np.ndarray, AY: np.ndarray) -> np.ndarray:
    """Orthogonal factor of the least-squares map (singular values -> 1)."""
    R_lin = estimate_linear(AX, AY)
    try:
        U, _, Vt = np.linalg.svd(R_lin)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed on linear map: {exc}") from None
    return U @ Vt


def estimate_ortho(AX: np.ndarray, AY: np.ndarray) -> np.ndarray:
    """Procrustes: orthogonal R minimizing ||AX R - AY||_F.

    R = U V^T from the SVD of AX^T AY. The determinant is unconstrained,
    so the solution may include a reflection.
    """
    AX = np.asarray(AX, dtype=np.float64)
    AY = np.asarray(AY, dtype=np.float64)
    _check_anchor_matrices(AX, AY)
    try:
        U, _, Vt = np.linalg.svd(AX.T @ AY)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed on cross-covariance: {exc}") from None
    return U @ Vt


def estimate_affine(
    AX: np.ndarray, AY: np.ndarray, opts: AffineFitOptions | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Gradient descent on ||AX R + 1 b^T - AY||_F^2 over (R, b).

    The gradient is normalized by the anchor count; each step backtracks
    (halving) until the objective does not increase, and the best iterate
    seen is returned. With the default from-linear init the result never
    has a larger training objective than the plain least-squares map.
    Stops at ``max_steps`` or when the relative objective decrease falls
    below ``tolerance``.
    """
    opts = opts or AffineFitOptions()
    AX = np.asarray(AX, dtype=np.float64)
    AY = np.asarray(AY, dtype=np.float64)
    _check_anchor_matrices(AX, AY, min_rows=2)
    K, D = AX.shape

    if opts.init is AffineInit.FROM_LINEAR:
        R = estimate_linear(AX, AY)
    else:
        R = np.eye(D)
    b = np.zeros(D)

    f = frobenius_objective(AX, AY, R, b)
    if not np.isfinite(f):
        raise NumericalError("affine fit diverged at step 0 (non-finite objective)")
    best_R, best_b, best_f = R.copy(), b.copy(), f
    step = opts.learning_rate
    for t in range(opts.max_steps):
        residual = AX @ R + b - AY
        grad_R = 2.0 * (AX.T @ residual) / K
        grad_b = 2.0 * residual.sum(axis=0) / K
        if not (np.all(np.isfinite(grad_R)) and np.all(np.isfinite(grad_b))):
            raise NumericalError(f"affine fit diverged at step {t} (non-finite gradient)")
        step = min(step * 2.0, opts.learning_rate)
        while True:
            R_new = R - step * grad_R
            b_new = b - step * grad_b
            f_new = frobenius_objective(AX, AY, R_new, b_new)
            if not np.isfinite(f_new):
                raise NumericalError(
                    f"affine fit diverged at step {t} (non-finite objective)"
                )
            if f_new <= f or step < 1e-15:
                break
            step *= 0.5
        rel_drop = (f - f_new) / max(f, np.finfo(np.float64).tiny)
        R, b, f = R_new, b_new, f_new
        if f < best_f:
            best_R, best_b, best_f = R.copy(), b.copy(), f
        if 0.0 <= rel_drop < opts.tolerance:
            logger.debug("affine fit converged after %d steps (objective %.3e)", t + 1, f)
            break
    return best_R, best_b


_ESTIMATORS = {
    TransformKind.LINEAR: estimate_linear,
    TransformKind.L_ORTHO: estimate_l_ortho,
    TransformKind.ORTHO: estimate_ortho,
}


def fit_alignment(
    source: EmbeddingSpace,
    target: EmbeddingSpace,
    anchors: AnchorSet,
    kind: TransformKind | str,
    affine_opts: AffineFitOptions | None = None,
) -> AlignmentTransform:
    """Fit the full pipeline: pad both spaces, fit scalers on the padded
    anchor rows, scale, then run the requested estimator."""
    kind = TransformKind(kind)
    if len(anchors) < 2:
        raise DataError("alignment needs at least 2 anchor pairs")
    src_rows = anchors.source_rows()
    tgt_rows = anchors.target_rows()
    if src_rows.max() >= source.n_samples or tgt_rows.max() >= target.n_samples:
        raise DataError("anchor indices out of range for their spaces")

    D = max(source.dim, target.dim)
    source_pad = PaddingSpec(source.dim, D)
    target_pad = PaddingSpec(target.dim, D)
    AX_padded = zero_pad(source.data[src_rows], D)
    AY_padded = zero_pad(target.data[tgt_rows], D)
    source_scaler = fit_scaler(AX_padded)
    target_scaler = fit_scaler(AY_padded)
    AX = apply_scaler(source_scaler, AX_padded)
    AY = apply_scaler(target_scaler, AY_padded)

    b = np.zeros(D)
    if kind is TransformKind.NAIVE:
        R = np.eye(D)
    elif kind is TransformKind.AFFINE:
        R, b = estimate_affine(AX, AY, affine_opts)
    else:
        R = _ESTIMATORS[kind](AX, AY)

    objective = frobenius_objective(AX, AY, R, b)
    logger.debug(
        "fit %s on %d anchors (D=%d): objective %.6e", kind.value, len(anchors), D, objective
    )
    return AlignmentTransform(
        kind=kind,
        source_pad=source_pad,
        target_pad=target_pad,
        source_scaler=source_scaler,
        target_scaler=target_scaler,
        R=R,
        b=b,
        fit_info=FitInfo(anchor_count=len(anchors), seed=anchors.seed, objective=objective),
    )


def translate_rows(transform: AlignmentTransform, X: np.ndarray) -> np.ndarray:
    """Map rows from the source space into the raw target space.

    Pipeline: zero-pad, source-scale, X R + b, invert the target scaler,
    truncate padded columns back to the target's native width.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != transform.source_dim:
        raise DataError(
            f"transform expects {transform.source_dim}-dim rows, got shape {X.shape}"
        )
    padded = zero_pad(X, transform.padded_dim)
    scaled = apply_scaler(transform.source_scaler, padded)
    mapped = scaled @ transform.R + transform.b
    restored = invert_scaler(transform.target_scaler, mapped)
    return restored[:, : transform.target_dim]


# ---------------------------------------------------------------------------
# Serialization: JSON header + NPY payloads in a directory
# ---------------------------------------------------------------------------

TRANSFORM_FORMAT = "latent-align.transform/v1"
_TRANSFORM_HEADER = "transform.json"


def save_transform(transform: AlignmentTransform, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    header = {
        "format": TRANSFORM_FORMAT,
        "kind": transform.kind.value,
        "source_dim": transform.source_dim,
        "target_dim": transform.target_dim,
        "padded_dim": transform.padded_dim,
        "epsilon": transform.source_scaler.epsilon,
        "fit_info": {
            "anchor_count": transform.fit_info.anchor_count,
            "seed": transform.fit_info.seed,
            "objective": transform.fit_info.objective,
        },
    }
    (directory / _TRANSFORM_HEADER).write_text(
        json.dumps(header, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    write_matrix(directory / "R.npy", transform.R)
    write_matrix(directory / "b.npy", transform.b[None, :])
    write_matrix(directory / "source_mean.npy", transform.source_scaler.mean[None, :])
    write_matrix(directory / "source_std.npy", transform.source_scaler.std[None, :])
    write_matrix(directory / "target_mean.npy", transform.target_scaler.mean[None, :])
    write_matrix(directory / "target_std.npy", transform.target_scaler.std[None, :])


def is_transform_dir(directory: str | Path) -> bool:
    return (Path(directory) / _TRANSFORM_HEADER).exists()


def load_transform(directory: str | Path) -> AlignmentTransform:
    directory = Path(directory)
    header_path = directory / _TRANSFORM_HEADER
    try:
        header = json.loads(header_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{header_path}: cannot parse transform header ({exc})") from None
    if header.get("format") != TRANSFORM_FORMAT:
        raise DataError(f"{header_path}: unknown format {header.get('format')!r}")
    epsilon = float(header.get("epsilon", DEFAULT_EPSILON))
    D = int(header["padded_dim"])
    fit = header.get("fit_info", {})
    return AlignmentTransform(
        kind=TransformKind(header["kind"]),
        source_pad=PaddingSpec(int(header["source_dim"]), D),
        target_pad=PaddingSpec(int(header["target_dim"]), D),
        source_scaler=ScalerStats(
            mean=read_matrix(directory / "source_mean.npy")[0],
            std=read_matrix(directory / "source_std.npy")[0],
            epsilon=epsilon,
        ),
        target_scaler=ScalerStats(
            mean=read_matrix(directory / "target_mean.npy")[0],
            std=read_matrix(directory / "target_std.npy")[0],
            epsilon=epsilon,
        ),
        R=read_matrix(directory / "R.npy"),
        b=read_matrix(directory / "b.npy")[0],
        fit_info=FitInfo(
            anchor_count=int(fit.get("anchor_count", 0)),
            seed=fit.get("seed"),
            objective=float(fit.get("objective", float("nan"))),
        ),
    )
