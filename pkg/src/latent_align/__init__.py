"""Semantic alignment of latent representation spaces.

Estimate at-most-affine translations between embedding spaces from small
anchor sets, stitch encoders to decoders across architectures without
retraining, and run unimodal zero-shot classification by translating image
embeddings into a text space.
"""

from .errors import DataError, LatentAlignError, NumericalError
from .metrics import MetricSummary, accuracy, auroc, macro_auroc, summarize
from .preprocess import (
    PaddingSpec,
    ScalerStats,
    apply_scaler,
    fit_scaler,
    invert_scaler,
    zero_pad,
)
from .stitching import (
    LinearProbe,
    ProbeHyperparams,
    StitchReport,
    load_probe,
    probe_scores,
    save_probe,
    stitch_evaluate,
    train_probe,
    upper_bound_evaluate,
)
from .store import (
    AnchorSet,
    DatasetManifest,
    EmbeddingSpace,
    LabelSet,
    correspondence_from_shared_ids,
    load_correspondence,
    load_labels,
    load_manifest,
    load_space,
    sample_anchors,
    save_labels,
    save_space,
)
from .transform import (
    AffineFitOptions,
    AlignmentTransform,
    TransformKind,
    estimate_affine,
    estimate_l_ortho,
    estimate_linear,
    estimate_ortho,
    fit_alignment,
    load_transform,
    save_transform,
    translate_rows,
)
from .zeroshot import (
    ClassPromptBank,
    ZeroShotResult,
    build_prompt_bank,
    load_prompt_bank,
    zero_shot_multimodal,
    zero_shot_unimodal,
)

__version__ = "0.1.0"
