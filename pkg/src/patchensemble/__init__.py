"""Patch-based CNN-ensemble detection of synthetic images.

Patches are scored by pluggable scorers, collapsed per scorer with a rule
that only calls an image real when every patch looks real, and fused by an
equal-weight mean across scorers.
"""

from .aggregation import AggregationPolicy, ImageVerdict, Label, aggregate, aggregate_many, classify, fuse_ensemble
from .augmentation import AugmentationConfig, AugmentationLog, apply_pipeline, jpeg_roundtrip, replay
from .ensemble import EnsembleConfig, EnsembleMember, deployment_sampling, detect_image
from .evaluation import (
    LabeledScore,
    RocResult,
    SimulationSpec,
    compute_auc,
    confusion_at,
    histogram,
    simulate_policy_comparison,
)
from .kernels import BACKEND as KERNEL_BACKEND
from .patching import (
    PatchRegion,
    SamplingMode,
    SamplingPolicy,
    crop,
    enumerate_aligned_positions,
    sample_patches,
)
from .recipes import DatasetRecipe, SourceManifest, builtin_recipe, materialize, validate_orthogonality
from .scoring import (
    AnalyticScorerSpec,
    ModelBackendConfig,
    PatchScorer,
    PatchScoreVector,
    load_model_backend,
    make_analytic_scorer,
    score_patches,
)

__version__ = "0.1.0"

__all__ = [
    "AggregationPolicy",
    "AnalyticScorerSpec",
    "AugmentationConfig",
    "AugmentationLog",
    "DatasetRecipe",
    "EnsembleConfig",
    "EnsembleMember",
    "ImageVerdict",
    "KERNEL_BACKEND",
    "Label",
    "LabeledScore",
    "ModelBackendConfig",
    "PatchRegion",
    "PatchScoreVector",
    "PatchScorer",
    "RocResult",
    "SamplingMode",
    "SamplingPolicy",
    "SimulationSpec",
    "SourceManifest",
    "aggregate",
    "aggregate_many",
    "apply_pipeline",
    "builtin_recipe",
    "classify",
    "compute_auc",
    "confusion_at",
    "crop",
    "deployment_sampling",
    "detect_image",
    "enumerate_aligned_positions",
    "fuse_ensemble",
    "histogram",
    "jpeg_roundtrip",
    "load_model_backend",
    "make_analytic_scorer",
    "materialize",
    "replay",
    "sample_patches",
    "score_patches",
    "simulate_policy_comparison",
    "validate_orthogonality",
]
