"""Codebook construction: clustering, scoring, refinement and persistence."""

from .builder import (
    DistortionRecord, OptimizerConfig, ScoreBreakdown, StepResult, central_members,
    code_distortions, density_labels, distortion, init_codebook, pca_reducer,
    reconstruction_step,
)
from .checkpoint import (
    codebook_from_dict, codebook_id, codebook_to_dict, load_checkpoint, read_checkpoint,
    save_checkpoint,
)
from .optimize import OptimizationError, OptimizeResult, optimize
from .refine import RefineReport, refine_step, relative_improvement, usage_zscores

__all__ = [
    "DistortionRecord", "OptimizerConfig", "ScoreBreakdown", "StepResult", "central_members",
    "code_distortions", "density_labels", "distortion", "init_codebook", "pca_reducer",
    "reconstruction_step", "codebook_from_dict", "codebook_id", "codebook_to_dict",
    "load_checkpoint", "read_checkpoint", "save_checkpoint", "OptimizationError",
    "OptimizeResult", "optimize", "RefineReport", "refine_step", "relative_improvement",
    "usage_zscores",
]
