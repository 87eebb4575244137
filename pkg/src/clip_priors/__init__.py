"""Training-free few-shot segmentation prior maps from pre-extracted CLIP features."""

from .bundle_io import (
    FeatureBundle,
    PriorStack,
    load_bundle,
    load_prior_stack,
    write_bundle,
    write_prior_stack,
)
from .config import PriorConfig
from .pipeline import generate_prior_stack, render_heatmap, run_batch

__all__ = [
    "FeatureBundle",
    "PriorStack",
    "PriorConfig",
    "load_bundle",
    "load_prior_stack",
    "write_bundle",
    "write_prior_stack",
    "generate_prior_stack",
    "render_heatmap",
    "run_batch",
]

__version__ = "0.1.0"
