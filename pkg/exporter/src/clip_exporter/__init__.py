"""CLIP feature exporter for the prior-generation engine."""

from .export import ClipBackbone, ExportError, export_bundle, snap_resolution
from .templates import TEMPLATE_SETS, PromptTemplatePair, resolve_template_set

__all__ = [
    "ClipBackbone",
    "ExportError",
    "export_bundle",
    "snap_resolution",
    "PromptTemplatePair",
    "TEMPLATE_SETS",
    "resolve_template_set",
]
