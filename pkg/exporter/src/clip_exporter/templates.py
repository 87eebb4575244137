"""Prompt template pairs for the target / non-target classification."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

PLACEHOLDER = "{class}"


@dataclass(frozen=True)
class PromptTemplatePair:
    target_template: str
    background_template: str

    def __post_init__(self):
        for label, template in (
            ("target", self.target_template),
            ("background", self.background_template),
        ):
            if template.count(PLACEHOLDER) != 1:
                raise ValueError(
                    f"{label} template must contain {PLACEHOLDER!r} exactly once: {template!r}"
                )

    def render(self, class_name: str) -> tuple[str, str]:
        return (
            self.target_template.replace(PLACEHOLDER, class_name),
            self.background_template.replace(PLACEHOLDER, class_name),
        )


TEMPLATE_SETS = {
    "default": PromptTemplatePair(
        "a photo of {class}",
        "a photo without {class}",
    ),
    "origami": PromptTemplatePair(
        "a clean origami of {class}",
        "a clean origami different from {class}",
    ),
}


def resolve_template_set(spec: str) -> PromptTemplatePair:
    """Named set, or a JSON file with {"target": ..., "background": ...}."""
    if spec in TEMPLATE_SETS:
        return TEMPLATE_SETS[spec]
    path = Path(spec)
    if path.is_file():
        data = json.loads(path.read_text(encoding="utf-8"))
        return PromptTemplatePair(data["target"], data["background"])
    raise ValueError(f"unknown template set {spec!r} (not a name, not a file)")
