"""Engine configuration."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any

from .errors import BadRange

REFINEMENT_MODES = ("initial_D", "high_order_R")


@dataclass
class PriorConfig:
    tau: float = 0.01
    eps: float = 1e-7
    l_blocks: int = 8
    sinkhorn_max_iters: int = 100
    sinkhorn_tol: float = 1e-6
    box_theta: float = 0.4
    refinement_mode: str = "high_order_R"
    refine_vtp: bool = True
    refine_vvp: bool = False
    enable_vtp: bool = True
    enable_vvp: bool = True
    vvp_foreground_only: bool = False
    bilinear_mask: bool = False
    box_per_component: bool = False

    def validate(self, n_blocks: int | None = None) -> None:
        if self.tau <= 0:
            raise BadRange(f"tau must be positive, got {self.tau}")
        if self.eps <= 0:
            raise BadRange(f"eps must be positive, got {self.eps}")
        if self.l_blocks < 1:
            raise BadRange(f"l_blocks must be >= 1, got {self.l_blocks}")
        if n_blocks is not None and self.l_blocks > n_blocks:
            raise BadRange(f"l_blocks={self.l_blocks} exceeds block count {n_blocks}")
        if not 0 < self.box_theta < 1:
            raise BadRange(f"box_theta must be in (0, 1), got {self.box_theta}")
        if self.refinement_mode not in REFINEMENT_MODES:
            raise BadRange(f"refinement_mode must be one of {REFINEMENT_MODES}")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PriorConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise BadRange(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path: str | Path) -> "PriorConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
