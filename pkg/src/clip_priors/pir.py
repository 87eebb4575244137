"""Prior information refinement.

Block-averaged self-attention is balanced into a (near) doubly stochastic
matrix by Sinkhorn normalization; the high-order variant takes the elementwise
max of that matrix and its second-order product. The matrix re-projects a
flattened prior map, a box mask suppresses far-field leakage, and the result
is re-normalized so stacked channels share a scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bundle_io import FeatureBundle
from .errors import BadRange, DegenerateMatrix, ShapeMismatch
from .numerics import DEFAULT_EPS, minmax_normalize

ZERO_FLOOR = 1e-12


@dataclass
class RefinementMatrix:
    values: np.ndarray  # [hw, hw]
    mode: str           # "initial_D" | "high_order_R"


@dataclass
class BoxMask:
    values: np.ndarray  # [h, w] binary
    threshold_used: float


def average_attention(attentions: np.ndarray, l: int) -> np.ndarray:
    """Arithmetic mean of the last l attention blocks."""
    a = np.asarray(attentions, dtype=np.float64)
    n = a.shape[0]
    if not 1 <= l <= n:
        raise BadRange(f"block count l={l} outside [1, {n}]")
    return a[n - l:].mean(axis=0)


def sinkhorn_normalize(
    avg: np.ndarray, max_iters: int = 100, tol: float = 1e-6
) -> np.ndarray:
    """Alternate row/column L1 normalization until doubly stochastic within tol."""
    m = np.asarray(avg, dtype=np.float64)
    if (m < 0).any():
        raise DegenerateMatrix("Sinkhorn input has negative entries")
    row = m.sum(axis=1)
    col = m.sum(axis=0)
    if (row == 0).any() or (col == 0).any():
        raise DegenerateMatrix("Sinkhorn input has a zero row or column")
    d = m.copy()
    for _ in range(max_iters):
        d = d / d.sum(axis=1, keepdims=True)
        d = d / d.sum(axis=0, keepdims=True)
        row_err = np.abs(d.sum(axis=1) - 1.0).max()
        col_err = np.abs(d.sum(axis=0) - 1.0).max()
        if max(row_err, col_err) <= tol:
            break
    return d


def high_order_matrix(d: np.ndarray) -> RefinementMatrix:
    """Elementwise max of D and D @ D.T."""
    d = np.asarray(d, dtype=np.float64)
    return RefinementMatrix(values=np.maximum(d, d @ d.T), mode="high_order_R")


def box_mask(prior: np.ndarray, theta: float, per_component: bool = False) -> BoxMask:
    """Tight bounding rectangle(s) of pixels with prior >= theta * max(prior).

    All-zero priors fall back to an all-ones mask. per_component draws one box
    per 4-connected component of the thresholded set instead of one global box.
    """
    p = np.asarray(prior, dtype=np.float64)
    peak = p.max()
    if peak <= 0.0:
        return BoxMask(values=np.ones(p.shape, dtype=np.uint8), threshold_used=theta)
    fg = p >= theta * peak
    out = np.zeros(p.shape, dtype=np.uint8)
    if per_component:
        for r0, c0, r1, c1 in _component_boxes(fg):
            out[r0:r1 + 1, c0:c1 + 1] = 1
    else:
        rows = np.flatnonzero(fg.any(axis=1))
        cols = np.flatnonzero(fg.any(axis=0))
        out[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1] = 1
    return BoxMask(values=out, threshold_used=theta)


def _component_boxes(fg: np.ndarray) -> list[tuple[int, int, int, int]]:
    # iterative flood fill, 4-connectivity
    h, w = fg.shape
    seen = np.zeros_like(fg, dtype=bool)
    boxes = []
    for sr in range(h):
        for sc in range(w):
            if not fg[sr, sc] or seen[sr, sc]:
                continue
            stack = [(sr, sc)]
            seen[sr, sc] = True
            r0 = r1 = sr
            c0 = c1 = sc
            while stack:
                r, c = stack.pop()
                r0, r1 = min(r0, r), max(r1, r)
                c0, c1 = min(c0, c), max(c1, c)
                for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                    if 0 <= nr < h and 0 <= nc < w and fg[nr, nc] and not seen[nr, nc]:
                        seen[nr, nc] = True
                        stack.append((nr, nc))
            boxes.append((r0, c0, r1, c1))
    return boxes


def refine_prior(
    prior: np.ndarray,
    refinement: RefinementMatrix,
    box: BoxMask,
    eps: float = DEFAULT_EPS,
) -> np.ndarray:
    """Box-masked matrix re-projection of the flattened prior, re-normalized."""
    p = np.asarray(prior, dtype=np.float64)
    h, w = p.shape
    r = refinement.values
    if r.shape != (h * w, h * w):
        raise ShapeMismatch(f"refinement matrix {r.shape} vs map {p.shape}")
    if box.values.shape != (h, w):
        raise ShapeMismatch(f"box mask {box.values.shape} vs map {p.shape}")
    projected = (r @ p.reshape(-1)).reshape(h, w)
    return minmax_normalize(box.values * projected, eps)


def make_refinement(
    bundle: FeatureBundle,
    l: int,
    mode: str = "high_order_R",
    max_iters: int = 100,
    tol: float = 1e-6,
) -> RefinementMatrix:
    """Average attention, floor degenerate rows/columns, Sinkhorn, optional max step."""
    avg = average_attention(bundle.attentions, l)
    if (avg.sum(axis=1) == 0).any() or (avg.sum(axis=0) == 0).any():
        avg = avg + ZERO_FLOOR
    d = sinkhorn_normalize(avg, max_iters=max_iters, tol=tol)
    if mode == "initial_D":
        return RefinementMatrix(values=d, mode="initial_D")
    if mode == "high_order_R":
        return high_order_matrix(d)
    raise BadRange(f"unknown refinement mode {mode!r}")
