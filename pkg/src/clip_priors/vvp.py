"""Visual-visual prior generation.

Support features are zeroed outside the (downsampled) support mask, every
support/query pixel pair is scored by cosine similarity, and each query pixel
keeps the maximum over support pixels. The per-shot maps are min-max
normalized; multi-shot episodes yield one map per shot with no averaging.
"""

from __future__ import annotations

import numpy as np

from .errors import EmptyMask
from .numerics import DEFAULT_EPS, minmax_normalize

from .bundle_io import FeatureBundle


def downsample_mask(mask: np.ndarray, grid: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor sample at patch centers: [H_img, W_img] -> [h, w] binary."""
    h, w = grid
    mask = np.asarray(mask)
    H, W = mask.shape
    rows = ((np.arange(h) + 0.5) * H / h).astype(np.int64)
    cols = ((np.arange(w) + 0.5) * W / w).astype(np.int64)
    out = (mask[np.ix_(rows, cols)] != 0).astype(np.uint8)
    if not out.any():
        raise EmptyMask("downsampled support mask has no foreground pixels")
    return out


def downsample_mask_bilinear(mask: np.ndarray, grid: tuple[int, int]) -> np.ndarray:
    """Bilinear resample then threshold at 0.5; configurable alternative."""
    h, w = grid
    m = np.asarray(mask, dtype=np.float64)
    H, W = m.shape
    ys = (np.arange(h) + 0.5) * H / h - 0.5
    xs = (np.arange(w) + 0.5) * W / w - 0.5
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, H - 1)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, W - 1)
    y1 = np.clip(y0 + 1, 0, H - 1)
    x1 = np.clip(x0 + 1, 0, W - 1)
    fy = np.clip(ys - y0, 0.0, 1.0)[:, None]
    fx = np.clip(xs - x0, 0.0, 1.0)[None, :]
    top = m[np.ix_(y0, x0)] * (1 - fx) + m[np.ix_(y0, x1)] * fx
    bot = m[np.ix_(y1, x0)] * (1 - fx) + m[np.ix_(y1, x1)] * fx
    out = ((top * (1 - fy) + bot * fy) >= 0.5).astype(np.uint8)
    if not out.any():
        raise EmptyMask("downsampled support mask has no foreground pixels")
    return out


def mask_support_features(support_features: np.ndarray, mask_flat: np.ndarray) -> np.ndarray:
    """Zero out support rows where the grid mask is 0."""
    f = np.asarray(support_features, dtype=np.float64)
    m = np.asarray(mask_flat, dtype=np.float64).reshape(-1, 1)
    return f * m


def correspondence(support: np.ndarray, query: np.ndarray) -> np.ndarray:
    """All-pairs cosine matrix [hw_s, hw_q]; zero-norm rows score 0."""
    s = np.asarray(support, dtype=np.float64)
    q = np.asarray(query, dtype=np.float64)
    sn = np.linalg.norm(s, axis=1, keepdims=True)
    qn = np.linalg.norm(q, axis=1, keepdims=True)
    su = np.divide(s, sn, out=np.zeros_like(s), where=sn > 0)
    qu = np.divide(q, qn, out=np.zeros_like(q), where=qn > 0)
    return su @ qu.T


def vvp_map(corr: np.ndarray, grid: tuple[int, int], eps: float = DEFAULT_EPS) -> np.ndarray:
    """Per-query-pixel max over support pixels, reshaped row-major, normalized."""
    h, w = grid
    best = np.asarray(corr, dtype=np.float64).max(axis=0)
    return minmax_normalize(best.reshape(h, w), eps)


def vvp_single_shot(
    query_features: np.ndarray,
    support_features: np.ndarray,
    support_mask: np.ndarray,
    grid: tuple[int, int],
    eps: float = DEFAULT_EPS,
    foreground_only: bool = False,
    bilinear_mask: bool = False,
) -> np.ndarray:
    """Full single-shot pipeline: mask, correspond, max, normalize.

    foreground_only restricts the max to unmasked support rows instead of
    letting zeroed rows contribute a neutral 0.
    """
    down = downsample_mask_bilinear if bilinear_mask else downsample_mask
    grid_mask = down(support_mask, grid).reshape(-1)
    masked = mask_support_features(support_features, grid_mask)
    corr = correspondence(masked, query_features)
    if foreground_only:
        corr = corr[grid_mask != 0]
    return vvp_map(corr, grid, eps)


def vvp_multishot(
    bundle: "FeatureBundle",
    eps: float = DEFAULT_EPS,
    foreground_only: bool = False,
    bilinear_mask: bool = False,
) -> list[np.ndarray]:
    """One independent VVP map per shot; no averaging."""
    grid = (bundle.h, bundle.w)
    return [
        vvp_single_shot(
            bundle.query_features,
            feats,
            mask,
            grid,
            eps=eps,
            foreground_only=foreground_only,
            bilinear_mask=bilinear_mask,
        )
        for feats, mask in zip(bundle.support_features, bundle.support_masks)
    ]
