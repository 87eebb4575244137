"""Brute-force reference implementations and synthetic bundle generation.

The oracles re-derive every kernel with the most literal loops possible and
share no code paths with the main modules; they exist so property tests and
the acceptance suite can check the vectorized kernels against an independent
computation.

Randomness comes from SplitMix64, a counter-based 64-bit generator that is a
few lines to re-implement in any language, so bundles are bit-reproducible
across platforms; the seed is recorded in the bundle manifest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bundle_io import FeatureBundle

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

IMAGE_SCALE = 8  # support masks ship at IMAGE_SCALE x the patch grid


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


class Lcg:
    """SplitMix64 as a counter-based stream; uniforms take the top 53 bits.

    Draw i of stream `seed` is mix64(seed + i * golden_gamma), so scalar and
    vectorized fills produce the identical sequence.
    """

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        self.count = 0

    def next_u64(self) -> int:
        self.count += 1
        return _mix64((self.seed + self.count * _GOLDEN) & _MASK64)

    def uniform(self) -> float:
        """Uniform in [0, 1)."""
        return (self.next_u64() >> 11) / float(1 << 53)

    def uniform_signed(self) -> float:
        """Uniform in [-1, 1)."""
        return 2.0 * self.uniform() - 1.0

    def uniforms(self, total: int, signed: bool = True) -> np.ndarray:
        """Vectorized draw of the next `total` uniforms (same stream)."""
        counts = self.count + 1 + np.arange(total, dtype=np.uint64)
        self.count += total
        z = np.uint64(self.seed) + counts * np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        z = z ^ (z >> np.uint64(31))
        out = (z >> np.uint64(11)).astype(np.float64) / float(1 << 53)
        return 2.0 * out - 1.0 if signed else out


@dataclass
class SynthSpec:
    seed: int
    h: int
    w: int
    d: int
    n: int
    K: int
    planted_region: tuple[int, int, int, int] | None = None  # row0, col0, rows, cols
    class_name: str = "synthetic"

    def __post_init__(self):
        if self.h * self.w > 4096:
            raise ValueError("grid too large for oracle tractability (hw > 4096)")


def _fill(rng: Lcg, shape: tuple[int, ...], signed: bool = True) -> np.ndarray:
    total = math.prod(shape)
    return rng.uniforms(total, signed=signed).reshape(shape).astype("<f4")


def _orthonormal_pair(rng: Lcg, d: int) -> tuple[np.ndarray, np.ndarray]:
    v1 = np.array([rng.uniform_signed() for _ in range(d)], dtype=np.float64)
    v1 /= np.linalg.norm(v1)
    v2 = np.array([rng.uniform_signed() for _ in range(d)], dtype=np.float64)
    v2 -= (v2 @ v1) * v1
    v2 /= np.linalg.norm(v2)
    return v1.astype("<f4"), v2.astype("<f4")


def _upsample_mask(grid_mask: np.ndarray, scale: int) -> np.ndarray:
    return np.repeat(np.repeat(grid_mask, scale, axis=0), scale, axis=1).astype("u1")


def synth_bundle(spec: SynthSpec) -> FeatureBundle:
    """Deterministic bundle from the seed.

    With a planted region, query features inside the rectangle equal a unit
    vector u and u' (orthogonal to u) outside; the text embeddings are u / u'
    and the support shots copy the query features with masks covering exactly
    the region. Without one, everything is seeded uniform noise.
    """
    rng = Lcg(spec.seed)
    h, w, d = spec.h, spec.w, spec.d
    hw = h * w

    if spec.planted_region is not None:
        r0, c0, nr, nc = spec.planted_region
        if not (0 <= r0 and r0 + nr <= h and 0 <= c0 and c0 + nc <= w and nr > 0 and nc > 0):
            raise ValueError(f"planted region {spec.planted_region} outside {h}x{w} grid")
        u, u_perp = _orthonormal_pair(rng, d)
        region = np.zeros((h, w), dtype=bool)
        region[r0:r0 + nr, c0:c0 + nc] = True
        query = np.where(region.reshape(-1, 1), u, u_perp).astype("<f4")
        supports = [query.copy() for _ in range(spec.K)]
        masks = [_upsample_mask(region.astype("u1"), IMAGE_SCALE) for _ in range(spec.K)]
        t_f, t_b = u.copy(), u_perp.copy()
    else:
        query = _fill(rng, (hw, d))
        supports = [_fill(rng, (hw, d)) for _ in range(spec.K)]
        masks = []
        for _ in range(spec.K):
            grid_mask = np.array(
                [1 if rng.uniform() < 0.5 else 0 for _ in range(hw)], dtype="u1"
            ).reshape(h, w)
            if not grid_mask.any():
                grid_mask[h // 2, w // 2] = 1
            masks.append(_upsample_mask(grid_mask, IMAGE_SCALE))
        t_f = _fill(rng, (d,))
        t_b = _fill(rng, (d,))

    attentions = _fill(rng, (spec.n, hw, hw), signed=False)

    return FeatureBundle(
        query_features=query,
        support_features=supports,
        support_masks=masks,
        text_embed_target=t_f,
        text_embed_background=t_b,
        attentions=attentions,
        h=h,
        w=w,
        d=d,
        n=spec.n,
        K=spec.K,
        class_name=spec.class_name,
        image_height=h * IMAGE_SCALE,
        image_width=w * IMAGE_SCALE,
        seed=spec.seed,
    )


def gradcam_instance(
    seed: int, hw: int, d: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Seeded (query_features, t_f, t_b) for gradient checks.

    Both prompts sit near the pooled query direction so the temperature
    softmax stays unsaturated at small tau; a fully random prompt pair drives
    the score gap hundreds of logits wide, where both scores round to 1.0 in
    double precision and a finite difference carries no signal.
    """
    rng = Lcg(seed)
    g = np.array([rng.uniform_signed() for _ in range(d)], dtype=np.float64)
    g /= np.linalg.norm(g)
    noise = np.array(
        [[rng.uniform_signed() for _ in range(d)] for _ in range(hw)], dtype=np.float64
    )
    query = g[None, :] + 0.3 * noise

    def near_prompt() -> np.ndarray:
        r = np.array([rng.uniform_signed() for _ in range(d)], dtype=np.float64)
        t = g + 0.2 * r
        return t / np.linalg.norm(t)

    return query, near_prompt(), near_prompt()


# ---------------------------------------------------------------------------
# loop-literal references


def _naive_cosine(a, b) -> float:
    dot = na = nb = 0.0
    for x, y in zip(a, b):
        dot += float(x) * float(y)
        na += float(x) * float(x)
        nb += float(y) * float(y)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return dot / (math.sqrt(na) * math.sqrt(nb))


def naive_correspondence(support, query) -> np.ndarray:
    """All-pairs cosine matrix by double loop."""
    out = [[_naive_cosine(s, q) for q in query] for s in support]
    return np.array(out, dtype=np.float64)


def naive_vvp(
    bundle: FeatureBundle, shot: int = 0, eps: float = 1e-7
) -> np.ndarray:
    """Single-shot visual-visual prior by the most literal loops."""
    h, w = bundle.h, bundle.w
    mask = bundle.support_masks[shot]
    H, W = mask.shape
    grid_mask = []
    for r in range(h):
        for c in range(w):
            sr = int((r + 0.5) * H / h)
            sc = int((c + 0.5) * W / w)
            grid_mask.append(1 if mask[sr, sc] else 0)

    support = bundle.support_features[shot]
    masked = [
        [float(v) * grid_mask[i] for v in support[i]] for i in range(h * w)
    ]
    query = [[float(v) for v in row] for row in bundle.query_features]

    best = []
    for j in range(h * w):
        m = -math.inf
        for i in range(h * w):
            m = max(m, _naive_cosine(masked[i], query[j]))
        best.append(m)

    lo = min(best)
    hi = max(best)
    vals = [(v - lo) / (hi - lo + eps) for v in best]
    return np.array(vals, dtype=np.float64).reshape(h, w)


def _naive_target_score(query, t_f, t_b, tau: float) -> float:
    # Eq-literal: mean-pool, cosine to each prompt, temperature softmax
    hw = len(query)
    d = len(query[0])
    mean = [0.0] * d
    for row in query:
        for m in range(d):
            mean[m] += float(row[m])
    mean = [v / hw for v in mean]
    z_f = _naive_cosine(mean, t_f) / tau
    z_b = _naive_cosine(mean, t_b) / tau
    top = max(z_f, z_b)
    e_f = math.exp(z_f - top)
    e_b = math.exp(z_b - top)
    return e_f / (e_f + e_b)


def fd_gradcam_weights(
    query_features, t_f, t_b, tau: float, step: float = 1e-4
) -> np.ndarray:
    """Central finite difference of the target score per channel.

    Shifting every pixel of channel m by +/- step shifts the channel mean by
    the same amount; the pixel-averaged gradient is the central difference
    scaled by one over the pixel count.
    """
    query = [[float(v) for v in row] for row in query_features]
    t_f = [float(v) for v in t_f]
    t_b = [float(v) for v in t_b]
    hw = len(query)
    d = len(query[0])
    out = []
    for m in range(d):
        plus = [row[:] for row in query]
        minus = [row[:] for row in query]
        for row_p, row_m in zip(plus, minus):
            row_p[m] += step
            row_m[m] -= step
        s_plus = _naive_target_score(plus, t_f, t_b, tau)
        s_minus = _naive_target_score(minus, t_f, t_b, tau)
        out.append((s_plus - s_minus) / (2.0 * step) / hw)
    return np.array(out, dtype=np.float64)


def naive_sinkhorn(matrix, max_iters: int = 1000, tol: float = 1e-10) -> np.ndarray:
    """Alternating row/column normalization by explicit loops."""
    m = [[float(v) for v in row] for row in matrix]
    n_rows = len(m)
    n_cols = len(m[0])
    for _ in range(max_iters):
        for i in range(n_rows):
            s = sum(m[i])
            for j in range(n_cols):
                m[i][j] /= s
        for j in range(n_cols):
            s = sum(m[i][j] for i in range(n_rows))
            for i in range(n_rows):
                m[i][j] /= s
        row_err = max(abs(sum(row) - 1.0) for row in m)
        col_err = max(
            abs(sum(m[i][j] for i in range(n_rows)) - 1.0) for j in range(n_cols)
        )
        if max(row_err, col_err) <= tol:
            break
    return np.array(m, dtype=np.float64)
