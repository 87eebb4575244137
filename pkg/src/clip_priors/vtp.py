"""Visual-text prior generation.

The query patch features are pooled into a single token, classified against
the target / non-target text embeddings through a temperature softmax, and the
gradient of the target score with respect to the per-channel mean features
gives per-channel weights. The weighted, ReLU-clipped channel sum is the
prior map.

The gradient is closed-form: the score depends on the features only through
the pooled token, so no autodiff is involved. A finite-difference oracle pins
correctness (see oracles module).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ZeroVector
from .numerics import DEFAULT_EPS, minmax_normalize, softmax


@dataclass
class ClassificationScores:
    s_target: float
    s_background: float
    tau: float


@dataclass
class GradcamWeights:
    w: np.ndarray  # [d]


def compute_query_token(query_features: np.ndarray) -> np.ndarray:
    """Global average pool over patches: [hw, d] -> [d]."""
    f = np.asarray(query_features, dtype=np.float64)
    return f.mean(axis=0)


def classification_scores(
    v_q: np.ndarray, t_f: np.ndarray, t_b: np.ndarray, tau: float
) -> ClassificationScores:
    """Softmax over cosine(v_q, t_i) / tau for i in {target, background}."""
    v_q = np.asarray(v_q, dtype=np.float64)
    t_f = np.asarray(t_f, dtype=np.float64)
    t_b = np.asarray(t_b, dtype=np.float64)
    for name, vec in (("v_q", v_q), ("t_f", t_f), ("t_b", t_b)):
        if np.linalg.norm(vec) == 0.0:
            raise ZeroVector(f"{name} has zero norm")
    nv = np.linalg.norm(v_q)
    logits = np.array(
        [
            v_q @ t_f / (nv * np.linalg.norm(t_f)) / tau,
            v_q @ t_b / (nv * np.linalg.norm(t_b)) / tau,
        ]
    )
    s = softmax(logits)
    return ClassificationScores(s_target=float(s[0]), s_background=float(s[1]), tau=tau)


def _logit_grad(v: np.ndarray, t: np.ndarray, tau: float) -> np.ndarray:
    # d/dv [ cos(v, t) / tau ]
    nv = np.linalg.norm(v)
    nt = np.linalg.norm(t)
    return (t / (nv * nt) - (v @ t) * v / (nv**3 * nt)) / tau


def gradcam_weights(
    query_features: np.ndarray, t_f: np.ndarray, t_b: np.ndarray, tau: float
) -> GradcamWeights:
    """Per-channel weights: mean over pixels of d(target score)/d(feature).

    The score depends on the features only through the pooled token, so the
    pixel sum collapses to the gradient with respect to the token, scaled by
    one over the pixel count.
    """
    f = np.asarray(query_features, dtype=np.float64)
    hw = f.shape[0]
    v_q = f.mean(axis=0)
    t_f = np.asarray(t_f, dtype=np.float64)
    t_b = np.asarray(t_b, dtype=np.float64)
    scores = classification_scores(v_q, t_f, t_b, tau)
    grad_v = (
        scores.s_target
        * scores.s_background
        * (_logit_grad(v_q, t_f, tau) - _logit_grad(v_q, t_b, tau))
    )
    return GradcamWeights(w=grad_v / hw)


def vtp_map(
    query_features: np.ndarray,
    weights: GradcamWeights,
    grid: tuple[int, int],
    eps: float = DEFAULT_EPS,
) -> np.ndarray:
    """ReLU-clipped weighted channel sum, reshaped row-major, min-max normalized."""
    h, w = grid
    f = np.asarray(query_features, dtype=np.float64)
    raw = np.maximum(f @ weights.w, 0.0)
    return minmax_normalize(raw.reshape(h, w), eps)
