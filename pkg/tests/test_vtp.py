import math

import numpy as np
import pytest

from clip_priors.errors import ZeroVector
from clip_priors.oracles import (
    Lcg,
    SynthSpec,
    fd_gradcam_weights,
    gradcam_instance,
    synth_bundle,
)
from clip_priors.vtp import (
    classification_scores,
    compute_query_token,
    gradcam_weights,
    vtp_map,
)


def test_query_token_constant_rows():
    x = np.array([3.0, -1.0, 2.0])
    f = np.tile(x, (7, 1))
    np.testing.assert_allclose(compute_query_token(f), x)


def test_query_token_symmetry():
    f = np.array([[1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_allclose(compute_query_token(f), [0.5, 0.5])


def test_query_token_vs_naive_loop():
    rng = Lcg(13)
    f = np.array([rng.uniform_signed() for _ in range(16 * 8)]).reshape(16, 8)
    expected = [sum(float(f[i, m]) for i in range(16)) / 16 for m in range(8)]
    np.testing.assert_allclose(compute_query_token(f), expected, atol=1e-15)


def test_scores_equal_prompts():
    v = np.array([0.3, 0.7, -0.2])
    t = np.array([1.0, 1.0, 1.0])
    s = classification_scores(v, t, t, tau=0.17)
    assert s.s_target == pytest.approx(0.5, abs=1e-12)
    assert s.s_background == pytest.approx(0.5, abs=1e-12)


def test_scores_logit_gap_two():
    # cos_f - cos_b = 0.02 at tau 0.01: logit gap 2
    v = np.array([1.0, 0.0])
    t_f = np.array([0.52, math.sqrt(1 - 0.52**2)])
    t_b = np.array([0.50, math.sqrt(1 - 0.50**2)])
    s = classification_scores(v, t_f, t_b, tau=0.01)
    expected = 1.0 / (1.0 + math.exp(-2.0))
    assert s.s_target == pytest.approx(expected, abs=1e-9)
    assert s.s_background == pytest.approx(1 - expected, abs=1e-9)


def test_scores_orthogonal_prompts_tau_one():
    v = np.array([1.0, 0.0])
    s = classification_scores(v, v, np.array([0.0, 1.0]), tau=1.0)
    e = math.e
    assert s.s_target == pytest.approx(e / (e + 1), abs=1e-12)
    assert s.s_background == pytest.approx(1 / (e + 1), abs=1e-12)


def test_scores_sum_to_one():
    q, t_f, t_b = gradcam_instance(21, 9, 5)
    s = classification_scores(q.mean(axis=0), t_f, t_b, tau=0.01)
    assert s.s_target + s.s_background == pytest.approx(1.0, abs=1e-12)
    assert 0 < s.s_target < 1 and 0 < s.s_background < 1


def test_scores_zero_vector():
    with pytest.raises(ZeroVector):
        classification_scores(np.zeros(2), np.ones(2), np.ones(2), tau=1.0)


def test_gradcam_equal_prompts_zero_gradient():
    q, _, _ = gradcam_instance(1, 16, 8)
    t = np.ones(8)
    w = gradcam_weights(q, t, t, tau=0.01).w
    np.testing.assert_allclose(w, 0.0, atol=1e-15)


def test_gradcam_vs_finite_difference_seed42():
    q, t_f, t_b = gradcam_instance(42, 16, 8)
    w = gradcam_weights(q, t_f, t_b, tau=0.01).w
    fd = fd_gradcam_weights(q, t_f, t_b, tau=0.01, step=1e-4)
    assert np.abs(w - fd).max() / np.abs(fd).max() <= 1e-4


def test_gradcam_scale_invariance_identity():
    # S_f is scale-invariant in the features, so w is orthogonal to v_q
    q, t_f, t_b = gradcam_instance(7, 16, 8)
    w = gradcam_weights(q, t_f, t_b, tau=0.01).w
    v_q = q.mean(axis=0)
    assert abs(w @ v_q) <= 1e-10
    w2 = gradcam_weights(2.0 * q, t_f, t_b, tau=0.01).w
    # rescaling leaves the score (hence the gradient direction) unchanged
    np.testing.assert_allclose(w2 / np.linalg.norm(w2), w / np.linalg.norm(w), atol=1e-9)


def test_vtp_map_single_channel_projection():
    f = np.array([[0.2, 5.0], [-0.5, 1.0], [1.0, -2.0], [0.0, 3.0]])
    from clip_priors.vtp import GradcamWeights

    out = vtp_map(f, GradcamWeights(w=np.array([1.0, 0.0])), (2, 2), eps=1e-7)
    expected = np.array([[0.2, 0.0], [1.0, 0.0]]) / (1.0 + 1e-7)
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_vtp_map_relu_floor():
    from clip_priors.vtp import GradcamWeights

    f = np.abs(np.arange(8.0)).reshape(4, 2)
    out = vtp_map(f, GradcamWeights(w=np.array([-1.0, -0.5])), (2, 2))
    assert (out == 0).all()


def _planted(seed):
    return synth_bundle(
        SynthSpec(seed=seed, h=6, w=6, d=8, n=2, K=1, planted_region=(1, 2, 2, 3))
    )


def _region_mask(bundle, region):
    r0, c0, nr, nc = region
    mask = np.zeros((bundle.h, bundle.w), dtype=bool)
    mask[r0:r0 + nr, c0:c0 + nc] = True
    return mask


def test_vtp_planted_argmax_inside_region():
    b = _planted(3)
    w = gradcam_weights(b.query_features, b.text_embed_target, b.text_embed_background, 0.01)
    p = vtp_map(b.query_features, w, (b.h, b.w))
    region = _region_mask(b, (1, 2, 2, 3))
    assert region.reshape(-1)[np.argmax(p)]
    # positive rescaling of the features leaves the argmax in place
    w2 = gradcam_weights(
        3.0 * b.query_features.astype(np.float64),
        b.text_embed_target,
        b.text_embed_background,
        0.01,
    )
    p2 = vtp_map(3.0 * b.query_features.astype(np.float64), w2, (b.h, b.w))
    assert region.reshape(-1)[np.argmax(p2)]


def test_vtp_planted_prompt_swap_moves_argmax():
    b = _planted(4)
    w = gradcam_weights(b.query_features, b.text_embed_background, b.text_embed_target, 0.01)
    p = vtp_map(b.query_features, w, (b.h, b.w))
    region = _region_mask(b, (1, 2, 2, 3))
    assert not region.reshape(-1)[np.argmax(p)]


def test_vtp_range():
    for seed in range(5):
        q, t_f, t_b = gradcam_instance(seed, 24, 8)
        w = gradcam_weights(q, t_f, t_b, tau=0.01)
        p = vtp_map(q, w, (4, 6))
        assert p.min() >= 0.0 and p.max() < 1.0
