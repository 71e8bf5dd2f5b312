import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from bodysync.config import SyncConfig, keypoint_set
from bodysync.objective import (NegativeSamplingPolicy, SamplingError,
                                contrastive_loss, loss_from_logits,
                                sample_negatives, similarity,
                                valid_negative_starts)


def cfg_with(**kw):
    base = dict(embed_dim=16, n_heads=4, keypoint_set=keypoint_set("pose22"))
    base.update(kw)
    return SyncConfig(**base)


def test_cosine_identity_and_orthogonal():
    v = torch.tensor([1.0, 2.0, 3.0])
    assert float(similarity(v, v)) == pytest.approx(1.0)
    a = torch.tensor([1.0, 0.0])
    b = torch.tensor([0.0, 1.0])
    assert float(similarity(a, b)) == pytest.approx(0.0, abs=1e-7)


def test_zero_norm_embedding_errors():
    with pytest.raises(ValueError, match="zero-norm"):
        similarity(torch.zeros(4), torch.ones(4))


def test_vector_mode_reduction():
    # construct per-keypoint cosines {0.2, 0.9, -0.1} explicitly
    es = torch.tensor([1.0, 0.0])
    cosines = [0.2, 0.9, -0.1]
    ev = torch.stack([torch.tensor([c, math.sqrt(1 - c * c)]) for c in cosines])
    assert float(similarity(ev, es, reduce="max")) == pytest.approx(0.9)
    assert float(similarity(ev, es, reduce="mean")) == pytest.approx(np.mean(cosines))


def test_uniform_logits_give_log_K_plus_1():
    l_pos = torch.tensor(0.5, dtype=torch.float64)
    l_negs = torch.full((3,), 0.5, dtype=torch.float64)
    assert float(loss_from_logits(l_pos, l_negs)) == pytest.approx(math.log(4), abs=1e-9)


def test_loss_matches_direct_scalar_oracle():
    # direct evaluation of -log(exp(lp) / (exp(lp) + sum exp(ln_j)))
    l_pos, l_negs = 0.8, [0.1, -0.3]
    expected = -math.log(math.exp(0.8) / (math.exp(0.8) + math.exp(0.1) + math.exp(-0.3)))
    got = float(loss_from_logits(torch.tensor(l_pos, dtype=torch.float64),
                                 torch.tensor(l_negs, dtype=torch.float64)))
    assert got == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(math.log(1 + math.exp(-0.7) + math.exp(-1.1)), abs=1e-12)


def test_loss_monotone_decreasing_in_positive_logit():
    l_negs = torch.tensor([0.2, -0.5])
    losses = [float(loss_from_logits(torch.tensor(lp), l_negs))
              for lp in (0.0, 2.0, 10.0, 50.0)]
    assert all(a > b for a, b in zip(losses, losses[1:]))
    assert losses[-1] < 1e-10


def test_loss_nonnegative_and_nan_rejected():
    rng = np.random.default_rng(0)
    for _ in range(50):
        lp = torch.tensor(rng.normal())
        ln = torch.tensor(rng.normal(size=4))
        assert float(loss_from_logits(lp, ln)) >= 0.0
    with pytest.raises(ValueError, match="non-finite"):
        loss_from_logits(torch.tensor(float("nan")), torch.zeros(2))


def test_loss_gradient_signs_by_finite_differences():
    lp = torch.tensor(0.3, dtype=torch.float64, requires_grad=True)
    ln = torch.tensor([0.1, -0.2, 0.4], dtype=torch.float64, requires_grad=True)
    loss = loss_from_logits(lp, ln)
    loss.backward()
    assert lp.grad < 0
    assert torch.all(ln.grad > 0)
    eps = 1e-5
    fd = (float(loss_from_logits(lp.detach() + eps, ln.detach()))
          - float(loss_from_logits(lp.detach() - eps, ln.detach()))) / (2 * eps)
    assert fd == pytest.approx(float(lp.grad), abs=1e-6)


def test_contrastive_loss_batch_uniform():
    cfg = cfg_with(K=3, logit_mode="dot")
    ev = torch.ones(2, 16)
    es = torch.ones(2, 16)
    negs = torch.ones(2, 3, 16)
    assert float(contrastive_loss(ev, es, negs, cfg)) == pytest.approx(math.log(4), abs=1e-6)


def test_contrastive_loss_vector_mode_runs():
    cfg = cfg_with(K=2, logit_mode="cosine", similarity_reduce="mean")
    torch.manual_seed(0)
    ev = torch.randn(3, 22, 16)
    es = torch.randn(3, 16)
    negs = torch.randn(3, 2, 16)
    loss = contrastive_loss(ev, es, negs, cfg)
    assert loss.item() >= 0.0


@settings(max_examples=40, deadline=None)
@given(scale_v=st.floats(0.1, 50), scale_s=st.floats(0.1, 50), seed=st.integers(0, 100))
def test_cosine_invariant_to_positive_rescaling(scale_v, scale_s, seed):
    rng = np.random.default_rng(seed)
    ev = torch.tensor(rng.normal(size=8))
    candidates = [torch.tensor(rng.normal(size=8)) for _ in range(5)]
    base = [float(similarity(ev, c)) for c in candidates]
    scaled = [float(similarity(scale_v * ev, scale_s * c)) for c in candidates]
    assert np.argmax(base) == np.argmax(scaled)
    np.testing.assert_allclose(base, scaled, atol=1e-9)


def test_sampler_examples():
    rng = np.random.default_rng(0)
    policy = NegativeSamplingPolicy(K=4, min_gap_frames=25)
    starts = sample_negatives(250, 0, 25, policy, rng)
    assert starts.size == 4 and np.all(starts >= 50)

    only = sample_negatives(75, 0, 25, NegativeSamplingPolicy(K=1, min_gap_frames=25), rng)
    np.testing.assert_array_equal(only, [50])

    with pytest.raises(SamplingError, match="only 1 valid"):
        sample_negatives(75, 0, 25, NegativeSamplingPolicy(K=2, min_gap_frames=25), rng)


def test_sampler_positive_window_must_fit():
    with pytest.raises(SamplingError, match="does not fit"):
        sample_negatives(50, 40, 25, NegativeSamplingPolicy(K=1), np.random.default_rng(0))


@settings(max_examples=60, deadline=None)
@given(clip_len=st.integers(25, 200), p_frac=st.floats(0, 1), seed=st.integers(0, 50))
def test_sampler_gap_predicate_property(clip_len, p_frac, seed):
    T, gap = 25, 25
    p = int(p_frac * (clip_len - T))
    rng = np.random.default_rng(seed)
    valid = valid_negative_starts(clip_len, p, T, gap)
    policy = NegativeSamplingPolicy(K=1, min_gap_frames=gap)
    if valid.size == 0:
        with pytest.raises(SamplingError):
            sample_negatives(clip_len, p, T, policy, rng)
        return
    s = int(sample_negatives(clip_len, p, T, policy, rng)[0])
    assert 0 <= s <= clip_len - T
    # nearest-edge distance between windows is at least the gap
    assert s + T + gap <= p or s >= p + T + gap


def test_sampler_without_replacement():
    rng = np.random.default_rng(1)
    policy = NegativeSamplingPolicy(K=5, min_gap_frames=25)
    starts = sample_negatives(300, 100, 25, policy, rng)
    assert len(set(starts.tolist())) == 5
