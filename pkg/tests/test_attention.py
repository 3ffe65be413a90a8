import pytest

import numpy as np

from mstat.tensor import Tensor, MacCounter, AttentionRecorder
from mstat.layers import (
    AttentionParams, TokenSeq, default_heads, split_heads, merge_heads,
    self_attention, temporal_attention, spatial_attention
)
from mstat.util.exceptions import ConfigError, DimensionError, EmptyInputError

@pytest.fixture
def params(float64, rng):
    return AttentionParams(8, 2, rng, module_id = "layer.attn")

def test_heads_must_divide_width(rng):
    with pytest.raises(ConfigError):
        AttentionParams(10, 3, rng)

@pytest.mark.parametrize("dim, heads", [(12, 1), (192, 3), (768, 12)])
def test_default_heads(dim, heads):
    assert default_heads(dim) == heads

def test_split_merge_heads_inverse(float64, rng):
    x = Tensor(rng.normal(size = (2, 5, 8)))
    split = split_heads(x, 4)

    assert split.shape == (2, 4, 5, 2)
    np.testing.assert_array_equal(merge_heads(split).data, x.data)

def test_maps_are_row_stochastic(params, rng):
    with AttentionRecorder() as recorder:
        self_attention(Tensor(rng.normal(size = (3, 5, 8))), params)

    (module_id, weights), = recorder.maps

    assert module_id == "layer.attn"
    assert weights.shape == (3, 2, 5, 5)
    assert (weights >= 0).all()
    np.testing.assert_allclose(weights.sum(axis = -1), 1.0)

def test_permutation_equivariance(params, rng):
    tokens = rng.normal(size = (6, 8))
    perm = rng.permutation(6)

    out = self_attention(Tensor(tokens), params).data
    permuted = self_attention(Tensor(tokens[perm]), params).data

    np.testing.assert_allclose(permuted, out[perm], atol = 1e-12)

def test_single_token_returns_its_value(params, rng):
    token = rng.normal(size = (1, 8))
    out = self_attention(Tensor(token), params).data
    expected = token @ params.w_v.data @ params.w_o.data + params.b_o.data

    np.testing.assert_allclose(out, expected, atol = 1e-12)

def test_width_mismatch(params):
    with pytest.raises(DimensionError):
        self_attention(Tensor(np.ones((4, 6))), params)

def test_empty_sequence(params):
    with pytest.raises(EmptyInputError):
        self_attention(Tensor(np.ones((0, 8))), params)

def test_temporal_attention_mixes_frames_per_position(params, rng):
    tokens = rng.normal(size = (3, 4, 8))
    out = temporal_attention(TokenSeq(Tensor(tokens)), params).tokens.data

    # changing position 0 of one frame leaves every other position alone
    changed = tokens.copy()
    changed[1, 0] += 1.0
    other = temporal_attention(TokenSeq(Tensor(changed)), params).tokens.data

    np.testing.assert_allclose(other[:, 1:], out[:, 1:], atol = 1e-12)
    assert not np.allclose(other[:, 0], out[:, 0])

def test_temporal_attention_of_a_still_clip(params, rng):
    frame = rng.normal(size = (4, 8))
    out = temporal_attention(TokenSeq(Tensor(np.tile(frame, (3, 1, 1)))), params).tokens.data

    np.testing.assert_allclose(out, np.tile(out[0], (3, 1, 1)), atol = 1e-12)

def test_spatial_attention_keeps_frames_apart(params, rng):
    tokens = rng.normal(size = (3, 4, 8))
    out = spatial_attention(TokenSeq(Tensor(tokens)), params).tokens.data

    changed = tokens.copy()
    changed[2] += 1.0
    other = spatial_attention(TokenSeq(Tensor(changed)), params).tokens.data

    np.testing.assert_allclose(other[:2], out[:2], atol = 1e-12)

def test_spatial_attention_with_class_copies(params, rng):
    seq = TokenSeq(Tensor(rng.normal(size = (2, 3, 4, 8))), frame_class = Tensor(rng.normal(size = (2, 3, 8))))
    out = spatial_attention(seq, params)

    assert out.tokens.shape == (2, 3, 4, 8)
    assert out.frame_class.shape == (2, 3, 8)

@pytest.mark.parametrize("frames, tokens, dim", [(1, 4, 8), (4, 8, 16), (3, 5, 12)])
def test_temporal_and_spatial_mac_counts(frames, tokens, dim, rng):
    params = AttentionParams(dim, 2, rng)
    seq = TokenSeq(Tensor(rng.normal(size = (frames, tokens, dim))))

    with MacCounter() as counter:
        temporal_attention(seq, params)

    assert counter["attn"] == 2 * tokens * frames ** 2 * dim

    with MacCounter() as counter:
        spatial_attention(seq, params)

    assert counter["attn"] == 2 * frames * tokens ** 2 * dim
    assert counter["proj"] == 4 * frames * tokens * dim ** 2
