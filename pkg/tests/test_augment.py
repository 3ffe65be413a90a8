import pytest

import numpy as np

from hypothesis import given, settings, strategies as st

from mstat.tensor import Tensor
from mstat.augment import (
    TpsConfig, tps_index_map, tps_apply, PixelAugment, horizontal_flip, padded_crop, random_erase, augment_clip
)
from mstat.model import MstatModel
from mstat.client import tiny_model_config
from mstat.util.exceptions import ConfigError, DimensionError

def test_zero_probability_is_identity(rng):
    tokens = rng.normal(size = (4, 6, 3))
    out, (draw,) = tps_apply(tokens, TpsConfig(probability = 0.0, positions = 3), rng)

    assert not draw.fired
    assert draw.is_identity()
    np.testing.assert_array_equal(out, tokens)

def test_single_frame_is_identity(rng):
    tokens = rng.normal(size = (1, 6, 3))
    out, (draw,) = tps_apply(tokens, TpsConfig(probability = 1.0, positions = 6), rng)

    assert draw.fired
    np.testing.assert_array_equal(out, tokens)

def test_zero_positions_is_identity(rng):
    draw = tps_index_map(4, 6, TpsConfig(probability = 1.0, positions = 0), rng)

    assert draw.fired
    assert draw.positions == ()
    assert draw.is_identity()

@settings(max_examples = 40, deadline = None)
@given(
    frames = st.integers(1, 6),
    tokens = st.integers(1, 8),
    data = st.data()
)
def test_shuffle_preserves_each_position_multiset(frames, tokens, data):
    positions = data.draw(st.integers(0, tokens))
    seed = data.draw(st.integers(0, 2 ** 16))
    rng = np.random.default_rng(seed)

    clip = rng.normal(size = (frames, tokens, 2))
    out, (draw,) = tps_apply(clip, TpsConfig(probability = 1.0, positions = positions), rng)

    np.testing.assert_array_equal(np.sort(out, axis = 0), np.sort(clip, axis = 0))

    untouched = [n for n in range(tokens) if n not in draw.positions]
    np.testing.assert_array_equal(out[:, untouched], clip[:, untouched])

    for n in draw.positions:
        assert sorted(draw.index[:, n]) == list(range(frames))

def test_batched_shuffle_draws_per_sample(float64, rng):
    tokens = Tensor(rng.normal(size = (5, 4, 3, 2)))
    out, draws = tps_apply(tokens, TpsConfig(probability = 1.0, positions = 2), rng)

    assert isinstance(out, Tensor)
    assert len(draws) == 5

    for sample, draw in enumerate(draws):
        expected = tokens.data[sample][draw.index, np.arange(3)[None, :]]
        np.testing.assert_array_equal(out.data[sample], expected)

def test_coin_is_drawn_even_when_disabled():
    first, second = np.random.default_rng(4), np.random.default_rng(4)

    tps_index_map(4, 6, TpsConfig(probability = 0.0, positions = 2), first)
    second.random()

    assert first.random() == second.random()

def test_more_positions_than_tokens():
    with pytest.raises(ConfigError):
        tps_index_map(4, 3, TpsConfig(probability = 1.0, positions = 4), np.random.default_rng(0))

@pytest.mark.parametrize("kwargs", [{"probability": 1.5}, {"probability": -0.1}, {"positions": -1}])
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        TpsConfig(**kwargs)

def test_wrong_rank(rng):
    with pytest.raises(DimensionError):
        tps_apply(rng.normal(size = (4, 3)), TpsConfig(), rng)

def test_seeded_config_without_generator():
    tokens = np.arange(24.0).reshape(4, 3, 2)
    cfg = TpsConfig(probability = 1.0, positions = 2, seed = 11)

    first, _ = tps_apply(tokens, cfg, None)
    second, _ = tps_apply(tokens, cfg, None)

    np.testing.assert_array_equal(first, second)

def _fail(*args, **kwargs):
    raise AssertionError("patch shuffling ran")

def test_eval_forward_never_shuffles(monkeypatch, rng):
    model = MstatModel(tiny_model_config(tps_probability = 1.0), 3, rng)
    monkeypatch.setattr("mstat.model._mstat.tps_apply", _fail)

    model.forward(rng.uniform(size = (2, 2, 3, 4, 4)))

    with pytest.raises(AssertionError):
        model.forward(rng.uniform(size = (2, 2, 3, 4, 4)), train = True, rng = rng)

# pixel transforms

@pytest.fixture
def clip(rng):
    return rng.uniform(size = (3, 3, 8, 6))

def test_flip_twice_is_identity(clip):
    np.testing.assert_array_equal(horizontal_flip(horizontal_flip(clip)), clip)
    np.testing.assert_array_equal(horizontal_flip(clip)[..., 0], clip[..., -1])

def test_centred_crop_is_identity(clip):
    np.testing.assert_array_equal(padded_crop(clip, 2, 2, 2), clip)

def test_shifted_crop_pads_with_zeros(clip):
    out = padded_crop(clip, 2, 0, 0)

    assert out.shape == clip.shape
    assert (out[..., :2, :] == 0).all()
    np.testing.assert_array_equal(out[..., 2:, 2:], clip[..., :-2, :-2])

def test_erase_touches_one_rectangle_shared_by_frames(clip, rng):
    out = random_erase(clip, rng, area = (0.2, 0.2), aspect = (1.0, 1.0))
    changed = (out != clip).any(axis = 1)

    assert changed.any()
    assert all((changed[t] == changed[0]).all() for t in range(len(clip)))

    rows, columns = np.nonzero(changed[0])
    assert changed[0][rows.min():rows.max() + 1, columns.min():columns.max() + 1].all()

def test_nothing_fires_at_zero_probability(clip, rng):
    cfg = PixelAugment(flip_probability = 0.0, crop_probability = 0.0, erase_probability = 0.0)
    np.testing.assert_array_equal(cfg(clip, rng), clip)

def test_augment_keeps_shape(clip, rng):
    cfg = PixelAugment(flip_probability = 1.0, crop_probability = 1.0, erase_probability = 1.0)
    assert augment_clip(clip, cfg, rng).shape == clip.shape

def test_augment_needs_a_clip(rng):
    with pytest.raises(DimensionError):
        augment_clip(np.ones((3, 8, 6)), PixelAugment(), rng)
