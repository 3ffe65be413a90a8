import logging

import pytest

import numpy as np

from mstat import tensor as T
from mstat.tensor import Tensor, MacCounter
from mstat.layers import (
    AapBank, IapBank, double_norms, init_aap_anisotropic, pairwise_cosine,
    aap_forward, iap_weights, iap_mixture, iap_forward
)
from mstat.util.exceptions import ConfigError, DimensionError, EmptyInputError

def test_aap_output_shape(float64, rng):
    bank = AapBank(8, 2, 5, rng)
    assert aap_forward(Tensor(rng.normal(size = (3, 7, 8))), bank).shape == (3, 5, 8)

def test_aap_is_token_order_invariant(float64, rng):
    bank = AapBank(8, 2, 3, rng)
    tokens = rng.normal(size = (7, 8))

    out = aap_forward(Tensor(tokens), bank).data
    permuted = aap_forward(Tensor(tokens[rng.permutation(7)]), bank).data

    np.testing.assert_allclose(permuted, out, atol = 1e-12)

def test_aap_of_identical_tokens_is_their_value(float64, rng):
    bank = AapBank(8, 2, 3, rng)
    token = rng.normal(size = 8)

    out = aap_forward(Tensor(np.tile(token, (5, 1))), bank).data

    np.testing.assert_allclose(out, np.tile(token @ bank.w_v.data, (3, 1)), atol = 1e-12)

def test_aap_rejects_empty_and_wrong_width(rng):
    bank = AapBank(8, 2, 3, rng)

    with pytest.raises(EmptyInputError):
        aap_forward(Tensor(np.ones((0, 8))), bank)

    with pytest.raises(DimensionError):
        aap_forward(Tensor(np.ones((4, 6))), bank)

def test_anisotropic_init_spreads_proxies():
    cosine = pairwise_cosine(init_aap_anisotropic(24, 64, seed = 0))
    off = np.abs(cosine[~np.eye(24, dtype = bool)])

    assert off.max() < 0.999
    assert off.mean() < 0.5

def test_anisotropic_init_is_deterministic():
    first = init_aap_anisotropic(24, 64, seed = 7)

    np.testing.assert_array_equal(first, init_aap_anisotropic(24, 64, seed = 7))
    assert not np.array_equal(first, init_aap_anisotropic(24, 64, seed = 8))

def test_anisotropic_rows_have_unit_rms():
    rows = init_aap_anisotropic(6, 16, seed = 1)
    np.testing.assert_allclose(np.sqrt((rows ** 2).mean(axis = 1)), 1.0)

def test_anisotropic_init_needs_positive_sizes():
    with pytest.raises(ConfigError):
        init_aap_anisotropic(0, 16, seed = 0)

@pytest.mark.parametrize("order", double_norms)
def test_iap_weights_lie_on_the_simplex(order, float64, rng):
    bank = IapBank(8, 2, 5, rng, double_norm = order)
    weights = iap_weights(Tensor(rng.normal(size = (3, 6, 8))), bank).data

    assert weights.shape == (3, 2, 6, 5)
    assert (weights >= 0).all()

    axis = -2 if order == "prototypes-then-tokens" else -1
    np.testing.assert_allclose(weights.sum(axis = axis), 1.0)

def test_single_prototype_gives_one_code(float64, rng):
    bank = IapBank(8, 2, 1, rng)
    out = iap_forward(Tensor(rng.normal(size = (6, 8))), bank).data

    np.testing.assert_allclose(out, np.tile(out[0], (6, 1)), atol = 1e-12)

def test_iap_mixture_stays_in_the_prototype_hull(float64, rng):
    bank = IapBank(8, 2, 4, rng)
    mixture, _ = iap_mixture(Tensor(rng.normal(size = (9, 8))), bank)

    for head in range(2):
        system = np.vstack([bank.values.data[head].T, np.ones((1, 4))])

        for point in mixture.data[head]:
            target = np.append(point, 1.0)
            coefficients = np.linalg.lstsq(system, target, rcond = None)[0]

            assert (coefficients >= -1e-9).all()
            assert np.linalg.norm(system @ coefficients - target) <= 1e-5

def test_length_scale_sharpens_weights(float64, rng):
    tokens = Tensor(rng.normal(size = (12, 8)))
    scaled = IapBank(8, 2, 4, np.random.default_rng(1))
    flat = IapBank(8, 2, 4, np.random.default_rng(1), length_scale = False)

    spread = lambda bank: iap_weights(tokens, bank).data.std(axis = -1).mean()

    assert spread(scaled) > spread(flat)

def test_iap_mac_count_doubles_with_tokens(rng):
    bank = IapBank(16, 1, 4, rng)
    counts = []

    for length in (8, 16):
        with MacCounter() as counter:
            iap_forward(Tensor(rng.normal(size = (length, 16))), bank)

        counts.append(counter["attn"])

    assert counts == [2 * 8 * 4 * 16, 2 * 16 * 4 * 16]

def test_more_prototypes_than_tokens_warns(rng, caplog):
    bank = IapBank(8, 2, 10, rng, module_id = "stage2.iap")

    with caplog.at_level(logging.WARNING):
        iap_forward(Tensor(rng.normal(size = (3, 8))), bank)

    assert "stage2.iap" in caplog.text

@pytest.mark.parametrize("kwargs", [{"num_prototypes": 0}, {"double_norm": "softmax-twice"}])
def test_iap_bank_validation(kwargs, rng):
    settings = {"dim": 8, "heads": 2, "num_prototypes": 4, "rng": rng}
    settings.update(kwargs)

    with pytest.raises(ConfigError):
        IapBank(**settings)

def test_plain_softmax_weights_each_token_alone(float64, rng):
    bank = IapBank(8, 2, 4, rng, double_norm = "none")
    tokens = rng.normal(size = (6, 8))
    changed = tokens.copy()
    changed[5] = rng.normal(size = 8)

    before = iap_weights(Tensor(tokens), bank).data
    after = iap_weights(Tensor(changed), bank).data

    np.testing.assert_allclose(after[:, :5], before[:, :5], atol = 1e-12)

def test_token_axis_normalization_couples_tokens(float64, rng):
    bank = IapBank(8, 2, 4, rng)
    tokens = rng.normal(size = (6, 8))
    changed = tokens.copy()
    changed[5] = rng.normal(size = 8) * 3

    before = iap_weights(Tensor(tokens), bank).data
    after = iap_weights(Tensor(changed), bank).data

    assert not np.allclose(after[:, :5], before[:, :5])

@pytest.mark.parametrize("build, forward", [
    (lambda rng: AapBank(8, 2, 3, rng), aap_forward),
    (lambda rng: IapBank(8, 2, 4, rng), iap_forward)
])
def test_every_bank_parameter_learns(build, forward, float64, rng):
    bank = build(rng)
    out = forward(Tensor(rng.normal(size = (2, 6, 8))), bank)

    T.sum(out * Tensor(rng.normal(size = out.shape))).backward()

    for name, param in bank.parameters().items():
        assert param.grad is not None, name
        assert np.abs(param.grad).max() > 0, name
