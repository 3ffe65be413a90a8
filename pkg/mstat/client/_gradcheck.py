import logging

from dataclasses import dataclass, field

import numpy as np

from mstat import tensor as T
from mstat.tensor import parameter, precision, check_gradients
from mstat.layers import (
    AttentionParams, TokenSeq, StaBlock, AStaBlock, AapBank, IapBank, double_norms,
    self_attention, temporal_attention, spatial_attention, sta_block, a_sta_block, aap_forward, iap_forward
)
from mstat.model import ModelConfig, MstatModel
from mstat.objectives import LossConfig, ce_label_smoothing, batch_hard_triplet, multi_head_loss
from mstat.util.exceptions import ConfigError

logger = logging.getLogger(__name__)

tolerance = 1e-4

@dataclass
class GradcheckResult:
    scope: str
    case: str
    seed: int
    max_error: float
    passed: bool
    errors: dict = field(default_factory = dict, repr = False)

    def record(self):
        return {"scope": self.scope, "case": self.case, "seed": self.seed, "max_error": self.max_error, "passed": self.passed}

def _leaf(rng, *shape):
    return parameter(rng.normal(size = shape))

def _projected(forward, rng):
    """
    Reduce ``forward()`` to a scalar through fixed random weights, so every output element contributes
    """
    weights = rng.normal(size = forward().shape)
    return lambda: T.sum(forward() * weights)

# tensor core

def _tensor_cases(rng):
    x, y = _leaf(rng, 3, 4), _leaf(rng, 3, 4)
    w = _leaf(rng, 4, 5)
    gain, bias = _leaf(rng, 4), _leaf(rng, 4)

    yield "elementwise", _projected(
        lambda: x * y - x / (y * y + 1) + T.exp(x * 0.3) + T.log(x * x + 1) + T.sqrt(y * y + 1) - T.neg(y), rng
    ), {"x": x, "y": y}

    yield "activations", _projected(lambda: T.gelu(x) + T.relu(y) + T.clamp_min(x, -0.5), rng), {"x": x, "y": y}
    yield "matmul", _projected(lambda: T.matmul(x, w), rng), {"x": x, "w": w}

    yield "reductions", _projected(
        lambda: T.concat([T.sum(x, axis = 1), T.mean(x, axis = 1), T.max_axis(y, 1), T.min_axis(y, 1)], axis = 0), rng
    ), {"x": x, "y": y}

    yield "shapes", _projected(
        lambda: T.concat([
            T.reshape(T.transpose(T.stack([x, y], axis = 0), (0, 2, 1)), (8, 3)),
            T.swapaxes(T.getitem(T.stack([x, y]), (slice(None), slice(0, 2))), 0, 1).reshape(4, 4)[:, :3],
            T.take(y, [3, 0], axis = 1).reshape(2, 3)
        ], axis = 0), rng
    ), {"x": x, "y": y}

    yield "normalizations", _projected(
        lambda: T.softmax_axis(x, 1) + T.log_softmax_axis(y, 0) + T.l1_normalize_axis(x, 1), rng
    ), {"x": x, "y": y}

    yield "layer_norm", _projected(lambda: T.layer_norm(x, gain, bias), rng), {"x": x, "gain": gain, "bias": bias}

# attention

def _attention_cases(rng):
    params = AttentionParams(8, 2, rng, module_id = "gradcheck")
    tokens = _leaf(rng, 2, 3, 4, 8)
    copies = _leaf(rng, 2, 3, 8)

    weights = {**params.parameters(), "tokens": tokens}

    yield "self_attention", _projected(lambda: self_attention(tokens, params), rng), weights
    yield "temporal", _projected(lambda: temporal_attention(TokenSeq(tokens), params).tokens, rng), weights

    def spatial():
        out = spatial_attention(TokenSeq(tokens, frame_class = copies), params)
        return T.concat([T.reshape(out.tokens, (2, 3, 32)), out.frame_class], axis = -1)

    yield "spatial_with_class", _projected(spatial, rng), {**weights, "copies": copies}

# sta

def _block_forward(block, apply, tokens, class_token):
    def forward():
        out = apply(TokenSeq(tokens, class_token = class_token), block)
        return T.concat([T.reshape(out.tokens, (out.tokens.shape[0], -1)), out.class_token], axis = -1)

    return forward

def _sta_cases(rng):
    tokens, class_token = _leaf(rng, 2, 3, 4, 6), _leaf(rng, 2, 6)
    inputs = {"tokens": tokens, "class_token": class_token}

    for name, block, apply in (
        ("sta", StaBlock(6, 2, rng, module_id = "gradcheck"), sta_block),
        ("sta_mlp", StaBlock(6, 2, rng, mlp = True, module_id = "gradcheck"), sta_block),
        ("a_sta", AStaBlock(6, 2, 4, 2, rng, module_id = "gradcheck"), a_sta_block)
    ):
        yield name, _projected(_block_forward(block, apply, tokens, class_token), rng), {**block.parameters(), **inputs}

# proxy

def _proxy_cases(rng):
    tokens = _leaf(rng, 2, 5, 6)
    aap = AapBank(6, 2, 3, rng, module_id = "gradcheck")

    yield "aap", _projected(lambda: aap_forward(tokens, aap), rng), {**aap.parameters(), "tokens": tokens}

    for order in double_norms:
        for length_scale in (True, False):
            iap = IapBank(6, 2, 3, rng, double_norm = order, length_scale = length_scale, module_id = "gradcheck")
            suffix = "" if length_scale else "_unscaled"

            yield f"iap_{order}{suffix}", _projected(lambda iap = iap: iap_forward(tokens, iap), rng), {**iap.parameters(), "tokens": tokens}

# objectives

def _objective_cases(rng):
    logits, embeddings = _leaf(rng, 4, 3), _leaf(rng, 6, 5)

    for variant in ("others", "uniform"):
        yield f"cross_entropy_{variant}", lambda variant = variant: ce_label_smoothing(logits, np.array([0, 1, 2, 1]), 0.1, variant), {"logits": logits}

    yield "batch_hard_triplet", lambda: batch_hard_triplet(embeddings, np.array([0, 0, 1, 1, 2, 2]), 0.3), {"embeddings": embeddings}

# model

def tiny_model_config(**overrides):
    """
    4x4 frames in 2px patches, two frames: T = 2, N = 4, d = 12
    """
    settings = {
        "frame_height_px"   : 4,
        "frame_width_px"    : 4,
        "patch_px"          : 2,
        "frames_train"      : 2,
        "frames_test"       : 2,
        "heads"             : 2,
        "depth_stage1"      : 1,
        "depth_stage2"      : 1,
        "depth_stage3"      : 1,
        "aap_proxies"       : 2,
        "asta_proxies"      : 2,
        "iap_prototypes"    : 3,
        "tps_probability"   : 0.0,
        "tps_positions"     : 1
    }

    settings.update(overrides)
    return ModelConfig(**settings)

def _model_cases(rng):
    model = MstatModel(tiny_model_config(), 2, rng)
    video = rng.normal(size = (4, 2, 3, 4, 4))
    labels = np.array([0, 0, 1, 1])

    yield "total_loss", lambda: multi_head_loss(model.forward(video), labels, LossConfig()).total, model.parameters()

suites = {
    "tensor"        : _tensor_cases,
    "attention"     : _attention_cases,
    "sta"           : _sta_cases,
    "proxy"         : _proxy_cases,
    "objectives"    : _objective_cases,
    "model"         : _model_cases
}

def run_gradcheck(scopes = None, seeds = (0, 1, 2, 3, 4), samples = 8, limit = tolerance):
    """
    Compare analytic gradients with central differences in 64-bit precision

    :param scopes: suite names, every suite if None
    :param seeds: each suite is built and checked once per seed
    :param samples: coordinates checked per parameter tensor
    :param limit: largest accepted relative error

    :type scopes: list<str>
    :type seeds: tuple<int>
    :type samples: int
    :type limit: float

    :returns: one result per case and seed
    :rtype: list<GradcheckResult>
    """
    scopes = list(suites) if not scopes else list(scopes)
    unknown = [scope for scope in scopes if scope not in suites]

    if unknown:
        raise ConfigError(f"unknown gradcheck scope {', '.join(unknown)}, expected any of {', '.join(suites)}")

    results = []

    with precision("float64"):
        for scope in scopes:
            for seed in seeds:
                rng = np.random.default_rng(seed)

                for case, loss_fn, params in suites[scope](rng):
                    errors = check_gradients(loss_fn, params, samples = samples, rng = np.random.default_rng(seed))
                    worst = max(errors.values()) if errors else 0.0
                    result = GradcheckResult(scope, case, seed, worst, worst <= limit, errors)

                    if result.passed:
                        logger.debug(f"gradcheck {scope}/{case} seed {seed}: {worst:.2e}")
                    else:
                        name = max(errors, key = errors.get)
                        logger.error(f"gradcheck {scope}/{case} seed {seed}: {name} off by {worst:.2e}")

                    results.append(result)

    return results
