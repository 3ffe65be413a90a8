import math

import numpy as np

from mstat.tensor import Tensor, parameter, matmul, reshape, layer_norm, gelu
from mstat.util.exceptions import ConfigError, DimensionError

def xavier(rng, fan_in, fan_out, shape = None):
    bound = math.sqrt(6 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size = shape if shape else (fan_in, fan_out))

class ParamMixin:
    """
    Mixin class for everything that owns learnable tensors.
    Parameters are found by walking attributes in assignment order, through nested mixins and lists,
    so names are stable dotted paths such as ``stage1.0.temporal.w_q``

    :param module_id: name attention maps of this module are recorded under

    :type module_id: str
    """
    def __init__(self, module_id = ""):
        self.module_id = module_id

    def named_parameters(self, prefix = ""):
        for name, value in vars(self).items():
            yield from _walk(value, f"{prefix}{name}")

    def parameters(self):
        return dict(self.named_parameters())

    def state_dict(self):
        return {name: tensor.data for name, tensor in self.named_parameters()}

    def load_state_dict(self, state, strict = True):
        """
        Copy arrays into the matching parameters, casting to each parameter's precision

        :param state: arrays by parameter name
        :param strict: raise on missing or unexpected names

        :type state: dict<str, numpy.ndarray>
        :type strict: bool
        """
        own = self.parameters()

        if strict:
            missing = sorted(set(own) - set(state))
            unexpected = sorted(set(state) - set(own))

            if missing or unexpected:
                raise ConfigError(f"state mismatch, missing {missing[:5]}, unexpected {unexpected[:5]}")

        for name, array in state.items():
            if name not in own:
                continue

            if tuple(array.shape) != own[name].shape:
                raise DimensionError(f"{name}: stored shape {tuple(array.shape)} != {own[name].shape}")

            own[name].data = np.ascontiguousarray(array, dtype = own[name].data.dtype)

        return self

    def parameter_count(self):
        return sum(tensor.size for _, tensor in self.named_parameters())

def _walk(value, name):
    if isinstance(value, Tensor):
        if value.requires_grad:
            yield name, value

    elif isinstance(value, ParamMixin):
        yield from value.named_parameters(prefix = f"{name}.")

    elif isinstance(value, (list, tuple)):
        for index, item in enumerate(value):
            yield from _walk(item, f"{name}.{index}")

class Linear(ParamMixin):
    """
    x @ weight + bias over the last axis

    :param fan_in: input width
    :param fan_out: output width
    :param rng: initializer stream
    :param bias: learn a bias

    :type fan_in: int
    :type fan_out: int
    :type rng: numpy.random.Generator
    :type bias: bool
    """
    def __init__(self, fan_in, fan_out, rng, bias = True, module_id = ""):
        super().__init__(module_id)
        self.weight = parameter(xavier(rng, fan_in, fan_out))
        self.bias = parameter(np.zeros(fan_out)) if bias else None

    def __call__(self, x, tag = "proj"):
        if x.ndim == 1:
            return reshape(self(reshape(x, (1, x.shape[0])), tag = tag), (-1,))

        out = matmul(x, self.weight, tag = tag)
        return out + self.bias if self.bias is not None else out

class LayerNormParams(ParamMixin):
    def __init__(self, dim, eps = 1e-5, module_id = ""):
        super().__init__(module_id)
        self.gain = parameter(np.ones(dim))
        self.bias = parameter(np.zeros(dim))
        self.eps = eps

    def __call__(self, x):
        return layer_norm(x, self.gain, self.bias, eps = self.eps)

class Mlp(ParamMixin):
    def __init__(self, dim, hidden, rng, module_id = ""):
        super().__init__(module_id)
        self.norm = LayerNormParams(dim)
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)

    def __call__(self, x):
        return self.fc2(gelu(self.fc1(self.norm(x))))
