import numpy as np

from dataclasses import dataclass

from mstat.util.exceptions import ConfigError, DimensionError

@dataclass(frozen = True)
class StepSchedule:
    """
    lr(epoch) = lr0 * factor ** floor((epoch - 1) / period) for epochs counted from 1
    """
    lr0: float = 1e-3
    factor: float = 0.75
    period: int = 25

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ConfigError(f"lr0 must be > 0, not {self.lr0}")

        if self.factor <= 0:
            raise ConfigError(f"decay factor must be > 0, not {self.factor}")

        if self.period < 1:
            raise ConfigError(f"decay period must be >= 1 epoch, not {self.period}")

    def __call__(self, epoch):
        if epoch < 1:
            raise ConfigError(f"epochs count from 1, got {epoch}")

        return self.lr0 * self.factor ** ((epoch - 1) // self.period)

class Sgd:
    """
    SGD with (Nesterov) momentum. Weight decay is added to the gradient before the momentum update.
    With ``max_grad_norm`` set, the gradients of all parameters are first rescaled together so
    their global L2 norm does not exceed it

    :param params: tensors to update, by name
    :param lr: step size, usually set each epoch from a ``StepSchedule``
    :param momentum: mu
    :param weight_decay: L2 coefficient
    :param nesterov: look-ahead form
    :param max_grad_norm: global gradient norm bound, 0 to leave gradients as they are

    :type params: dict<str, Tensor>
    :type lr: float
    :type momentum: float
    :type weight_decay: float
    :type nesterov: bool
    :type max_grad_norm: float
    """
    def __init__(self, params, lr = 1e-3, momentum = 0.9, weight_decay = 5e-5, nesterov = True, max_grad_norm = 0.0):
        if not 0 <= momentum < 1:
            raise ConfigError(f"momentum must lie in [0, 1), not {momentum}")

        if weight_decay < 0:
            raise ConfigError(f"weight decay must be >= 0, not {weight_decay}")

        if max_grad_norm < 0:
            raise ConfigError(f"max_grad_norm must be >= 0, not {max_grad_norm}")

        self.params = dict(params)
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.nesterov = nesterov
        self.max_grad_norm = max_grad_norm

        self.buffers = {name: np.zeros_like(param.data) for name, param in self.params.items()}

    def zero_grad(self):
        for param in self.params.values():
            param.zero_grad()

    def grad_norm(self):
        """
        :returns: L2 norm of every present gradient taken together
        :rtype: float
        """
        return float(np.sqrt(sum(np.sum(np.square(param.grad, dtype = np.float64)) for param in self.params.values() if param.grad is not None)))

    def step(self):
        """
        :returns: global gradient norm before clipping
        :rtype: float
        """
        norm = self.grad_norm()
        scale = self.max_grad_norm / norm if self.max_grad_norm and norm > self.max_grad_norm else 1.0

        for name, param in self.params.items():
            if param.grad is None:
                continue

            grad = param.grad * scale + self.weight_decay * param.data
            buffer = self.buffers[name]

            buffer *= self.momentum
            buffer += grad

            update = grad + self.momentum * buffer if self.nesterov else buffer
            param.data -= (self.lr * update).astype(param.data.dtype)

        return norm

    def state_dict(self):
        return {f"momentum.{name}": buffer for name, buffer in self.buffers.items()}

    def load_state_dict(self, state):
        for name in self.buffers:
            key = f"momentum.{name}"

            if key not in state:
                raise ConfigError(f"optimizer state lacks {key}")

            if state[key].shape != self.buffers[name].shape:
                raise DimensionError(f"{key}: stored shape {state[key].shape} != {self.buffers[name].shape}")

            self.buffers[name] = np.array(state[key], dtype = self.buffers[name].dtype)

        return self
