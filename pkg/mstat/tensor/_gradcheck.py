import numpy as np

from mstat.tensor._tensor import Tensor, no_grad
from mstat.util.exceptions import UsageError

def _scalar(value):
    if isinstance(value, Tensor):
        return value.item()

    return float(value)

def finite_diff_grad(f, x, h = 1e-5, coords = None):
    """
    Central differences (f(x + h e) - f(x - h e)) / 2h for every element of ``x``.
    ``x`` is perturbed in place and restored, so ``f`` has to read ``x.data`` on each call

    :param f: deterministic scalar function of the current contents of ``x``
    :param x: tensor to differentiate against
    :param h: step
    :param coords: flat indices to evaluate, every element if None (the rest stay zero)

    :type f: callable
    :type x: Tensor
    :type h: float
    :type coords: iterable<int>

    :returns: numerical gradient with the shape of ``x``
    :rtype: Tensor
    """
    if h <= 0:
        raise UsageError(f"finite difference step must be positive, not {h}")

    flat = x.data.reshape(-1)
    grad = np.zeros(flat.shape, dtype = np.float64)
    coords = range(flat.size) if coords is None else coords

    with no_grad():
        for i in coords:
            original = flat[i]

            flat[i] = original + h
            upper = _scalar(f(x))

            flat[i] = original - h
            lower = _scalar(f(x))

            flat[i] = original
            grad[i] = (upper - lower) / (2 * h)

    return Tensor(grad.reshape(x.shape), dtype = x.data.dtype)

def relative_error(analytic, numeric, floor = 1e-6):
    """
    ||a - n|| / max(||a||, ||n||, floor), the floor keeps vanishing gradients from dividing by zero
    """
    analytic, numeric = np.asarray(analytic, dtype = np.float64), np.asarray(numeric, dtype = np.float64)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)

    return float(np.linalg.norm(analytic - numeric) / scale)

def check_gradients(loss_fn, params, h = 1e-5, samples = None, rng = None, floor = 1e-6):
    """
    Compare ``backward`` against central differences for every named parameter.

    :param loss_fn: builds a fresh scalar loss from the current parameter values
    :param params: tensors to check, by name
    :param h: finite difference step
    :param samples: coordinates checked per tensor, all of them if None
    :param rng: draws the sampled coordinates
    :param floor: see ``relative_error``

    :type loss_fn: callable
    :type params: dict<str, Tensor>
    :type h: float
    :type samples: int
    :type rng: numpy.random.Generator

    :returns: relative error by parameter name
    :rtype: dict<str, float>
    """
    for param in params.values():
        param.zero_grad()

    loss_fn().backward()

    errors = {}

    for name, param in params.items():
        analytic = param.grad if param.grad is not None else np.zeros_like(param.data)
        coords = np.arange(param.size)

        if samples is not None and samples < param.size:
            rng = rng if rng is not None else np.random.default_rng(0)
            coords = np.sort(rng.choice(param.size, size = samples, replace = False))

        numeric = finite_diff_grad(lambda _: loss_fn(), param, h = h, coords = coords)
        errors[name] = relative_error(analytic.reshape(-1)[coords], numeric.data.reshape(-1)[coords], floor = floor)

    return errors
