import math

import numpy as np

from mstat.tensor._tensor import Tensor, as_tensor
from mstat.tensor._counter import count_macs
from mstat.util.exceptions import DimensionError

# private helpers

def _unbroadcast(grad, shape):
    """
    Sum a gradient back down to the shape of an operand that numpy broadcast
    """
    if grad.shape == shape:
        return grad

    extra = grad.ndim - len(shape)

    if extra > 0:
        grad = grad.sum(axis = tuple(range(extra)))

    axes = tuple(i for i, extent in enumerate(shape) if extent == 1 and grad.shape[i] != 1)

    if axes:
        grad = grad.sum(axis = axes, keepdims = True)

    return grad.reshape(shape)

def _check_axis(axis, ndim, op):
    if not isinstance(axis, (int, np.integer)) or not -ndim <= axis < ndim:
        raise DimensionError(f"{op}: axis {axis} is invalid for a tensor of rank {ndim}")

    return int(axis) % ndim

def _pair(a, b, op):
    a = as_tensor(a, like = b if isinstance(b, Tensor) else None)
    b = as_tensor(b, like = a)

    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast")

    return a, b

def _expand(grad, shape, axis, keepdims):
    if axis is not None and not keepdims:
        grad = np.expand_dims(grad, axis)

    return np.broadcast_to(grad, shape).copy()

def _is_basic_index(index):
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(item, (slice, int, np.integer, type(None), type(Ellipsis))) for item in items)

# element-wise

def add(a, b):
    a, b = _pair(a, b, "add")

    def backward(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)

    return Tensor._result(a.data + b.data, (a, b), backward, "add")

def sub(a, b):
    a, b = _pair(a, b, "sub")

    def backward(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(-grad, b.shape)

    return Tensor._result(a.data - b.data, (a, b), backward, "sub")

def mul(a, b):
    a, b = _pair(a, b, "mul")

    def backward(grad):
        return _unbroadcast(grad * b.data, a.shape), _unbroadcast(grad * a.data, b.shape)

    return Tensor._result(a.data * b.data, (a, b), backward, "mul")

def div(a, b):
    a, b = _pair(a, b, "div")

    def backward(grad):
        return (
            _unbroadcast(grad / b.data, a.shape),
            _unbroadcast(-grad * a.data / (b.data * b.data), b.shape)
        )

    return Tensor._result(a.data / b.data, (a, b), backward, "div")

def neg(x):
    return Tensor._result(-x.data, (x,), lambda grad: (-grad,), "neg")

def exp(x):
    out = np.exp(x.data)
    return Tensor._result(out, (x,), lambda grad: (grad * out,), "exp")

def log(x):
    return Tensor._result(np.log(x.data), (x,), lambda grad: (grad / x.data,), "log")

def sqrt(x):
    out = np.sqrt(x.data)
    return Tensor._result(out, (x,), lambda grad: (grad / (2 * out),), "sqrt")

def relu(x):
    mask = x.data > 0
    return Tensor._result(np.where(mask, x.data, 0), (x,), lambda grad: (grad * mask,), "relu")

def clamp_min(x, floor):
    mask = x.data > floor
    return Tensor._result(np.maximum(x.data, floor), (x,), lambda grad: (grad * mask,), "clamp_min")

def gelu(x):
    c = math.sqrt(2 / math.pi)
    inner = c * (x.data + 0.044715 * x.data ** 3)
    t = np.tanh(inner)

    def backward(grad):
        slope = 0.5 * (1 + t) + 0.5 * x.data * (1 - t * t) * c * (1 + 3 * 0.044715 * x.data ** 2)
        return (grad * slope,)

    return Tensor._result(0.5 * x.data * (1 + t), (x,), backward, "gelu")

# products

def matmul(a, b, tag = "proj"):
    """
    Batched matrix product over the last two axes, leading axes broadcast.
    The multiply-accumulate count is reported to active ``MacCounter``s under ``tag``

    :param a: left operand, rank >= 2
    :param b: right operand, rank >= 2
    :param tag: counter bucket, ``attn`` or ``proj``

    :type a: Tensor
    :type b: Tensor
    :type tag: str

    :rtype: Tensor
    """
    a, b = as_tensor(a, like = b if isinstance(b, Tensor) else None), as_tensor(b, like = a)

    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")

    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")

    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise DimensionError(f"matmul batch dimensions do not broadcast: {a.shape} @ {b.shape}")

    count_macs(tag, out.size * a.shape[-1])

    def backward(grad):
        grad_a = grad_b = None

        if a.requires_grad:
            grad_a = _unbroadcast(np.matmul(grad, np.swapaxes(b.data, -1, -2)), a.shape)

        if b.requires_grad:
            grad_b = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), grad), b.shape)

        return grad_a, grad_b

    return Tensor._result(out, (a, b), backward, "matmul")

# reductions

def sum(x, axis = None, keepdims = False):
    if axis is not None:
        axis = _check_axis(axis, x.ndim, "sum")

    def backward(grad):
        return (_expand(grad, x.shape, axis, keepdims),)

    return Tensor._result(np.sum(x.data, axis = axis, keepdims = keepdims), (x,), backward, "sum")

def mean(x, axis = None, keepdims = False):
    count = x.size if axis is None else x.shape[_check_axis(axis, x.ndim, "mean")]
    return div(sum(x, axis = axis, keepdims = keepdims), float(count))

def _extreme(x, axis, keepdims, pick, op):
    axis = _check_axis(axis, x.ndim, op)
    index = np.expand_dims(pick(x.data, axis = axis), axis)
    out = np.take_along_axis(x.data, index, axis = axis)

    def backward(grad):
        full = np.zeros_like(x.data)
        grad = grad if keepdims else np.expand_dims(grad, axis)
        np.put_along_axis(full, index, grad, axis = axis)
        return (full,)

    return Tensor._result(out if keepdims else np.squeeze(out, axis), (x,), backward, op)

def max_axis(x, axis, keepdims = False):
    """
    Maximum along ``axis``, the gradient goes to the first maximal entry
    """
    return _extreme(x, axis, keepdims, np.argmax, "max_axis")

def min_axis(x, axis, keepdims = False):
    return _extreme(x, axis, keepdims, np.argmin, "min_axis")

# shape

def reshape(x, shape):
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"cannot reshape {x.shape} into {shape}")

    return Tensor._result(out, (x,), lambda grad: (grad.reshape(x.shape),), "reshape")

def transpose(x, axes):
    axes = tuple(_check_axis(axis, x.ndim, "transpose") for axis in axes)

    if sorted(axes) != list(range(x.ndim)):
        raise DimensionError(f"transpose axes {axes} are not a permutation of rank {x.ndim}")

    inverse = tuple(np.argsort(axes))
    return Tensor._result(np.transpose(x.data, axes), (x,), lambda grad: (np.transpose(grad, inverse),), "transpose")

def swapaxes(x, first, second):
    axes = list(range(x.ndim))
    first, second = _check_axis(first, x.ndim, "swapaxes"), _check_axis(second, x.ndim, "swapaxes")
    axes[first], axes[second] = axes[second], axes[first]

    return transpose(x, axes)

def concat(tensors, axis):
    tensors = [as_tensor(tensor) for tensor in tensors]
    axis = _check_axis(axis, tensors[0].ndim, "concat")

    try:
        out = np.concatenate([tensor.data for tensor in tensors], axis = axis)
    except ValueError:
        raise DimensionError(f"concat: shapes {[tensor.shape for tensor in tensors]} disagree off axis {axis}")

    bounds = np.cumsum([tensor.shape[axis] for tensor in tensors])[:-1]

    def backward(grad):
        return tuple(np.split(grad, bounds, axis = axis))

    return Tensor._result(out, tensors, backward, "concat")

def stack(tensors, axis = 0):
    tensors = [as_tensor(tensor) for tensor in tensors]

    try:
        out = np.stack([tensor.data for tensor in tensors], axis = axis)
    except ValueError:
        raise DimensionError(f"stack: shapes {[tensor.shape for tensor in tensors]} differ")

    axis = _check_axis(axis, out.ndim, "stack")

    def backward(grad):
        return tuple(np.take(grad, i, axis = axis) for i in range(len(tensors)))

    return Tensor._result(out, tensors, backward, "stack")

def getitem(x, index):
    if isinstance(index, Tensor):
        index = index.data.astype(np.int64)

    try:
        out = x.data[index]
    except IndexError as error:
        raise DimensionError(f"index out of range for shape {x.shape}: {error}")

    basic = _is_basic_index(index)

    def backward(grad):
        full = np.zeros_like(x.data)

        if basic:
            full[index] = grad
        else:
            np.add.at(full, index, grad)

        return (full,)

    return Tensor._result(np.array(out, copy = True), (x,), backward, "getitem")

def take(x, indices, axis = 0):
    axis = _check_axis(axis, x.ndim, "take")
    index = (slice(None),) * axis + (np.asarray(indices, dtype = np.int64),)

    return getitem(x, index)

# normalizations

def _softmax_backward(out, grad, axis):
    return out * (grad - np.sum(grad * out, axis = axis, keepdims = True))

def softmax_axis(x, axis):
    """
    exp(x - max) / sum(exp(x - max)) along ``axis``, every slice along it sums to one
    """
    axis = _check_axis(axis, x.ndim, "softmax_axis")
    shifted = np.exp(x.data - x.data.max(axis = axis, keepdims = True))
    out = shifted / shifted.sum(axis = axis, keepdims = True)

    return Tensor._result(out, (x,), lambda grad: (_softmax_backward(out, grad, axis),), "softmax_axis")

def log_softmax_axis(x, axis):
    axis = _check_axis(axis, x.ndim, "log_softmax_axis")
    shifted = x.data - x.data.max(axis = axis, keepdims = True)
    out = shifted - np.log(np.exp(shifted).sum(axis = axis, keepdims = True))

    def backward(grad):
        return (grad - np.exp(out) * grad.sum(axis = axis, keepdims = True),)

    return Tensor._result(out, (x,), backward, "log_softmax_axis")

def l1_normalize_axis(x, axis, eps = 1e-6):
    """
    x / (sum |x| + eps) along ``axis``. ``eps`` keeps all-zero slices at zero
    """
    axis = _check_axis(axis, x.ndim, "l1_normalize_axis")
    norm = np.abs(x.data).sum(axis = axis, keepdims = True) + eps
    out = x.data / norm

    def backward(grad):
        inner = np.sum(grad * x.data, axis = axis, keepdims = True)
        return (grad / norm - np.sign(x.data) * inner / (norm * norm),)

    return Tensor._result(out, (x,), backward, "l1_normalize_axis")

def layer_norm(x, gain = None, bias = None, eps = 1e-5):
    """
    Normalize every token over the last (embedding) axis then apply ``gain`` and ``bias``

    :param x: tokens, embedding on the last axis
    :param gain: per-channel scale, ones if None
    :param bias: per-channel shift, zeros if None
    :param eps: variance floor

    :type x: Tensor
    :type gain: Tensor
    :type bias: Tensor
    :type eps: float

    :rtype: Tensor
    """
    centred = x.data - x.data.mean(axis = -1, keepdims = True)
    inverse = 1 / np.sqrt((centred * centred).mean(axis = -1, keepdims = True) + eps)
    normed = centred * inverse

    out = normed
    parents = [x]

    if gain is not None:
        out = out * gain.data
        parents.append(gain)

    if bias is not None:
        out = out + bias.data
        parents.append(bias)

    lead = tuple(range(x.ndim - 1))

    def backward(grad):
        scaled = grad * gain.data if gain is not None else grad
        grads = [inverse * (
            scaled
            - scaled.mean(axis = -1, keepdims = True)
            - normed * (scaled * normed).mean(axis = -1, keepdims = True)
        )]

        if gain is not None:
            grads.append((grad * normed).sum(axis = lead))

        if bias is not None:
            grads.append(grad.sum(axis = lead))

        return tuple(grads)

    return Tensor._result(out, parents, backward, "layer_norm")

# operator overloads

def _reflected(op):
    return lambda self, other: op(other, self)

Tensor.__add__ = add
Tensor.__radd__ = _reflected(add)
Tensor.__sub__ = sub
Tensor.__rsub__ = _reflected(sub)
Tensor.__mul__ = mul
Tensor.__rmul__ = _reflected(mul)
Tensor.__truediv__ = div
Tensor.__rtruediv__ = _reflected(div)
Tensor.__neg__ = neg
Tensor.__matmul__ = matmul
Tensor.__getitem__ = getitem

Tensor.sum = sum
Tensor.mean = mean
Tensor.exp = exp
Tensor.log = log
Tensor.sqrt = sqrt
Tensor.relu = relu
Tensor.reshape = lambda self, *shape: reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)
Tensor.transpose = transpose
Tensor.swapaxes = swapaxes
