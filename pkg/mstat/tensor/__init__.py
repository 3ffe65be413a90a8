from mstat.tensor._tensor import Tensor, GradTape, parameter, as_tensor, precision, get_precision, no_grad, grad_enabled
from mstat.tensor._ops import (
    add, sub, mul, div, neg, exp, log, sqrt, relu, clamp_min, gelu,
    matmul, sum, mean, max_axis, min_axis,
    reshape, transpose, swapaxes, concat, stack, getitem, take,
    softmax_axis, log_softmax_axis, l1_normalize_axis, layer_norm
)
from mstat.tensor._counter import MacCounter, AttentionRecorder, count_macs, record_attention
from mstat.tensor._gradcheck import finite_diff_grad, relative_error, check_gradients
from mstat.tensor._io import write_tensor, read_tensor, save_tensor, load_tensor, save_tensors, load_tensors

def backward(loss):
    """
    Populate ``grad`` on every tensor ``loss`` depends on, see ``Tensor.backward``
    """
    return loss.backward()
