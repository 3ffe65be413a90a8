import threading

from contextlib import contextmanager

import numpy as np

from mstat.util.exceptions import NonFiniteError, UsageError, ConfigError

_local = threading.local()

precisions = {
    "float32"   : np.float32,
    "float64"   : np.float64
}

def get_precision():
    """
    :returns: dtype new leaf tensors are created with on this thread
    :rtype: numpy.dtype
    """
    return getattr(_local, "dtype", np.float32)

@contextmanager
def precision(dtype):
    """
    Create leaf tensors with ``dtype`` inside the block.
    32 bit is the training default, 64 bit is what gradient checks run in

    :param dtype: ``"float32"``, ``"float64"`` or the numpy type

    :type dtype: str or numpy.dtype
    """
    if isinstance(dtype, str):
        if dtype not in precisions:
            raise ConfigError(f"precision must be one of {', '.join(precisions)}, not {dtype}")

        dtype = precisions[dtype]

    previous = get_precision()
    _local.dtype = np.dtype(dtype).type

    try:
        yield _local.dtype
    finally:
        _local.dtype = previous

def grad_enabled():
    return getattr(_local, "grad", True)

@contextmanager
def no_grad():
    """
    Build no tape inside the block. Used by the eval path and by finite differences
    """
    previous = grad_enabled()
    _local.grad = False

    try:
        yield
    finally:
        _local.grad = previous

class Tensor:
    """
    Dense n-dimensional array taking part in reverse-mode differentiation.

    :param data: anything numpy can turn into an array
    :param requires_grad: record operations on this tensor so ``backward`` reaches it
    :param dtype: buffer precision, the thread's current precision if None

    :type data: array_like
    :type requires_grad: bool
    :type dtype: numpy.dtype
    """
    __array_priority__ = 100

    def __init__(self, data, requires_grad = False, dtype = None):
        dtype = dtype if dtype else get_precision()

        self.data = np.ascontiguousarray(data, dtype = dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.op = None

        self._parents = ()
        self._backward = None

        if not np.isfinite(self.data).all():
            raise NonFiniteError("tensor created with non-finite values")

    def __repr__(self):
        flag = ", requires_grad" if self.requires_grad else ""
        return f"Tensor(shape = {self.shape}, dtype = {self.data.dtype.name}{flag})"

    def __len__(self):
        return self.shape[0]

    @classmethod
    def _result(cls, data, parents, backward, op):
        """
        Wrap the output of a primitive. The tape link is only kept when a parent
        needs a gradient and grad mode is on
        """
        result = cls.__new__(cls)
        result.data = np.ascontiguousarray(data)
        result.grad = None
        result.op = op

        if not np.isfinite(result.data).all():
            raise NonFiniteError(f"{op} produced non-finite values")

        tracked = grad_enabled() and any(parent.requires_grad for parent in parents)

        result.requires_grad = tracked
        result._parents = tuple(parents) if tracked else ()
        result._backward = backward if tracked else None

        return result

    # public properties

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self):
        return not self._parents

    # public methods

    def numpy(self):
        return self.data.copy()

    def item(self):
        if self.data.size != 1:
            raise UsageError(f"item() needs a single element, tensor has shape {self.shape}")

        return float(self.data.reshape(-1)[0])

    def detach(self):
        return Tensor(self.data, dtype = self.data.dtype)

    def zero_grad(self):
        self.grad = None
        return self

    def backward(self):
        """
        Populate ``grad`` on every tensor this scalar depends on that requires one.
        Leaf gradients accumulate across calls, see ``zero_grad``

        :returns: the tape that was replayed
        :rtype: GradTape
        """
        if self.data.size != 1:
            raise UsageError(f"backward needs a scalar loss, got shape {self.shape}")

        if not self.requires_grad:
            raise UsageError("loss does not depend on any tensor that requires grad")

        tape = GradTape.record(self)
        tape.replay(self)

        return tape

class GradTape:
    """
    Ordered record of the primitive applications a tensor depends on.
    ``nodes`` is topological: every tensor appears after all of its parents

    :param nodes: tensors in topological order

    :type nodes: list<Tensor>
    """
    def __init__(self, nodes):
        self.nodes = nodes

    def __len__(self):
        return len(self.nodes)

    @classmethod
    def record(cls, output):
        order = []
        visited = set()
        stack = [(output, False)]

        # iterative post-order, the graphs of a full model are deeper than the recursion limit
        while stack:
            node, expanded = stack.pop()

            if expanded:
                order.append(node)
                continue

            if id(node) in visited:
                continue

            visited.add(id(node))
            stack.append((node, True))

            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))

        return cls(order)

    def replay(self, output):
        """
        Walk the record backwards from ``output``, each node's gradient is complete
        when it is reached and is handed to its parents exactly once
        """
        pending = {id(output): np.ones_like(output.data)}

        for node in reversed(self.nodes):
            grad = pending.pop(id(node), None)

            if grad is None:
                continue

            if node.is_leaf:
                node.grad = grad if node.grad is None else node.grad + grad
                continue

            node.grad = grad

            for parent, parent_grad in zip(node._parents, node._backward(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue

                key = id(parent)

                if key in pending:
                    pending[key] = pending[key] + parent_grad
                else:
                    pending[key] = parent_grad

        return self

def parameter(data, dtype = None):
    """
    :returns: a leaf tensor that requires grad
    :rtype: Tensor
    """
    return Tensor(data, requires_grad = True, dtype = dtype)

def as_tensor(value, like = None):
    if isinstance(value, Tensor):
        return value

    dtype = like.data.dtype if like is not None else None
    return Tensor(value, dtype = dtype)
