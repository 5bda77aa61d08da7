"""Dense float64 tensor with a recorded computation tape.

Ops append nodes to the active tape as they execute, so the tape is
topologically ordered by construction; backward() walks it once in
reverse, accumulating vector-Jacobian products. Leaf tensors (created
directly, typically parameters) collect gradients in .grad.
"""

import numpy as np

from ..errors import ShapeError

_TAPE_STACK = []


class Tensor:
    """Row-major float64 array, optionally tracked for differentiation."""

    __slots__ = ("data", "requires_grad", "grad", "_node")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._node = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def is_leaf(self):
        return self._node is None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


class _Node:
    __slots__ = ("out", "inputs", "vjp")

    def __init__(self, out, inputs, vjp):
        self.out = out
        self.inputs = inputs
        self.vjp = vjp


class Tape:
    """Ordered record of primitive applications for one forward pass."""

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def backward(self, loss, seed=None):
        """Accumulate d(loss)/d(leaf) into .grad of recorded leaf tensors.

        loss must be a tensor produced under this tape (or a leaf). The
        seed defaults to ones, i.e. gradient of the sum of loss entries.
        """
        if seed is None:
            seed = np.ones_like(loss.data)
        grads = {id(loss): np.asarray(seed, dtype=np.float64)}
        holders = {id(loss): loss}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.out), None)
            holders.pop(id(node.out), None)
            if g is None:
                continue
            for inp, gin in zip(node.inputs, node.vjp(g)):
                if gin is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gin
                else:
                    grads[key] = gin
                    holders[key] = inp
        for key, t in holders.items():
            if t.is_leaf() and t.requires_grad:
                g = grads[key]
                t.grad = g.copy() if t.grad is None else t.grad + g


def active_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def record(out, inputs, vjp):
    """Attach a tape node for out if recording is active and useful."""
    tape = active_tape()
    if tape is None or not out.requires_grad:
        return out
    node = _Node(out, tuple(inputs), vjp)
    out._node = node
    tape.nodes.append(node)
    return out


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)
