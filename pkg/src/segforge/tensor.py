"""Dense tensors over contiguous numpy buffers plus a reverse-mode tape.

Tensors are immutable after creation except for gradient accumulation and
the optimizer's explicit in-place update (and batch-norm running buffers,
which are documented exceptions). The tape is a flat list of nodes in
execution order; backward replays the reachable suffix in reverse.
"""

from __future__ import annotations

import contextlib
import threading

import numpy as np

from .errors import GraphError, NumericalError, ShapeError

_DEFAULT_DTYPE = np.float32
_DEBUG_CHECKS = False


def set_default_dtype(dtype) -> None:
    """Set the dtype new tensors/parameters are created with (f32 or f64)."""
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ShapeError(f"unsupported default dtype {dtype}")
    _DEFAULT_DTYPE = dtype.type


def get_default_dtype():
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def default_dtype(dtype):
    """Temporarily switch the default dtype (64-bit for gradient checks)."""
    prev = get_default_dtype()
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(prev)


def set_debug_checks(enabled: bool) -> None:
    """Enable per-op output validation; non-finite results raise."""
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = bool(enabled)


def debug_checks_enabled() -> bool:
    return _DEBUG_CHECKS


class TapeNode:
    """One recorded op: inputs, saved activations, and a backward rule."""

    __slots__ = ("op", "inputs", "saved", "backward_fn", "output", "consumed")

    def __init__(self, op, inputs, saved, backward_fn, output):
        self.op = op
        self.inputs = inputs
        self.saved = saved
        self.backward_fn = backward_fn
        self.output = output
        self.consumed = False


class _Tape(threading.local):
    """Per-thread tape: evaluation workers never touch the training graph."""

    def __init__(self):
        self.nodes: list[TapeNode] = []
        self.enabled = True


TAPE = _Tape()


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (inference / plain numerics)."""
    prev = TAPE.enabled
    TAPE.enabled = False
    try:
        yield
    finally:
        TAPE.enabled = prev


def grad_enabled() -> bool:
    return TAPE.enabled


def reset_tape() -> None:
    """Drop all recorded nodes (start of a fresh training step)."""
    TAPE.nodes.clear()


class Tensor:
    """N-dimensional float array with optional gradient tracking."""

    __slots__ = ("data", "requires_grad", "grad", "node")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if dtype is None:
            arr = np.asarray(data)
            if arr.dtype not in (np.float32, np.float64):
                arr = arr.astype(get_default_dtype())
        else:
            arr = np.asarray(data, dtype=dtype)
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.node = None

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

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(())[()])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise ShapeError(
                f"gradient shape {g.shape} does not match tensor shape {self.data.shape}"
            )
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def needs_grad(self) -> bool:
        return self.requires_grad or self.node is not None

    def backward(self) -> None:
        backward(self)

    def __repr__(self):
        flags = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={tuple(self.shape)}, dtype={self.data.dtype}{flags})"


class Parameter(Tensor):
    """Trainable tensor with a hierarchical name assigned by its owner."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = "", dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name


def record(op: str, inputs, output: Tensor, saved, backward_fn) -> Tensor:
    """Append a tape node if recording is on and any input tracks gradients."""
    if debug_checks_enabled() and not np.all(np.isfinite(output.data)):
        raise NumericalError(f"non-finite values in output of op '{op}'")
    if not TAPE.enabled:
        return output
    tensor_inputs = [t for t in inputs if isinstance(t, Tensor)]
    if not any(t.needs_grad() for t in tensor_inputs):
        return output
    node = TapeNode(op, tensor_inputs, saved, backward_fn, output)
    output.node = node
    TAPE.nodes.append(node)
    return output


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into .grad of every reachable leaf tensor.

    Repeated calls on fresh graphs accumulate; saved activations of consumed
    nodes are released, so replaying the same graph raises GraphError.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward requires a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    holders: dict[int, Tensor] = {id(loss): loss}

    if loss.node is None:
        if loss.requires_grad:
            loss.accumulate_grad(grads[id(loss)])
        return
    if loss.node.consumed:
        raise GraphError("backward through a tape node whose activations were released")

    needed: set[int] = set()
    stack = [loss.node]
    while stack:
        node = stack.pop()
        if id(node) in needed:
            continue
        needed.add(id(node))
        for t in node.inputs:
            if t.node is not None:
                stack.append(t.node)

    for node in reversed(TAPE.nodes):
        if id(node) not in needed:
            continue
        gout = grads.pop(id(node.output), None)
        holders.pop(id(node.output), None)
        if gout is None:
            continue
        if node.consumed:
            raise GraphError(
                f"backward through op '{node.op}' whose activations were released"
            )
        input_grads = node.backward_fn(gout, node.saved)
        for t, g in zip(node.inputs, input_grads):
            if g is None or not t.needs_grad():
                continue
            acc = grads.get(id(t))
            grads[id(t)] = g if acc is None else acc + g
            holders[id(t)] = t
        node.saved = None
        node.consumed = True

    for key, t in holders.items():
        if t.requires_grad and t.node is None:
            t.accumulate_grad(grads[key])

    TAPE.nodes[:] = [n for n in TAPE.nodes if id(n) not in needed]


def as_tensor(x, dtype=None) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)
