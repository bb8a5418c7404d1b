# kdda/tensor_ad/tensor.py
"""
Dense double-precision tensors and the define-by-run gradient tape.

Every differentiable op appends a record to the calling thread's active tape.
A tape is consumed by a single backward pass; start a new one (or reset it)
before the next forward pass.
"""
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from aws_lambda_powertools import Logger

from kdda.settings import settings

logger = Logger(service="kdda", child=True)

_local = threading.local()


class ShapeMismatchError(ValueError):
    """Operand shapes are incompatible for an operation."""
    pass


class TapeError(RuntimeError):
    """Misuse of the gradient tape (non-scalar output, detached graph, reuse)."""
    pass


class NonFiniteError(ArithmeticError):
    """A NaN or Inf was produced while checked mode is on."""
    pass


class DiffTensor:
    """
    A dense tensor participating in reverse-mode differentiation.

    Scalars have shape (). Values are never mutated in place by the library;
    optimizers rebind `data` to fresh arrays.
    """
    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        # Set when the tensor is the output of a recorded op.
        self._tape: Optional["Tape"] = None
        self._record_index: Optional[int] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self._tape is None

    def item(self) -> float:
        if self.size != 1:
            raise ShapeMismatchError(f"item: expected a single value, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"DiffTensor(shape={self.shape}, requires_grad={self.requires_grad})"


@dataclass
class TapeRecord:
    """One recorded operation: its inputs, its output and the backward rule."""
    op: str
    inputs: tuple
    output: DiffTensor
    backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tape:
    """
    Ordered record of differentiable operations.

    Records are appended in execution order, so inputs always precede the
    operations consuming them and a reverse sweep visits each node once.
    """
    def __init__(self):
        self.records: list[TapeRecord] = []
        self.consumed = False

    def __len__(self) -> int:
        return len(self.records)

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def reset(self) -> None:
        for record in self.records:
            record.output._tape = None
            record.output._record_index = None
        self.records = []
        self.consumed = False

    def record(self, op: str, output: DiffTensor, inputs: tuple, backward_fn: Callable) -> None:
        if self.consumed:
            raise TapeError(f"{op}: tape was already consumed by backward(); call reset() first")
        output._tape = self
        output._record_index = len(self.records)
        self.records.append(TapeRecord(op, inputs, output, backward_fn))

    def backward(self, output: DiffTensor) -> None:
        """Populates `.grad` on every requires_grad leaf reachable from `output`."""
        if output.size != 1:
            raise TapeError(f"backward: output must be a scalar, got shape {output.shape}")
        if self.consumed:
            raise TapeError("backward: tape was already consumed; call reset() before another pass")
        if output._tape is not self or output._record_index is None:
            raise TapeError("backward: output is detached from this tape (no recorded graph)")

        grads: dict[int, np.ndarray] = {id(output): np.ones_like(output.data)}
        checked = is_checked()

        for record in reversed(self.records[: output._record_index + 1]):
            upstream = grads.pop(id(record.output), None)
            if upstream is None:
                continue
            input_grads = record.backward_fn(upstream)
            for tensor, grad in zip(record.inputs, input_grads):
                if grad is None or not tensor.requires_grad:
                    continue
                if checked and not np.all(np.isfinite(grad)):
                    raise NonFiniteError(f"{record.op}: non-finite gradient in backward pass")
                if tensor._tape is self:
                    key = id(tensor)
                    grads[key] = grad if key not in grads else grads[key] + grad
                else:
                    grad = np.array(grad, dtype=np.float64, copy=True)
                    tensor.grad = grad if tensor.grad is None else tensor.grad + grad

        self.consumed = True
        logger.debug("Backward pass complete", extra={"records": len(self.records)})


def _tape_stack() -> list:
    stack = getattr(_local, "tapes", None)
    if stack is None:
        stack = _local.tapes = []
    return stack


def current_tape() -> Tape:
    """
    Returns the innermost `with Tape()` block of this thread. Outside any block
    ops go to a per-thread implicit tape, replaced once it has been consumed.
    """
    stack = _tape_stack()
    if stack:
        return stack[-1]
    implicit = getattr(_local, "implicit", None)
    if implicit is None or implicit.consumed:
        implicit = _local.implicit = Tape()
    return implicit


def backward(output: DiffTensor) -> None:
    """Runs the backward pass on the tape that recorded `output`."""
    if output._tape is None:
        raise TapeError("backward: output is detached (it was not produced by a recorded op)")
    output._tape.backward(output)


def is_grad_enabled() -> bool:
    return getattr(_local, "grad_enabled", True)


@contextmanager
def no_grad():
    """Disables recording; results never require grad inside the block."""
    previous = is_grad_enabled()
    _local.grad_enabled = False
    try:
        yield
    finally:
        _local.grad_enabled = previous


def is_checked() -> bool:
    return getattr(_local, "checked", settings.checked_mode)


@contextmanager
def checked_mode(enabled: bool = True):
    """Toggles NaN/Inf detection for ops executed on this thread."""
    previous = getattr(_local, "checked", None)
    _local.checked = enabled
    try:
        yield
    finally:
        if previous is None:
            del _local.checked
        else:
            _local.checked = previous


def make_result(op: str, data: np.ndarray, inputs: tuple, backward_fn: Callable) -> DiffTensor:
    """Wraps an op's forward value and records it when any input requires grad."""
    if is_checked() and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{op}: produced NaN/Inf values")
    requires_grad = is_grad_enabled() and any(t.requires_grad for t in inputs)
    out = DiffTensor(data, requires_grad=requires_grad)
    if requires_grad:
        current_tape().record(op, out, inputs, backward_fn)
    return out
