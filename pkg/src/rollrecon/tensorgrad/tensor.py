"""Tensor value type and the recording tape used for reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import StateError

_FLOAT_TYPES = (np.dtype(np.float32), np.dtype(np.float64))

# stack of tapes currently recording; only the innermost records
_ACTIVE: list["Tape"] = []


class Tensor:
    """Dense row-major real array with an optional gradient buffer.

    Leading axes beyond the ones an operation documents are treated as batch
    axes, so an ``H x W x C`` image and an ``N x H x W x C`` batch go through
    the same primitives.
    """

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: Optional[str] = None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_TYPES:
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @property
    def dims(self) -> tuple:
        return self.data.shape

    shape = dims

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(dims={self.dims}, dtype={self.dtype.name}{flag})"


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


@dataclass
class Node:
    op: str
    inputs: tuple
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tape:
    """Ordered record of primitive applications.

    Use as a context manager; primitives applied inside the block to tensors
    that require gradients are appended in execution order, which is a valid
    topological order by construction. A tape can be replayed backward once.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        if self._consumed:
            raise StateError("tape was already replayed; record a new one")
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, op: str, inputs: tuple, output: Tensor, backward) -> None:
        if self._consumed:
            raise StateError("cannot record onto a tape that was already replayed")
        self.nodes.append(Node(op, inputs, output, backward))

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(leaf) into ``.grad`` of every requires_grad leaf."""
        if self._consumed:
            raise StateError("backward called twice on the same tape")
        if loss.data.ndim != 0:
            raise ValueError(f"backward needs a scalar loss, got dims {loss.dims}")
        produced = {id(n.output) for n in self.nodes}
        if id(loss) not in produced:
            raise ValueError("loss was not produced by a primitive recorded on this tape")

        grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=loss.dtype)}
        leaves: dict[int, Tensor] = {}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            in_grads = node.backward(g)
            for t, gi in zip(node.inputs, in_grads):
                if gi is None or not t.requires_grad:
                    continue
                key = id(t)
                if key not in produced:
                    leaves[key] = t
                prev = grads.get(key)
                grads[key] = gi if prev is None else prev + gi

        for key, t in leaves.items():
            g = grads[key].astype(t.dtype, copy=False)
            t.grad = g.copy() if t.grad is None else t.grad + g
        self.nodes.clear()
        self._consumed = True


def active_tape() -> Optional[Tape]:
    return _ACTIVE[-1] if _ACTIVE else None


def emit(op: str, data: np.ndarray, inputs: tuple, backward) -> Tensor:
    """Wrap a primitive's result and, when gradients are needed, record it."""
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs)
    if needs:
        tape = active_tape()
        if tape is not None:
            tape.record(op, inputs, out, backward)
    return out
