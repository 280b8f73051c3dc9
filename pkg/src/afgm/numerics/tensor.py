"""Dense float64 tensors on a recorded reverse-mode tape.

A Tensor wraps a C-contiguous float64 numpy array. Operations (see ops.py)
compute values eagerly and, when a Graph is active and some input requires
gradients, append the result node to the tape together with one vjp closure
per parent. Graph.backward replays the tape in exact reverse recording
order, which is a valid reverse topological order because every node is
recorded after all of its parents.

Gradients accumulate additively into .grad; leaves created with
requires_grad=True keep their .grad after backward so an optimizer can read
it. Non-finite values are rejected at the op boundary (see ops._make), never
propagated.
"""
from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from ..errors import ContractError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "parents", "vjps", "op_name")

    def __init__(self, data, requires_grad: bool = False, op_name: str = "leaf"):
        if isinstance(data, Tensor):
            raise ContractError("Tensor(data) expects array-like, got a Tensor")
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.parents: tuple = ()
        self.vjps: tuple = ()
        self.op_name = op_name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def grad_or_zeros(self) -> np.ndarray:
        """Adjoint of this tensor, as zeros when it never received one."""
        if self.grad is None:
            return np.zeros_like(self.data)
        return self.grad

    def __repr__(self) -> str:
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op_name!r}{flag})"

    # Small amount of sugar; the op functions in ops.py are the real API.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)


VjpFn = Callable[[np.ndarray], np.ndarray]


class Graph:
    """Tape of recorded operations.

    Use as a context manager around a forward pass; ops record onto the
    innermost active graph. Graphs nest (an inner graph can be opened for a
    sub-computation) and distinct Graph instances share no state.
    """

    _stack: list["Graph"] = []

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self) -> "Graph":
        Graph._stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        popped = Graph._stack.pop()
        if popped is not self:
            raise ContractError("graph context exited out of order")
        return False

    @staticmethod
    def current() -> Optional["Graph"]:
        return Graph._stack[-1] if Graph._stack else None

    def backward(self, loss: Tensor) -> None:
        """Push the adjoint of a scalar loss through the tape.

        Visits nodes in exact reverse recording order. Parents accumulate
        contributions additively; leaves keep their .grad for the caller.
        """
        if loss.data.size != 1:
            raise ContractError(
                f"backward requires a scalar loss, got shape {loss.shape}")
        if not loss.requires_grad:
            # Loss does not depend on any tracked leaf; nothing to do.
            return
        loss.grad = np.ones_like(loss.data)
        for node in reversed(self.nodes):
            g = node.grad
            if g is None:
                continue
            for parent, vjp in zip(node.parents, node.vjps):
                if not parent.requires_grad:
                    continue
                contrib = vjp(g)
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad = parent.grad + contrib

    def clear(self) -> None:
        self.nodes.clear()


def constant(data) -> Tensor:
    """Leaf tensor that never tracks gradients."""
    return Tensor(data, requires_grad=False, op_name="const")


def parameter(data, name: str = "param") -> Tensor:
    """Leaf tensor that accumulates an adjoint during backward."""
    return Tensor(data, requires_grad=True, op_name=name)
