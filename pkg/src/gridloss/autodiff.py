"""Reverse-mode differentiation over GridTensor expressions.

A :class:`Tape` records every operation whose inputs depend on a watched
parameter while the tape is active. Recording happens in execution order, so
the node list is already a topological order and the backward pass is a single
reversed sweep.

Typical use::

    with Tape() as tape:
        w = tape.watch(GridTensor([[[[0.0]]]]))
        loss = mse(y, w * x)
    grads = tape.gradient(loss)
    grads[w]
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import NonFiniteGradient, NonScalarLoss

_local = threading.local()


def current_tape() -> Optional["Tape"]:
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


@dataclass
class Node:
    op: str
    output: object
    parents: tuple
    backward: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]]
    blocked: bool = False


class Tape:
    """Single-writer record of a forward computation."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.parameters: list = []
        self._tracked: dict[int, object] = {}

    def __enter__(self):
        stack = getattr(_local, "stack", None)
        if stack is None:
            stack = _local.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc):
        _local.stack.remove(self)
        return False

    def watch(self, tensor):
        """Mark ``tensor`` as a trainable parameter and return it."""
        if id(tensor) not in self._tracked:
            self._tracked[id(tensor)] = tensor
            self.parameters.append(tensor)
        return tensor

    def is_tracked(self, tensor) -> bool:
        return id(tensor) in self._tracked

    def record(self, output, op, parents, backward, blocked=False):
        if not any(self.is_tracked(p) for p in parents):
            return
        self._tracked[id(output)] = output
        self.nodes.append(Node(op, output, tuple(parents), backward, blocked))

    def gradient(self, loss, parameters=None) -> "GradientSet":
        return backward(self, loss, parameters)


@dataclass
class GradientSet:
    """Gradients keyed by parameter tensor, plus any blocked ops met on the way."""

    grads: dict = field(default_factory=dict)
    blocked_ops: tuple = ()

    def __getitem__(self, param):
        return self.grads[id(param)][1]

    def __contains__(self, param):
        return id(param) in self.grads

    def __len__(self):
        return len(self.grads)

    def items(self):
        return list(self.grads.values())

    @property
    def blocked(self) -> bool:
        return bool(self.blocked_ops)


def backward(tape: Tape, loss, parameters=None) -> GradientSet:
    """Return d(loss)/d(p) for every watched parameter ``p``.

    Non-differentiable nodes (hard thresholds, comparisons, a ``where``
    condition that depends on parameters) pass zero gradient; their names are
    collected in ``GradientSet.blocked_ops`` instead of raising.
    """
    from .tensor import GridTensor

    if loss.shape != (1, 1, 1, 1):
        raise NonScalarLoss(f"loss must have shape (1, 1, 1, 1), got {loss.shape}")
    params = tape.parameters if parameters is None else list(parameters)

    grads: dict[int, np.ndarray] = {}
    if tape.is_tracked(loss):
        grads[id(loss)] = np.ones((1, 1, 1, 1))
    blocked = []
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        if node.blocked or node.backward is None:
            if node.op not in blocked:
                blocked.append(node.op)
            continue
        for parent, pg in zip(node.parents, node.backward(g)):
            if pg is None or not tape.is_tracked(parent):
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg

    result = {}
    for p in params:
        g = grads.get(id(p))
        g = np.zeros(p.shape) if g is None else np.array(g, dtype=np.float64)
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient("non-finite gradient for a watched parameter")
        result[id(p)] = (p, GridTensor(g))
    return GradientSet(result, tuple(blocked))
