"""Central-difference gradient oracle and reverse-mode gradient checks."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .autodiff import GradientSet, Tape
from .tensor import GridTensor

DEFAULT_STEP = 1e-5
REL_FLOOR = 1e-8


def finite_diff_grad(f: Callable[..., GridTensor], params: Sequence[GridTensor],
                     h: float = DEFAULT_STEP) -> GradientSet:
    """Estimate d f / d p for each element of each parameter by central differences.

    ``f`` is called as ``f(*params)`` and must return a scalar tensor.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    params = list(params)
    base = [p.numpy() for p in params]
    result = {}
    for idx, p in enumerate(params):
        grad = np.zeros(p.shape)
        for pos in np.ndindex(*p.shape):
            plus = base[idx].copy()
            minus = base[idx].copy()
            plus[pos] += h
            minus[pos] -= h
            args_p = list(params)
            args_m = list(params)
            args_p[idx] = GridTensor(plus)
            args_m[idx] = GridTensor(minus)
            grad[pos] = (float(f(*args_p)) - float(f(*args_m))) / (2.0 * h)
        result[id(p)] = (p, GridTensor(grad))
    return GradientSet(result)


def reverse_mode_grad(f: Callable[..., GridTensor], params: Sequence[GridTensor]) -> GradientSet:
    with Tape() as tape:
        for p in params:
            tape.watch(p)
        loss = f(*params)
    return tape.gradient(loss, params)


@dataclass
class GradCheckReport:
    op: str
    max_rel_err: float
    worst_coord: Optional[tuple]
    passed: bool
    blocked_ops: tuple = ()

    @property
    def blocked(self) -> bool:
        return bool(self.blocked_ops)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        d["worst_coord"] = None if self.worst_coord is None else list(self.worst_coord)
        d["blocked_ops"] = list(self.blocked_ops)
        return d


def relative_errors(ad: np.ndarray, fd: np.ndarray) -> np.ndarray:
    scale = np.maximum(np.maximum(np.abs(ad), np.abs(fd)), REL_FLOOR)
    return np.abs(ad - fd) / scale


def grad_check(f: Callable[..., GridTensor], params: Sequence[GridTensor], rel_tol: float = 1e-6,
               h: float = DEFAULT_STEP, op: str = "") -> GradCheckReport:
    """Compare reverse-mode gradients of ``f`` with central differences.

    Passes when ``max |AD - FD| / max(|AD|, |FD|, 1e-8) < rel_tol``. A function
    whose gradient passes through a non-differentiable op is reported as
    blocked and neither passes nor fails on numbers.
    """
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    params = list(params)
    op = op or getattr(f, "__name__", "f")
    ad = reverse_mode_grad(f, params)
    if ad.blocked:
        return GradCheckReport(op, float("nan"), None, False, ad.blocked_ops)
    fd = finite_diff_grad(f, params, h)

    worst, worst_coord = 0.0, None
    for idx, p in enumerate(params):
        err = relative_errors(ad[p].numpy(), fd[p].numpy())
        pos = np.unravel_index(int(np.argmax(err)), err.shape)
        if worst_coord is None or err[pos] > worst:
            worst = float(err[pos])
            worst_coord = (idx,) + tuple(int(i) for i in pos)
    return GradCheckReport(op, worst, worst_coord, worst < rel_tol)
