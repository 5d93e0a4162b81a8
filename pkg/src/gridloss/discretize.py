"""Turning confidence scores into (quasi-)binary event indicators.

Three treatments are supported:

* hard: ``1`` where ``p > cutoff`` else ``0``. Exact counts, no gradient.
* soft: ``sigmoid(c * (p - cutoff))``. Differentiable approximation of hard;
  larger ``c`` is closer to a step but flatter away from the cutoff.
* none: ``p`` is used as is, giving quasi-probabilistic counts.

The soft form can alternatively be the plain ``sigmoid(p)`` (``soft_form =
"raw_sigmoid"``), which is what some published CSI/IOU code applies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidSpec, OutOfRange
from .tensor import GridTensor, _result, reduce_sum, sigmoid

HARD, SOFT, NONE = "hard", "soft", "none"
DEFAULT_CUTOFF = 0.5
DEFAULT_C = 1.0


@dataclass(frozen=True)
class DiscretizationMode:
    mode: str = NONE
    cutoff: float = DEFAULT_CUTOFF
    c: float = DEFAULT_C
    soft_form: str = "centered"

    def __post_init__(self):
        if self.mode not in (HARD, SOFT, NONE):
            raise InvalidSpec(f"unknown discretization mode {self.mode!r}")
        if self.mode in (HARD, SOFT) and not 0.0 < self.cutoff < 1.0:
            raise InvalidSpec(f"cutoff must lie strictly inside (0, 1), got {self.cutoff}")
        if self.mode == SOFT and not (math.isfinite(self.c) and self.c > 0):
            raise InvalidSpec(f"steepness c must be finite and positive, got {self.c}")
        if self.soft_form not in ("centered", "raw_sigmoid"):
            raise InvalidSpec(f"unknown soft_form {self.soft_form!r}")

    @classmethod
    def hard(cls, cutoff: float = DEFAULT_CUTOFF) -> "DiscretizationMode":
        return cls(HARD, cutoff)

    @classmethod
    def soft(cls, cutoff: float = DEFAULT_CUTOFF, c: float = DEFAULT_C,
             soft_form: str = "centered") -> "DiscretizationMode":
        return cls(SOFT, cutoff, c, soft_form)

    @classmethod
    def none(cls) -> "DiscretizationMode":
        return cls(NONE)

    @property
    def is_hard(self) -> bool:
        return self.mode == HARD

    def apply(self, p: GridTensor) -> GridTensor:
        if self.mode == HARD:
            return hard_discretize(p, self.cutoff)
        if self.mode == SOFT:
            if self.soft_form == "raw_sigmoid":
                return sigmoid(p)
            return soft_discretize(p, self.cutoff, self.c)
        return p

    def to_dict(self) -> dict:
        d = {"mode": self.mode}
        if self.mode != NONE:
            d["cutoff"] = self.cutoff
        if self.mode == SOFT:
            d["c"] = self.c
            d["soft_form"] = self.soft_form
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DiscretizationMode":
        unknown = set(d) - {"mode", "cutoff", "c", "soft_form"}
        if unknown:
            raise InvalidSpec(f"unknown discretization keys: {sorted(unknown)}")
        return cls(
            str(d.get("mode", NONE)),
            float(d.get("cutoff", DEFAULT_CUTOFF)),
            float(d.get("c", DEFAULT_C)),
            str(d.get("soft_form", "centered")),
        )


def hard_discretize(p: GridTensor, cutoff: float = DEFAULT_CUTOFF) -> GridTensor:
    """1.0 where ``p > cutoff`` (strict) else 0.0; gradient-blocked."""
    out = np.where(p.numpy() > cutoff, 1.0, 0.0)
    return _result(out, "hard_discretize", (p,), None, blocked=True)


def soft_discretize(p: GridTensor, cutoff: float = DEFAULT_CUTOFF, c: float = DEFAULT_C) -> GridTensor:
    if not c > 0:
        raise InvalidSpec("steepness c must be positive")
    return sigmoid(c * (p - cutoff))


def soft_count(p: GridTensor, mode: DiscretizationMode) -> GridTensor:
    """Number of predicted events: sum of the mode-transformed scores."""
    if mode.mode == NONE:
        x = p.numpy()
        if np.any((x < 0.0) | (x > 1.0)):
            raise OutOfRange("confidence scores must lie in [0, 1] without discretization")
    return reduce_sum(mode.apply(p))
