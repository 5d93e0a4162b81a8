"""Count-based categorical scores: CSI, IOU, Dice and Tversky.

Counts are computed from the discretized prediction ``p`` and a binary truth
``t``::

    a = sum(t * p)          true positives
    b = sum((1 - t) * p)    false positives
    c = sum(t * (1 - p))    false negatives

With hard discretization these are exact contingency counts; with soft or no
discretization they are quasi-probabilistic. Every score is positively
oriented; ``use_as_loss`` returns ``1 - score``.

CSI pools counts over the whole batch. IOU, Dice and Tversky work on a
single class channel, compute one value per sample and average over the
batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import tensor as T
from .discretize import DiscretizationMode
from .errors import ClassOutOfRange, HardModeAsLoss, InvalidSpec, NonBinaryTruth, ShapeMismatch
from .tensor import PER_SAMPLE, SPATIAL, GridTensor

EPSILON = 1e-7

UNION_FORMS = ("code", "strict", "max")
DICE_DENOMINATORS = ("code", "per_grid_point")


@dataclass(frozen=True)
class ClassSelector:
    which_class: int = 0
    num_classes: int = 1

    def __post_init__(self):
        if self.num_classes < 1:
            raise ClassOutOfRange("need at least one class")
        if not 0 <= self.which_class < self.num_classes:
            raise ClassOutOfRange(
                f"class {self.which_class} out of range [0, {self.num_classes - 1}]")


@dataclass(frozen=True)
class CategoricalConfig:
    use_as_loss: bool = False
    discretization: DiscretizationMode = field(default_factory=DiscretizationMode.none)
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if self.use_as_loss and self.discretization.is_hard:
            raise HardModeAsLoss("hard discretization is not differentiable; use it as a metric only")
        if self.alpha < 0 or self.beta < 0:
            raise InvalidSpec("Tversky weights alpha and beta must be non-negative")


def _check_truth(y_true: GridTensor) -> None:
    t = y_true.numpy()
    if not np.all((t == 0.0) | (t == 1.0)):
        raise NonBinaryTruth("y_true must contain only 0 and 1")


def _orient(value: GridTensor, cfg: CategoricalConfig) -> GridTensor:
    return 1.0 - value if cfg.use_as_loss else value


def _selector(sel, y_true: GridTensor) -> ClassSelector:
    k = y_true.shape[3]
    if isinstance(sel, ClassSelector):
        if sel.num_classes != k:
            raise ShapeMismatch(f"selector expects {sel.num_classes} classes, tensors have {k}")
        return sel
    return ClassSelector(int(sel), k)


def contingency(y_true: GridTensor, p: GridTensor, axes=None):
    """(a, b, c) sums of an already discretized prediction over ``axes``."""
    a = T.reduce_sum(y_true * p, axes)
    b = T.reduce_sum((1.0 - y_true) * p, axes)
    c = T.reduce_sum(y_true * (1.0 - p), axes)
    return a, b, c


def csi(y_true: GridTensor, y_pred: GridTensor, cfg: Optional[CategoricalConfig] = None) -> GridTensor:
    """Critical success index ``a / (a + b + c + eps)`` over the whole batch."""
    cfg = cfg or CategoricalConfig()
    if y_true.shape != y_pred.shape:
        raise ShapeMismatch(f"csi: shapes {y_true.shape} and {y_pred.shape} differ")
    _check_truth(y_true)
    p = cfg.discretization.apply(y_pred)
    a, b, c = contingency(y_true, p)
    return _orient(a / (a + b + c + EPSILON), cfg)


def _class_inputs(y_true, y_pred, sel, cfg, op):
    if y_true.shape != y_pred.shape:
        raise ShapeMismatch(f"{op}: shapes {y_true.shape} and {y_pred.shape} differ")
    sel = _selector(sel, y_true)
    _check_truth(y_true)
    p = cfg.discretization.apply(y_pred)
    return sel, p, T.channel(y_true, sel.which_class), T.channel(p, sel.which_class)


def iou(y_true: GridTensor, y_pred: GridTensor, sel=0, cfg: Optional[CategoricalConfig] = None,
        union: str = "code") -> GridTensor:
    """Intersection over union for one class, averaged over the batch.

    ``union`` selects the denominator:

    * ``"code"`` (default): ``sum(t) + sum(p) - intersection`` with the two
      sums running over every channel of the full tensors.
    * ``"strict"``: the same form restricted to the selected class.
    * ``"max"``: ``sum(max(p, t))`` over the selected class.

    All three coincide for hard-discretized single-class inputs.
    """
    cfg = cfg or CategoricalConfig()
    if union not in UNION_FORMS:
        raise InvalidSpec(f"unknown union form {union!r}")
    _, p, tk, pk = _class_inputs(y_true, y_pred, sel, cfg, "iou")
    intersection = T.reduce_sum(tk * pk, SPATIAL)
    if union == "code":
        u = T.reduce_sum(y_true, PER_SAMPLE) + T.reduce_sum(p, PER_SAMPLE) - intersection
    elif union == "strict":
        u = T.reduce_sum(tk, SPATIAL) + T.reduce_sum(pk, SPATIAL) - intersection
    else:
        u = T.reduce_sum(T.maximum(pk, tk), SPATIAL)
    return _orient(T.reduce_mean(intersection / (u + EPSILON)), cfg)


def dice(y_true: GridTensor, y_pred: GridTensor, sel=0, cfg: Optional[CategoricalConfig] = None,
         denominator: str = "code") -> GridTensor:
    """Class intersection divided by the domain size, averaged over the batch.

    By default the domain size counts every element of a sample (rows x cols
    x channels); ``denominator="per_grid_point"`` uses rows x cols only.
    """
    cfg = cfg or CategoricalConfig()
    if denominator not in DICE_DENOMINATORS:
        raise InvalidSpec(f"unknown dice denominator {denominator!r}")
    _, _, tk, pk = _class_inputs(y_true, y_pred, sel, cfg, "dice")
    intersection = T.reduce_sum(tk * pk, SPATIAL)
    _, rows, cols, k = y_true.shape
    n = rows * cols * (k if denominator == "code" else 1)
    return _orient(T.reduce_mean(intersection / float(n)), cfg)


def tversky(y_true: GridTensor, y_pred: GridTensor, sel=0,
            cfg: Optional[CategoricalConfig] = None) -> GridTensor:
    """``a / (a + alpha*b + beta*c + eps)`` per sample for one class, batch mean."""
    cfg = cfg or CategoricalConfig()
    _, _, tk, pk = _class_inputs(y_true, y_pred, sel, cfg, "tversky")
    a, b, c = contingency(tk, pk, SPATIAL)
    value = a / (a + cfg.alpha * b + cfg.beta * c + EPSILON)
    return _orient(T.reduce_mean(value), cfg)


def all_class_mean(metric: Callable, y_true: GridTensor, y_pred: GridTensor,
                   cfg: Optional[CategoricalConfig] = None, **kwargs) -> GridTensor:
    """Average a single-class score over every class channel."""
    k = y_true.shape[3]
    total = None
    for which in range(k):
        v = metric(y_true, y_pred, which, cfg, **kwargs)
        total = v if total is None else total + v
    return total / float(k)


def _hard_counts(y_true: GridTensor, y_pred: GridTensor, cutoff: float):
    if y_true.shape != y_pred.shape:
        raise ShapeMismatch(f"counts: shapes {y_true.shape} and {y_pred.shape} differ")
    t = y_true.numpy() > cutoff
    p = y_pred.numpy() > cutoff
    return t, p


def _count(value) -> GridTensor:
    return GridTensor.scalar(float(np.count_nonzero(value)))


def hit_count(y_true: GridTensor, y_pred: GridTensor, cutoff: float = 0.5) -> GridTensor:
    """Grid points where both fields exceed ``cutoff``."""
    t, p = _hard_counts(y_true, y_pred, cutoff)
    return _count(t & p)


def miss_count(y_true: GridTensor, y_pred: GridTensor, cutoff: float = 0.5) -> GridTensor:
    """Observed events (truth above ``cutoff``) that the prediction leaves out."""
    t, p = _hard_counts(y_true, y_pred, cutoff)
    return _count(t & ~p)


def false_alarm_count(y_true: GridTensor, y_pred: GridTensor, cutoff: float = 0.5) -> GridTensor:
    t, p = _hard_counts(y_true, y_pred, cutoff)
    return _count(~t & p)
