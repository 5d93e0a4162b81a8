"""Pointwise regression losses.

Every loss takes ``(y_true, y_pred)`` holding a whole batch and returns a
scalar ``(1, 1, 1, 1)`` tensor. Unless stated otherwise the mean runs over
all elements, batch included.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

from . import tensor as T
from .errors import EmptyCombination, InvalidSpec, MissingSupplementChannel, ShapeMismatch
from .filters import sobel_edges
from .tensor import PER_SAMPLE, GridTensor

LossFn = Callable[[GridTensor, GridTensor], GridTensor]


def _check(y_true: GridTensor, y_pred: GridTensor, op: str) -> None:
    if y_true.shape != y_pred.shape:
        raise ShapeMismatch(f"{op}: y_true {y_true.shape} and y_pred {y_pred.shape} differ")


def _squared_error(y_true, y_pred):
    return T.square(y_pred - y_true)


def squared_error(y_true: GridTensor, y_pred: GridTensor) -> GridTensor:
    """Per-pixel squared error, left unreduced."""
    _check(y_true, y_pred, "squared_error")
    return T.square(y_true - y_pred)


def mse(y_true: GridTensor, y_pred: GridTensor) -> GridTensor:
    _check(y_true, y_pred, "mse")
    return T.reduce_mean(T.square(y_true - y_pred))


def rmse_by_batch(y_true: GridTensor, y_pred: GridTensor) -> GridTensor:
    """Square root of the mean over the whole batch."""
    _check(y_true, y_pred, "rmse_by_batch")
    return T.sqrt(T.reduce_mean(T.square(y_true - y_pred)))


def rmse_by_sample(y_true: GridTensor, y_pred: GridTensor, reduce: bool = True) -> GridTensor:
    """One RMSE per sample, then their mean.

    With ``reduce=False`` the per-sample values are returned as a
    ``(batch, 1, 1, 1)`` tensor.
    """
    _check(y_true, y_pred, "rmse_by_sample")
    per_sample = T.sqrt(T.reduce_mean(T.square(y_true - y_pred), PER_SAMPLE))
    return T.reduce_mean(per_sample) if reduce else per_sample


def mse_weighted_exp(y_true: GridTensor, y_pred: GridTensor, exp_weight: float = 5.0) -> GridTensor:
    """MSE with weight ``exp(exp_weight * y_true)``, emphasising large truths."""
    _check(y_true, y_pred, "mse_weighted_exp")
    return T.reduce_mean(T.exp(exp_weight * y_true) * _squared_error(y_true, y_pred))


def mse_weighted_genexp(y_true: GridTensor, y_pred: GridTensor, genexp_weight: float = 1.0) -> GridTensor:
    """MSE with weight ``exp(genexp_weight * y_true**2)``; even in y_true."""
    _check(y_true, y_pred, "mse_weighted_genexp")
    return T.reduce_mean(T.exp(genexp_weight * T.square(y_true)) * _squared_error(y_true, y_pred))


def dual_weighted_mse(y_true: GridTensor, y_pred: GridTensor, gamma_weight: float = 5.0) -> GridTensor:
    """MSE weighted by ``max(|y_true|, |y_pred|) ** gamma_weight``."""
    _check(y_true, y_pred, "dual_weighted_mse")
    weight = T.power(T.maximum(T.abs(y_true), T.abs(y_pred)), gamma_weight)
    return T.reduce_mean(weight * _squared_error(y_true, y_pred))


def mse_zero_nonzero(y_true: GridTensor, y_pred: GridTensor, w_zero: float = 1.0,
                     w_nonzero: float = 1.0) -> GridTensor:
    """Separate weights for pixels with ``y_true > 0`` and the rest.

    Negative truths fall in the zero class.
    """
    _check(y_true, y_pred, "mse_zero_nonzero")
    ones = T.ones_like(y_true)
    weights = T.where(T.greater(y_true, 0.0), ones * w_nonzero, ones * w_zero)
    return T.reduce_mean(weights * _squared_error(y_true, y_pred))


def mse_with_sobel(y_true: GridTensor, y_pred: GridTensor, sobel_weight: float = 0.0) -> GridTensor:
    """MSE plus weighted squared differences of Sobel edges (single channel)."""
    _check(y_true, y_pred, "mse_with_sobel")
    dy_pred, dx_pred = sobel_edges(y_pred)
    dy_true, dx_true = sobel_edges(y_true)
    return T.reduce_mean(
        _squared_error(y_true, y_pred)
        + sobel_weight * T.square(dy_pred - dy_true)
        + sobel_weight * T.square(dx_pred - dx_true)
    )


def split_supplement(y_true_aug: GridTensor) -> tuple[GridTensor, GridTensor]:
    """Split truth (channel 0) from the supplementary mask (channel 1)."""
    if y_true_aug.shape[3] < 2:
        raise MissingSupplementChannel("y_true must carry the supplementary mask in channel 1")
    return T.channel(y_true_aug, 0), T.channel(y_true_aug, 1)


def mse_supplementary_weighted(y_true_aug: GridTensor, y_pred: GridTensor,
                               weights: Sequence[float] = (1.0, 1.0)) -> GridTensor:
    """MSE weighted by a training-only mask riding in ``y_true``.

    Weight is ``weights[0]`` where the mask is below 1, else ``weights[1]``.
    """
    truth, suppl = split_supplement(y_true_aug)
    _check(truth, y_pred, "mse_supplementary_weighted")
    w0, w1 = weights
    ones = T.ones_like(truth)
    w = T.where(T.less(suppl, 1.0), ones * w0, ones * w1)
    return T.reduce_mean(w * _squared_error(truth, y_pred))


def mse_supplementary_truth(y_true_aug: GridTensor, y_pred: GridTensor) -> GridTensor:
    """Plain MSE against channel 0 of an augmented truth, ignoring the mask."""
    truth, _ = split_supplement(y_true_aug)
    return mse(truth, y_pred)


def mse_fewer_misses(y_true: GridTensor, y_pred: GridTensor) -> GridTensor:
    """Squared error plus an extra linear penalty on under-prediction."""
    _check(y_true, y_pred, "mse_fewer_misses")
    return T.reduce_mean(_squared_error(y_true, y_pred) + T.maximum(y_true - y_pred, 0.0))


def combine_losses(terms: Sequence[tuple[LossFn, float]]) -> LossFn:
    """Weighted sum of loss terms, like passing several losses with loss weights."""
    terms = list(terms)
    if not terms:
        raise EmptyCombination("need at least one loss term")
    for _, w in terms:
        if not math.isfinite(float(w)):
            raise InvalidSpec(f"loss weight must be finite, got {w!r}")

    def combined(y_true: GridTensor, y_pred: GridTensor) -> GridTensor:
        total = None
        for fn, w in terms:
            term = float(w) * fn(y_true, y_pred)
            total = term if total is None else total + term
        return total

    return combined
