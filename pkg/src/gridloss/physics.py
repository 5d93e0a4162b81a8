"""Radiative flux losses with an optional net-flux constraint.

Fluxes travel as a ``(batch, 1, 1, 2)`` tensor: channel 0 is the surface
downwelling flux, channel 1 the top-of-atmosphere upwelling flux, both in
W m^-2. Net flux is ``down - up``.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import DomainError, ShapeMismatch
from .tensor import GridTensor

DOWN, UP = 0, 1


def flux_tensor(f_down, f_up, validate: bool = True) -> GridTensor:
    """Pack per-sample down/up fluxes into a ``(batch, 1, 1, 2)`` tensor."""
    down = np.atleast_1d(np.asarray(f_down, dtype=np.float64))
    up = np.atleast_1d(np.asarray(f_up, dtype=np.float64))
    if down.ndim != 1 or down.shape != up.shape:
        raise ShapeMismatch("f_down and f_up must be 1-D sequences of equal length")
    t = GridTensor(np.stack([down, up], axis=-1).reshape(-1, 1, 1, 2))
    if validate:
        validate_fluxes(t)
    return t


def _check_layout(t: GridTensor) -> None:
    if t.shape[1:] != (1, 1, 2):
        raise ShapeMismatch(f"flux tensors must have shape (batch, 1, 1, 2), got {t.shape}")


def validate_fluxes(t: GridTensor) -> GridTensor:
    """Reject negative fluxes; run on ingestion, not inside the losses."""
    _check_layout(t)
    if np.any(t.numpy() < 0.0):
        raise DomainError("radiative fluxes must be non-negative")
    return t


def net_flux(t: GridTensor) -> GridTensor:
    """Per-sample ``f_down - f_up`` as a ``(batch, 1, 1, 1)`` tensor."""
    _check_layout(t)
    return T.channel(t, DOWN) - T.channel(t, UP)


def _pair(y_true, y_pred):
    _check_layout(y_true)
    _check_layout(y_pred)
    if y_true.shape != y_pred.shape:
        raise ShapeMismatch(f"flux batch sizes differ: {y_true.shape[0]} vs {y_pred.shape[0]}")
    return (T.channel(y_true, DOWN), T.channel(y_true, UP),
            T.channel(y_pred, DOWN), T.channel(y_pred, UP))


def flux_loss_unconstrained(y_true: GridTensor, y_pred: GridTensor) -> GridTensor:
    """Mean over samples of the squared down and up errors."""
    d, u, d_hat, u_hat = _pair(y_true, y_pred)
    return T.reduce_mean(T.square(d - d_hat) + T.square(u - u_hat))


def flux_loss_constrained(y_true: GridTensor, y_pred: GridTensor) -> GridTensor:
    """Unconstrained loss plus the squared net-flux error ``(d - u - d_hat + u_hat)**2``."""
    d, u, d_hat, u_hat = _pair(y_true, y_pred)
    net_term = T.square(d - u - d_hat + u_hat)
    return T.reduce_mean(T.square(d - d_hat) + T.square(u - u_hat) + net_term)
