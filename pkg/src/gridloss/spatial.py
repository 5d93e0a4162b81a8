"""Neighborhood verification measures: fractions skill score and SSIM."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .discretize import DiscretizationMode
from .errors import HardModeAsLoss, InvalidSpec, MaskTooLarge, RangeViolation, ShapeMismatch
from .filters import average_pool2d, conv2d_fixed, gaussian_window
from .tensor import PER_SAMPLE, GridTensor

EPSILON = 1e-7


def _default_fss_mode() -> DiscretizationMode:
    return DiscretizationMode.soft(cutoff=0.5, c=10.0)


@dataclass(frozen=True)
class FssConfig:
    """Fractions skill score settings.

    Parameters
    ----------
    mask_size : int
        Edge of the square neighborhood used for the event densities.
    discretization : DiscretizationMode
        Applied to both fields before pooling. Defaults to a soft sigmoid
        with cutoff 0.5 and steepness 10.
    per_sample : bool
        Compute the ratio per sample and average, instead of the batch-mixed
        normalization used by default.
    use_as_loss : bool
        Marks the config as a training loss, which rules out hard mode.
    """

    mask_size: int = 3
    discretization: DiscretizationMode = field(default_factory=_default_fss_mode)
    per_sample: bool = False
    use_as_loss: bool = False

    def __post_init__(self):
        if int(self.mask_size) != self.mask_size or self.mask_size < 1:
            raise InvalidSpec(f"mask_size must be a positive integer, got {self.mask_size}")
        if self.use_as_loss and self.discretization.is_hard:
            raise HardModeAsLoss("hard discretization can only be used for the FSS metric")


def _fss_densities(y_true, y_pred, cfg):
    if y_true.shape != y_pred.shape:
        raise ShapeMismatch(f"fss: shapes {y_true.shape} and {y_pred.shape} differ")
    n = int(cfg.mask_size)
    _, rows, cols, _ = y_true.shape
    if n > rows or n > cols:
        raise MaskTooLarge(f"mask {n} larger than grid {rows}x{cols}")
    o = average_pool2d(cfg.discretization.apply(y_true), (n, n), (1, 1), "valid")
    m = average_pool2d(cfg.discretization.apply(y_pred), (n, n), (1, 1), "valid")
    return o, m


def _ratio(mse_n, mse_ref, hard):
    if hard:
        # Both densities identically zero: the ratio is undefined, fall back to MSE_n.
        if float(mse_ref) == 0.0:
            return mse_n
        return mse_n / mse_ref
    return mse_n / (mse_ref + EPSILON)


def fss_loss(y_true: GridTensor, y_pred: GridTensor, cfg: FssConfig = FssConfig()) -> GridTensor:
    """``MSE_n / MSE_n_ref`` of the pooled event densities.

    ``MSE_n`` is the mean squared density difference over batch and pixels.
    ``MSE_n_ref`` sums the squared densities of both fields over the whole
    batch and divides by the pooled pixel count of a single sample.
    """
    o, m = _fss_densities(y_true, y_pred, cfg)
    hard = cfg.discretization.is_hard
    npix = float(o.shape[1] * o.shape[2])
    if cfg.per_sample:
        mse_n = T.reduce_mean(T.square(o - m), PER_SAMPLE)
        mse_ref = (T.reduce_sum(T.square(o), PER_SAMPLE) + T.reduce_sum(T.square(m), PER_SAMPLE)) \
            / (npix * o.shape[3])
        if hard:
            ref = mse_ref.numpy()
            safe = T.where(GridTensor(np.where(ref == 0.0, 1.0, 0.0)), T.ones_like(mse_ref), mse_ref)
            return T.reduce_mean(mse_n / safe)
        return T.reduce_mean(mse_n / (mse_ref + EPSILON))
    mse_n = T.reduce_mean(T.square(o - m))
    mse_ref = (T.reduce_sum(T.square(o)) + T.reduce_sum(T.square(m))) / npix
    return _ratio(mse_n, mse_ref, hard)


def fss_score(y_true: GridTensor, y_pred: GridTensor, cfg: FssConfig = FssConfig()) -> GridTensor:
    """Fractions skill score, 1 for a perfect forecast."""
    return 1.0 - fss_loss(y_true, y_pred, cfg)


@dataclass(frozen=True)
class SsimConfig:
    max_val: float = 1.0
    filter_size: int = 11
    filter_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03

    def __post_init__(self):
        for name in ("max_val", "filter_sigma", "k1", "k2"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InvalidSpec(f"{name} must be finite and positive, got {v}")
        if int(self.filter_size) != self.filter_size or self.filter_size < 1 or self.filter_size % 2 == 0:
            raise InvalidSpec(f"filter_size must be a positive odd integer, got {self.filter_size}")

    @property
    def c1(self) -> float:
        return (self.k1 * self.max_val) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.max_val) ** 2


def _check_ssim_inputs(img1, img2, cfg):
    if img1.shape != img2.shape:
        raise ShapeMismatch(f"ssim: shapes {img1.shape} and {img2.shape} differ")
    if img1.shape[3] != 1:
        raise ShapeMismatch("ssim expects single-channel images")
    if img1.shape[1] < cfg.filter_size or img1.shape[2] < cfg.filter_size:
        raise ShapeMismatch(
            f"images {img1.shape[1]}x{img1.shape[2]} smaller than the {cfg.filter_size}-pixel window")
    for img in (img1, img2):
        x = img.numpy()
        if np.any((x < 0.0) | (x > cfg.max_val)):
            raise RangeViolation(f"ssim inputs must lie in [0, {cfg.max_val}]")


def ssim_map(img1: GridTensor, img2: GridTensor, cfg: SsimConfig = SsimConfig()) -> GridTensor:
    """Per-pixel SSIM over the valid region of the Gaussian window."""
    _check_ssim_inputs(img1, img2, cfg)
    window = gaussian_window(int(cfg.filter_size), cfg.filter_sigma)

    def blur(t):
        return conv2d_fixed(t, window, padding="valid")

    mu1, mu2 = blur(img1), blur(img2)
    num0 = mu1 * mu2 * 2.0
    den0 = T.square(mu1) + T.square(mu2)
    luminance = (num0 + cfg.c1) / (den0 + cfg.c1)
    num1 = blur(img1 * img2) * 2.0
    den1 = blur(T.square(img1) + T.square(img2))
    cs = (num1 - num0 + cfg.c2) / (den1 - den0 + cfg.c2)
    return luminance * cs


def ssim(img1: GridTensor, img2: GridTensor, cfg: SsimConfig = SsimConfig()) -> GridTensor:
    """Mean SSIM: averaged over valid pixels per image, then over the batch."""
    return T.reduce_mean(T.reduce_mean(ssim_map(img1, img2, cfg), PER_SAMPLE))


def ssim_loss(img1: GridTensor, img2: GridTensor, cfg: SsimConfig = SsimConfig()) -> GridTensor:
    return 1.0 - ssim(img1, img2, cfg)
