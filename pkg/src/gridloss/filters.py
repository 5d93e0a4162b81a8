"""Fixed spatial operators: average pooling, constant-kernel convolution, Sobel.

None of these have trainable weights. Kernels are plain numpy arrays of shape
(kernel_rows, kernel_cols, in_channels, out_channels) and only the input
tensor receives gradient.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import PoolTooLarge, ShapeMismatch
from .tensor import GridTensor, _result

# 5x5 Gaussian smoother, e-folding radius of one pixel.
GAUSSIAN_5X5 = np.array([
    [0.00296902, 0.01330621, 0.02193823, 0.01330621, 0.00296902],
    [0.01330621, 0.0596343, 0.09832033, 0.0596343, 0.01330621],
    [0.02193823, 0.09832033, 0.16210282, 0.09832033, 0.02193823],
    [0.01330621, 0.0596343, 0.09832033, 0.0596343, 0.01330621],
    [0.00296902, 0.01330621, 0.02193823, 0.01330621, 0.00296902],
])
GAUSSIAN_5X5.flags.writeable = False

SOBEL_DY = np.array([[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]])
SOBEL_DX = SOBEL_DY.T.copy()


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (int, np.integer)):
        return int(v), int(v)
    r, c = v
    return int(r), int(c)


def average_pool2d(t: GridTensor, pool=(2, 2), stride=(1, 1), padding: str = "valid") -> GridTensor:
    """Mean over each ``pool`` window, per sample and per channel.

    Output spatial size is ``floor((n - pool) / stride) + 1`` on each axis.
    """
    if padding != "valid":
        raise ValueError("only 'valid' padding is supported")
    pr, pc = _pair(pool)
    sr, sc = _pair(stride)
    if pr < 1 or pc < 1 or sr < 1 or sc < 1:
        raise ValueError("pool and stride sizes must be positive")
    _, rows, cols, _ = t.shape
    if pr > rows or pc > cols:
        raise PoolTooLarge(f"pool {pr}x{pc} larger than grid {rows}x{cols}")
    x = t.numpy()
    windows = sliding_window_view(x, (pr, pc), axis=(1, 2))[:, ::sr, ::sc]
    out = windows.mean(axis=(-2, -1))
    out_r, out_c = out.shape[1], out.shape[2]
    n = pr * pc

    def backward(g):
        grad = np.zeros(t.shape)
        share = g / n
        for i in range(pr):
            for j in range(pc):
                grad[:, i:i + sr * (out_r - 1) + 1:sr, j:j + sc * (out_c - 1) + 1:sc] += share
        return (grad,)

    return _result(out, "average_pool2d", (t,), backward)


def _padding_amounts(k: int, padding: str) -> tuple[int, int]:
    if padding == "valid":
        return 0, 0
    if padding == "same":
        total = k - 1
        return total // 2, total - total // 2
    raise ValueError(f"unknown padding {padding!r}")


def conv2d_fixed(t: GridTensor, kernel, bias=None, padding: str = "same") -> GridTensor:
    """Cross-correlate ``t`` with a constant kernel, stride 1.

    ``same`` padding zero-pads so the output keeps the input's rows and cols
    (extra padding goes to the bottom/right for even kernel sizes).
    """
    k = np.asarray(kernel, dtype=np.float64)
    if k.ndim == 2:
        k = k[:, :, None, None]
    if k.ndim != 4:
        raise ShapeMismatch("kernel must have shape (kr, kc, in_channels, out_channels)")
    kr, kc, cin, cout = k.shape
    b = np.zeros(cout) if bias is None else np.asarray(bias, dtype=np.float64).reshape(cout)
    if t.shape[3] != cin:
        raise ShapeMismatch(f"kernel expects {cin} input channels, tensor has {t.shape[3]}")
    (pt, pb), (pl, pr_) = _padding_amounts(kr, padding), _padding_amounts(kc, padding)
    x = np.pad(t.numpy(), ((0, 0), (pt, pb), (pl, pr_), (0, 0)))
    out_r = x.shape[1] - kr + 1
    out_c = x.shape[2] - kc + 1
    if out_r < 1 or out_c < 1:
        raise ShapeMismatch(f"kernel {kr}x{kc} larger than grid {t.shape[1]}x{t.shape[2]}")
    windows = sliding_window_view(x, (kr, kc), axis=(1, 2))  # (b, r, c, cin, kr, kc)
    out = np.tensordot(windows, k.transpose(2, 0, 1, 3), axes=3) + b

    def backward(g):
        grad = np.zeros(x.shape)
        for i in range(kr):
            for j in range(kc):
                grad[:, i:i + out_r, j:j + out_c, :] += np.einsum("brco,ko->brck", g, k[i, j])
        return (grad[:, pt:pt + t.shape[1], pl:pl + t.shape[2], :],)

    return _result(out, "conv2d_fixed", (t,), backward)


def smoothing_kernel(channels: int = 1, weights=GAUSSIAN_5X5) -> np.ndarray:
    """Per-channel smoothing kernel of shape (kr, kc, channels, channels).

    Each output channel only sees its own input channel.
    """
    kr, kc = weights.shape
    k = np.zeros((kr, kc, channels, channels))
    for c in range(channels):
        k[:, :, c, c] = weights
    return k


def gaussian_window(size: int, sigma: float) -> np.ndarray:
    """Normalized 2-D Gaussian of odd ``size`` with standard deviation ``sigma``."""
    coords = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def sobel_edges(t: GridTensor) -> tuple[GridTensor, GridTensor]:
    """Vertical (dy) and horizontal (dx) Sobel responses, zero-padded."""
    if t.shape[3] != 1:
        raise ShapeMismatch("sobel_edges expects a single-channel tensor")
    dy = conv2d_fixed(t, SOBEL_DY, padding="same")
    dx = conv2d_fixed(t, SOBEL_DX, padding="same")
    return dy, dx
