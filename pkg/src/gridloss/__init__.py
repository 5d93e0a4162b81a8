"""Differentiable losses and verification metrics for gridded fields."""

from . import categorical, discretize, filters, physics, regression, spatial, tensor
from .autodiff import GradientSet, Tape, backward
from .categorical import CategoricalConfig, ClassSelector, all_class_mean, csi, dice, iou, tversky
from .discretize import DiscretizationMode, hard_discretize, soft_count, soft_discretize
from .errors import GridLossError
from .gradcheck import GradCheckReport, finite_diff_grad, grad_check
from .io import read_csv_grid, read_grd1, read_grid, write_grd1
from .physics import flux_loss_constrained, flux_loss_unconstrained, flux_tensor, net_flux
from .regression import (
    combine_losses,
    dual_weighted_mse,
    mse,
    mse_fewer_misses,
    mse_supplementary_weighted,
    mse_weighted_exp,
    mse_weighted_genexp,
    mse_with_sobel,
    mse_zero_nonzero,
    rmse_by_batch,
    rmse_by_sample,
)
from .spatial import FssConfig, SsimConfig, fss_loss, fss_score, ssim, ssim_loss
from .specs import LossSpec
from .tensor import Axis, GridTensor, embed, where
from .training import MetricReport, ToyModel, TrainConfig, auto_mean_reduce, run_two_phase_demo, train

__version__ = "0.1.0"
