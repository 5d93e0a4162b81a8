"""A small gradient-descent trainer for affine per-pixel models.

The trainer mirrors common deep-learning semantics on a model small enough to
check by hand:

* each batch is forwarded as a whole, a non-scalar loss output is reduced by
  its global mean, and the batch gradient drives one update;
* an L2 penalty ``l2_lambda * sum(w**2)`` (no factor 1/2, bias excluded) is
  added to the optimized loss but tracked separately;
* the per-epoch loss is reported either from the last batch (stateless) or
  as the batch average (stateful);
* a schedule may hold several phases with different losses, and parameters
  carry over from one phase to the next.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from . import tensor as T
from .autodiff import Tape
from .errors import (
    DivergenceDetected,
    DomainError,
    GradientBlockedLoss,
    InvalidSpec,
    NonFiniteGradient,
    NonFiniteOperand,
    ShapeMismatch,
)
from .filters import conv2d_fixed, smoothing_kernel
from .specs import LossSpec
from .tensor import GridTensor

STATELESS, STATEFUL = "stateless", "stateful"


class ToyModel:
    """``y_hat = w * smooth(x) + b`` with scalar or per-pixel parameters.

    Parameters
    ----------
    w, b : GridTensor
        Either scalars ``(1, 1, 1, 1)`` or per-pixel ``(1, rows, cols, channels)``.
    use_bias : bool
        When False the bias is fixed at zero and not trained.
    smoothing : bool
        Pass the input through the fixed 5x5 Gaussian kernel first.
    """

    def __init__(self, w: GridTensor, b: Optional[GridTensor] = None, use_bias: bool = True,
                 smoothing: bool = False):
        self.w = w
        self.b = b if b is not None else T.zeros_like(w)
        if self.b.shape != self.w.shape:
            raise ShapeMismatch("w and b must have the same shape")
        self.use_bias = use_bias
        self.smoothing = smoothing
        if self.w.size >= 1000:
            raise InvalidSpec("toy models are limited to fewer than 1000 parameters")

    @classmethod
    def scalar(cls, w: float = 0.0, b: float = 0.0, use_bias: bool = True,
               smoothing: bool = False) -> "ToyModel":
        return cls(GridTensor.scalar(w), GridTensor.scalar(b), use_bias, smoothing)

    @classmethod
    def per_pixel(cls, rows: int, cols: int, channels: int = 1, w: float = 0.0, b: float = 0.0,
                  use_bias: bool = True, smoothing: bool = False) -> "ToyModel":
        shape = (1, rows, cols, channels)
        return cls(GridTensor.filled(shape, w), GridTensor.filled(shape, b), use_bias, smoothing)

    def parameters(self) -> list[GridTensor]:
        return [self.w, self.b] if self.use_bias else [self.w]

    def with_parameters(self, params: Sequence[GridTensor]) -> "ToyModel":
        w = params[0]
        b = params[1] if self.use_bias else self.b
        return ToyModel(w, b, self.use_bias, self.smoothing)

    def _expand(self, p: GridTensor, batch: int) -> GridTensor:
        return p if p.is_scalar or batch == 1 else T.repeat_batch(p, batch)

    def __call__(self, x: GridTensor) -> GridTensor:
        if not self.w.is_scalar and x.shape[1:] != self.w.shape[1:]:
            raise ShapeMismatch(f"per-pixel model of shape {self.w.shape} got input {x.shape}")
        if self.smoothing:
            x = conv2d_fixed(x, smoothing_kernel(x.shape[3]), padding="same")
        out = self._expand(self.w, x.shape[0]) * x
        if self.use_bias:
            out = out + self._expand(self.b, x.shape[0])
        return out

    def describe(self) -> dict:
        def value(p):
            return p.item() if p.is_scalar else p.numpy()[0].tolist()
        d = {"w": value(self.w)}
        if self.use_bias:
            d["b"] = value(self.b)
        return d


def _as_spec(s) -> LossSpec:
    if isinstance(s, LossSpec):
        return s
    if isinstance(s, dict):
        return LossSpec.from_dict(s)
    return LossSpec.parse(str(s))


@dataclass
class TrainConfig:
    batch_size: int = 1
    learning_rate: float = 0.01
    l2_lambda: float = 0.0
    phases: list = field(default_factory=list)
    metrics: list = field(default_factory=list)
    loss_reporting: str = STATELESS

    def __post_init__(self):
        if not self.phases:
            raise InvalidSpec("at least one training phase is required")
        self.phases = [(_as_spec(s), int(n)) for s, n in self.phases]
        for spec, n in self.phases:
            if n < 0:
                raise InvalidSpec("phase epochs must be non-negative")
            if spec.metric_only:
                raise InvalidSpec(f"{spec.name} is a metric and cannot be trained on")
        self.metrics = [_as_spec(m) for m in self.metrics]
        if self.batch_size < 1:
            raise InvalidSpec("batch_size must be at least 1")
        if not (math.isfinite(self.learning_rate) and self.learning_rate >= 0):
            raise InvalidSpec("learning_rate must be finite and non-negative")
        if not (math.isfinite(self.l2_lambda) and self.l2_lambda >= 0):
            raise InvalidSpec("l2_lambda must be finite and non-negative")
        if self.loss_reporting not in (STATELESS, STATEFUL):
            raise InvalidSpec(f"loss_reporting must be {STATELESS!r} or {STATEFUL!r}")

    @classmethod
    def single(cls, loss, epochs: int, **kwargs) -> "TrainConfig":
        return cls(phases=[(loss, epochs)], **kwargs)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {"batch_size", "epochs", "learning_rate", "l2_lambda", "loss", "phases",
                 "metrics", "loss_reporting"}
        unknown = set(d) - known
        if unknown:
            raise InvalidSpec(f"unknown training config keys: {sorted(unknown)}")
        if "phases" in d:
            phases = [(p["loss"], p.get("epochs", 1)) for p in d["phases"]]
        elif "loss" in d:
            phases = [(d["loss"], d.get("epochs", 1))]
        else:
            phases = []
        return cls(
            batch_size=int(d.get("batch_size", 1)),
            learning_rate=float(d.get("learning_rate", 0.01)),
            l2_lambda=float(d.get("l2_lambda", 0.0)),
            phases=phases,
            metrics=list(d.get("metrics", [])),
            loss_reporting=str(d.get("loss_reporting", STATELESS)),
        )

    @property
    def epochs(self) -> int:
        return sum(n for _, n in self.phases)


@dataclass
class MetricReport:
    """One epoch of training.

    ``loss_reported`` follows the reporting mode and includes the penalty.
    ``pure_loss``, ``l2_penalty`` and ``combined_loss`` are batch averages
    kept side by side so the penalty can be separated from the loss.
    ``metrics`` are evaluated on the full data set after the epoch.
    """

    phase: int
    phase_loss: str
    epoch: int
    phase_epoch: int
    reporting: str
    loss_reported: float
    pure_loss: float
    l2_penalty: float
    combined_loss: float
    batch_losses: list
    metrics: dict
    params: dict
    auto_reduced: bool = False
    boundary: Optional[dict] = None

    def to_dict(self) -> dict:
        d = {
            "phase": self.phase,
            "phase_loss": self.phase_loss,
            "epoch": self.epoch,
            "phase_epoch": self.phase_epoch,
            "reporting": self.reporting,
            "loss_reported": self.loss_reported,
            "pure_loss": self.pure_loss,
            "l2_penalty": self.l2_penalty,
            "combined_loss": self.combined_loss,
            "batch_losses": list(self.batch_losses),
            "metrics": dict(self.metrics),
            "params": self.params,
            "auto_reduced": self.auto_reduced,
        }
        if self.boundary is not None:
            d["boundary"] = dict(self.boundary)
        return d


def auto_mean_reduce(loss_output: GridTensor) -> tuple[GridTensor, bool]:
    """Reduce a loss output to a scalar by its global mean.

    Returns the scalar and a flag that is True when a reduction happened, so
    a silently non-scalar loss does not go unnoticed.
    """
    if loss_output.is_scalar:
        return loss_output, False
    return T.reduce_mean(loss_output), True


def l2_penalty(model: ToyModel, l2_lambda: float) -> GridTensor:
    return l2_lambda * T.reduce_sum(T.square(model.w))


def _step_quantities(model, loss_fn, x, y, l2_lambda):
    pred = model(x)
    pure, reduced = auto_mean_reduce(loss_fn(y, pred))
    penalty = l2_penalty(model, l2_lambda)
    return pure, penalty, pure + penalty, reduced


def batch_gradient(model: ToyModel, loss, x: GridTensor, y: GridTensor, l2_lambda: float = 0.0):
    """Gradient of ``loss + penalty`` on one batch, as a list per parameter."""
    loss_fn = _as_spec(loss).build() if not callable(loss) else loss
    params = model.parameters()
    with Tape() as tape:
        for p in params:
            tape.watch(p)
        _, _, combined, _ = _step_quantities(model, loss_fn, x, y, l2_lambda)
    grads = tape.gradient(combined, params)
    if grads.blocked:
        raise _blocked(grads.blocked_ops)
    return [grads[p] for p in params]


def _blocked(ops) -> GradientBlockedLoss:
    return GradientBlockedLoss(f"loss gradient is blocked by {', '.join(ops)}", ops)


def _batches(n: int, batch_size: int):
    for start in range(0, n, batch_size):
        yield start, min(start + batch_size, n)


def _evaluate(model, spec: LossSpec, x, y) -> float:
    value, _ = auto_mean_reduce(spec.build()(y, model(x)))
    return value.item()


def _metric_names(specs):
    names, seen = [], {}
    for s in specs:
        seen[s.name] = seen.get(s.name, 0) + 1
        names.append(s.name if seen[s.name] == 1 else f"{s.name}#{seen[s.name]}")
    return names


def train(model: ToyModel, data: tuple[GridTensor, GridTensor], cfg: TrainConfig):
    """Run every phase of ``cfg`` in order and return ``(model, reports)``.

    Raises
    ------
    GradientBlockedLoss
        The loss of some phase passes through a non-differentiable op.
    DivergenceDetected
        A loss, gradient or parameter became non-finite.
    """
    x, y = data
    n = x.shape[0]
    if y.shape[0] != n:
        raise ShapeMismatch(f"x has {n} samples but y has {y.shape[0]}")
    if cfg.batch_size > n:
        raise InvalidSpec(f"batch_size {cfg.batch_size} exceeds dataset size {n}")
    metric_names = _metric_names(cfg.metrics)
    reports: list[MetricReport] = []
    epoch = 0
    prev_spec = None

    for phase_idx, (spec, phase_epochs) in enumerate(cfg.phases):
        loss_fn = spec.build()
        boundary = None
        if prev_spec is not None and phase_epochs > 0:
            boundary = {
                "from": prev_spec.name,
                "to": spec.name,
                "previous_loss": _safe_eval(model, prev_spec, x, y),
                "next_loss": _safe_eval(model, spec, x, y),
                "params": model.describe(),
                "params_reset": False,
                "optimizer_state_reset": True,
            }
        for phase_epoch in range(1, phase_epochs + 1):
            epoch += 1
            pures, penalties, combined, any_reduced = [], [], [], False
            for start, stop in _batches(n, cfg.batch_size):
                xb, yb = T.batch_slice(x, start, stop), T.batch_slice(y, start, stop)
                model, q = _train_step(model, loss_fn, xb, yb, cfg)
                pures.append(q[0])
                penalties.append(q[1])
                combined.append(q[2])
                any_reduced = any_reduced or q[3]
            reported = combined[-1] if cfg.loss_reporting == STATELESS else float(np.mean(combined))
            metrics = {name: _safe_eval(model, m, x, y) for name, m in zip(metric_names, cfg.metrics)}
            reports.append(MetricReport(
                phase=phase_idx + 1,
                phase_loss=spec.name,
                epoch=epoch,
                phase_epoch=phase_epoch,
                reporting=cfg.loss_reporting,
                loss_reported=reported,
                pure_loss=float(np.mean(pures)),
                l2_penalty=float(np.mean(penalties)),
                combined_loss=float(np.mean(combined)),
                batch_losses=combined,
                metrics=metrics,
                params=model.describe(),
                auto_reduced=any_reduced,
                boundary=boundary if phase_epoch == 1 else None,
            ))
        if phase_epochs > 0:
            prev_spec = spec
    return model, reports


def _safe_eval(model, spec, x, y) -> float:
    with np.errstate(all="ignore"):
        try:
            return _evaluate(model, spec, x, y)
        except (NonFiniteOperand, DomainError) as exc:
            raise DivergenceDetected(f"{spec.name} could not be evaluated: {exc}") from exc


def _train_step(model, loss_fn, xb, yb, cfg):
    params = model.parameters()
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        try:
            with Tape() as tape:
                for p in params:
                    tape.watch(p)
                pure, penalty, combined, reduced = _step_quantities(model, loss_fn, xb, yb, cfg.l2_lambda)
            values = (pure.item(), penalty.item(), combined.item())
            if not all(math.isfinite(v) for v in values):
                raise DivergenceDetected(f"non-finite loss {values[2]!r}")
            grads = tape.gradient(combined, params)
            if grads.blocked:
                raise _blocked(grads.blocked_ops)
            new = [GridTensor(p.numpy() - cfg.learning_rate * grads[p].numpy()) for p in params]
        except (NonFiniteGradient, NonFiniteOperand) as exc:
            raise DivergenceDetected(str(exc)) from exc
    return model.with_parameters(new), values + (reduced,)


# -- two-phase demo -------------------------------------------------------


def make_blob_dataset(n_samples: int = 16, size: int = 8, blobs: int = 1, seed: int = 0):
    """Sparse positive blobs on a zero background, with a separable predictor.

    Truth is 1 inside each 2x2 blob and 0 elsewhere. The predictor ``x`` is
    drawn from [0.6, 1] on blob pixels and from [0, 0.4] elsewhere, so a
    threshold on ``x`` separates the classes exactly.
    """
    rng = np.random.default_rng(seed)
    y = np.zeros((n_samples, size, size, 1))
    for i in range(n_samples):
        for _ in range(blobs):
            r, c = rng.integers(0, size - 1, size=2)
            y[i, r:r + 2, c:c + 2, 0] = 1.0
    x = np.where(y > 0, rng.uniform(0.6, 1.0, y.shape), rng.uniform(0.0, 0.4, y.shape))
    return GridTensor(x), GridTensor(y)


DEMO_METRICS = ("mse", "mse_fewer_misses", "miss_count", "hit_count", "false_alarm_count",
                "csi:mode=hard")


def run_two_phase_demo(data=None, phase1_epochs: int = 20, phase2_epochs: int = 20,
                       learning_rate: float = 0.5, batch_size: int = 4, l2_lambda: float = 0.0,
                       loss_reporting: str = STATEFUL, model: Optional[ToyModel] = None,
                       metrics: Sequence[Any] = DEMO_METRICS) -> list[MetricReport]:
    """Train with plain MSE, then continue from the same weights with a miss penalty."""
    if data is None:
        data = make_blob_dataset()
    cfg = TrainConfig(
        batch_size=batch_size,
        learning_rate=learning_rate,
        l2_lambda=l2_lambda,
        phases=[("mse", phase1_epochs), ("mse_fewer_misses", phase2_epochs)],
        metrics=list(metrics),
        loss_reporting=loss_reporting,
    )
    _, reports = train(model or ToyModel.scalar(), data, cfg)
    return reports
