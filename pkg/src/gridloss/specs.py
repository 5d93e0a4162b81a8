"""Serializable loss descriptions and the name registry behind them.

A :class:`LossSpec` names a loss and carries its hyperparameters, so a fully
configured loss can travel through JSON configs and command lines. Two text
forms are accepted by :meth:`LossSpec.parse`::

    {"name": "dual_weighted_mse", "params": {"gamma_weight": 2}}
    dual_weighted_mse:gamma_weight=2
    csi.loss:mode=soft,cutoff=0.5,c=10

Discretization keys (``mode``, ``cutoff``, ``c``, ``soft_form``) may appear
flat in the shorthand or under ``"discretization"`` in JSON.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional

from . import categorical as cat
from . import physics, regression, spatial
from .discretize import DiscretizationMode
from .errors import InvalidSpec
from .tensor import GridTensor

LossFn = Callable[[GridTensor, GridTensor], GridTensor]
DISC_KEYS = ("mode", "cutoff", "c", "soft_form")
LOSS_SUFFIX = ".loss"


@dataclass(frozen=True)
class _Entry:
    build: Callable[[dict, DiscretizationMode], LossFn]
    defaults: Mapping[str, Any] = field(default_factory=dict)
    disc_default: Optional[Mapping[str, Any]] = None


def _plain(fn):
    return lambda params, disc: fn


def _with_params(fn):
    def build(params, disc):
        def loss(y_true, y_pred):
            return fn(y_true, y_pred, **params)
        loss.__name__ = fn.__name__
        return loss
    return build


def _supplementary(params, disc):
    weights = (params["w0"], params["w1"])

    def loss(y_true, y_pred):
        return regression.mse_supplementary_weighted(y_true, y_pred, weights)
    return loss


def _categorical(fn, as_loss):
    def build(params, disc):
        cfg = cat.CategoricalConfig(as_loss, disc, float(params.get("alpha", 1.0)),
                                    float(params.get("beta", 1.0)))
        extra = {k: params[k] for k in ("union", "denominator") if k in params}
        if fn is cat.csi:
            return lambda y_true, y_pred: cat.csi(y_true, y_pred, cfg)
        which = params.get("which_class", 0)
        if which == "all":
            return lambda y_true, y_pred: cat.all_class_mean(fn, y_true, y_pred, cfg, **extra)
        return lambda y_true, y_pred: fn(y_true, y_pred, int(which), cfg, **extra)
    return build


def _fss(score, as_loss):
    def build(params, disc):
        cfg = spatial.FssConfig(int(params["mask_size"]), disc, bool(params["per_sample"]), as_loss)
        fn = spatial.fss_score if score else spatial.fss_loss
        return lambda y_true, y_pred: fn(y_true, y_pred, cfg)
    return build


def _ssim(as_loss):
    def build(params, disc):
        cfg = spatial.SsimConfig(float(params["max_val"]), int(params["filter_size"]),
                                 float(params["filter_sigma"]), float(params["k1"]), float(params["k2"]))
        fn = spatial.ssim_loss if as_loss else spatial.ssim
        return lambda y_true, y_pred: fn(y_true, y_pred, cfg)
    return build


def _counter(fn):
    def build(params, disc):
        return lambda y_true, y_pred: fn(y_true, y_pred, float(params["cutoff"]))
    return build


_NONE = {"mode": "none"}
_FSS_DISC = {"mode": "soft", "cutoff": 0.5, "c": 10.0}
_SSIM_DEFAULTS = {"max_val": 1.0, "filter_size": 11, "filter_sigma": 1.5, "k1": 0.01, "k2": 0.03}
_FSS_DEFAULTS = {"mask_size": 3, "per_sample": False}

REGISTRY: dict[str, _Entry] = {
    "mse": _Entry(_plain(regression.mse)),
    "rmse_by_batch": _Entry(_plain(regression.rmse_by_batch)),
    "rmse_by_sample": _Entry(_plain(regression.rmse_by_sample)),
    "mse_weighted_exp": _Entry(_with_params(regression.mse_weighted_exp), {"exp_weight": 5.0}),
    "mse_weighted_genexp": _Entry(_with_params(regression.mse_weighted_genexp), {"genexp_weight": 1.0}),
    "dual_weighted_mse": _Entry(_with_params(regression.dual_weighted_mse), {"gamma_weight": 5.0}),
    "mse_zero_nonzero": _Entry(_with_params(regression.mse_zero_nonzero),
                               {"w_zero": 1.0, "w_nonzero": 1.0}),
    "mse_with_sobel": _Entry(_with_params(regression.mse_with_sobel), {"sobel_weight": 0.0}),
    "mse_supplementary_weighted": _Entry(_supplementary, {"w0": 1.0, "w1": 1.0}),
    "mse_supplementary_truth": _Entry(_plain(regression.mse_supplementary_truth)),
    "mse_fewer_misses": _Entry(_plain(regression.mse_fewer_misses)),
    "flux_loss_unconstrained": _Entry(_plain(physics.flux_loss_unconstrained)),
    "flux_loss_constrained": _Entry(_plain(physics.flux_loss_constrained)),
    "fss": _Entry(_fss(True, False), _FSS_DEFAULTS, _FSS_DISC),
    "fss_loss": _Entry(_fss(False, True), _FSS_DEFAULTS, _FSS_DISC),
    "ssim": _Entry(_ssim(False), _SSIM_DEFAULTS),
    "ssim_loss": _Entry(_ssim(True), _SSIM_DEFAULTS),
    "hit_count": _Entry(_counter(cat.hit_count), {"cutoff": 0.5}),
    "miss_count": _Entry(_counter(cat.miss_count), {"cutoff": 0.5}),
    "false_alarm_count": _Entry(_counter(cat.false_alarm_count), {"cutoff": 0.5}),
}

_CLASS_PARAMS = {"which_class": 0, "alpha": 1.0, "beta": 1.0}
for _name, _fn, _extra in (
    ("csi", cat.csi, {}),
    ("iou", cat.iou, {"which_class": 0, "union": "code"}),
    ("dice", cat.dice, {"which_class": 0, "denominator": "code"}),
    ("tversky", cat.tversky, _CLASS_PARAMS),
):
    REGISTRY[_name] = _Entry(_categorical(_fn, False), _extra, _NONE)
    REGISTRY[_name + LOSS_SUFFIX] = _Entry(_categorical(_fn, True), _extra, _NONE)
REGISTRY["fss.loss"] = REGISTRY["fss_loss"]
REGISTRY["ssim.loss"] = REGISTRY["ssim_loss"]

METRIC_ONLY = frozenset({"hit_count", "miss_count", "false_alarm_count"})


def _coerce(text: str):
    low = text.strip().lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        v = float(text)
    except ValueError:
        return text.strip()
    return int(v) if v.is_integer() and "." not in text and "e" not in low else v


def _check_param(name: str, key: str, value, default):
    if key == "which_class" and value == "all":
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise InvalidSpec(f"{name}: parameter {key} must be true or false")
        return value
    if isinstance(default, str):
        if not isinstance(value, str):
            raise InvalidSpec(f"{name}: parameter {key} must be a string")
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidSpec(f"{name}: parameter {key} must be a number, got {value!r}")
    if not math.isfinite(value):
        raise InvalidSpec(f"{name}: parameter {key} must be finite")
    if isinstance(default, int):
        if int(value) != value:
            raise InvalidSpec(f"{name}: parameter {key} must be an integer")
        return int(value)
    return float(value)


@dataclass(frozen=True)
class LossSpec:
    """A named, fully parameterized loss or metric."""

    name: str
    params: Mapping[str, Any] = field(default_factory=dict)
    discretization: Optional[DiscretizationMode] = None

    def __post_init__(self):
        entry = REGISTRY.get(self.name)
        if entry is None:
            raise InvalidSpec(f"unknown loss {self.name!r}; known: {', '.join(sorted(REGISTRY))}")
        unknown = set(self.params) - set(entry.defaults)
        if unknown:
            raise InvalidSpec(f"{self.name}: unknown parameters {sorted(unknown)}")
        merged = {**entry.defaults, **self.params}
        for key, v in merged.items():
            merged[key] = _check_param(self.name, key, v, entry.defaults[key])
        object.__setattr__(self, "params", merged)
        if self.discretization is not None and entry.disc_default is None:
            raise InvalidSpec(f"{self.name} does not take a discretization mode")
        if self.discretization is None and entry.disc_default is not None:
            object.__setattr__(self, "discretization", DiscretizationMode.from_dict(entry.disc_default))
        self.build()

    def build(self) -> LossFn:
        return REGISTRY[self.name].build(dict(self.params), self.discretization)

    @property
    def metric_only(self) -> bool:
        return self.name in METRIC_ONLY

    def to_dict(self) -> dict:
        d = {"name": self.name, "params": dict(self.params)}
        if self.discretization is not None:
            d["discretization"] = self.discretization.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "LossSpec":
        if not isinstance(d, Mapping) or "name" not in d:
            raise InvalidSpec("a loss spec needs a 'name'")
        unknown = set(d) - {"name", "params", "discretization"}
        if unknown:
            raise InvalidSpec(f"unknown loss spec keys: {sorted(unknown)}")
        name = str(d["name"])
        params = dict(d.get("params") or {})
        disc = dict(d.get("discretization") or {})
        own = REGISTRY[name].defaults if name in REGISTRY else {}
        for key in DISC_KEYS:
            if key in params and key not in own:
                disc[key] = params.pop(key)
        return cls(name, params, _merge_disc(name, disc))

    @classmethod
    def parse(cls, text: str) -> "LossSpec":
        text = text.strip()
        if text.startswith("{"):
            try:
                return cls.from_dict(json.loads(text))
            except json.JSONDecodeError as exc:
                raise InvalidSpec(f"invalid loss spec JSON: {exc}") from exc
        name, _, rest = text.partition(":")
        params = {}
        for item in filter(None, (s.strip() for s in rest.split(","))):
            key, eq, value = item.partition("=")
            if not eq:
                raise InvalidSpec(f"expected key=value in loss spec, got {item!r}")
            params[key.strip()] = _coerce(value)
        return cls.from_dict({"name": name.strip(), "params": params})


def _merge_disc(name: str, given: dict) -> Optional[DiscretizationMode]:
    if not given:
        return None
    entry = REGISTRY.get(name)
    if entry is None:
        raise InvalidSpec(f"unknown loss {name!r}")
    if entry.disc_default is None:
        raise InvalidSpec(f"{name} does not take a discretization mode")
    merged = {**entry.disc_default, **given}
    if merged.get("mode") != entry.disc_default.get("mode") and "c" not in given:
        merged.pop("c", None)
    return DiscretizationMode.from_dict(merged)


def combine_specs(terms) -> LossFn:
    """Weighted sum of ``(LossSpec, weight)`` terms."""
    return regression.combine_losses([(spec.build(), w) for spec, w in terms])
