"""``gridloss`` command-line front end.

Every command prints JSON on standard output, including on failure::

    gridloss evaluate --truth obs.grd1 --pred fc.grd1 --loss mse --loss fss:mask_size=3
    gridloss gradcheck --loss dual_weighted_mse:gamma_weight=2 --trials 10 --rel-tol 1e-5
    gridloss train-demo --config demo.json
    gridloss fss-sweep --truth obs.grd1 --pred fc.grd1 --masks 1,3,5

Exit codes: 0 success, 1 gradient check failed, 2 parse/shape/config error,
3 gradient-blocked loss, 4 divergence.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import training
from .discretize import DiscretizationMode
from .errors import (
    DivergenceDetected,
    GradientBlockedLoss,
    GridLossError,
    HardModeAsLoss,
    InvalidSpec,
    ParseError,
)
from .gradcheck import DEFAULT_STEP, grad_check
from .io import read_grid
from .spatial import FssConfig, fss_score
from .specs import LossSpec
from .tensor import GridTensor

EXIT_OK, EXIT_GRADCHECK, EXIT_INPUT, EXIT_BLOCKED, EXIT_DIVERGED = 0, 1, 2, 3, 4
SEED_ENV = "GRIDLOSS_SEED"
DEFAULT_SEED = 0
KINK_GAP = 1e-3
# Pointwise gradients vanish at y_pred == y_true; keep clear of that so the
# relative error is not dominated by finite-difference rounding noise.
OPTIMUM_GAP = 0.1
# SSIM gradients at image corners are tiny (Gaussian window tails), so the
# finite-difference step is widened there to stay above rounding noise.
SSIM_STEP = 2e-4


def _float_repr(v: float) -> str:
    if not math.isfinite(v):
        return "null"
    text = format(v, ".17g")
    if text.lstrip("-").isdigit():
        text += ".0"
    return text


def _encode(obj) -> str:
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (float, np.floating)):
        return _float_repr(float(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_encode(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def dumps(obj) -> str:
    """JSON with floats written to 17 significant digits; NaN/Inf become null."""
    return _encode(obj)


def _emit(obj, out) -> None:
    out.write(dumps(obj) + "\n")


def _error(exc: BaseException, out, **extra) -> None:
    code = getattr(exc, "code", "ERROR")
    body = {"code": code, "message": str(exc)}
    body.update(extra)
    _emit({"error": body}, out)


def _seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError as exc:
        raise InvalidSpec(f"{SEED_ENV} must be an integer, got {raw!r}") from exc


# -- evaluate ---------------------------------------------------------------


def _metric_key(spec: LossSpec, seen: dict) -> str:
    seen[spec.name] = seen.get(spec.name, 0) + 1
    return spec.name if seen[spec.name] == 1 else f"{spec.name}#{seen[spec.name]}"


def cmd_evaluate(args, out) -> int:
    specs = [LossSpec.parse(s) for s in args.loss]
    truth, pred = read_grid(args.truth), read_grid(args.pred)
    result, seen = {}, {}
    for spec in specs:
        value = spec.build()(truth, pred)
        if not value.is_scalar:
            value = GridTensor.scalar(float(np.mean(value.numpy())))
        result[_metric_key(spec, seen)] = value.item()
    _emit(result, out)
    return EXIT_OK


# -- gradcheck -------------------------------------------------------------


def _away_from_kinks(rng, sample, bad, shape, tries: int = 1000):
    x = sample(shape)
    for _ in range(tries):
        mask = bad(x)
        if not mask.any():
            return x
        x = np.where(mask, sample(shape), x)
    raise RuntimeError("could not draw a kink-free point")


def _regression_point(rng, spec: LossSpec):
    shape = (2, 4, 4, 1) if spec.name == "mse_with_sobel" else (2, 3, 3, 1)
    lo = 0.0 if spec.name == "mse_weighted_exp" else -2.0
    t = rng.uniform(lo, 2.0 if lo < 0 else 1.0, shape)

    def bad(p):
        out = ((np.abs(p - t) < OPTIMUM_GAP) | (np.abs(np.abs(p) - np.abs(t)) < KINK_GAP)
               | (np.abs(p) < KINK_GAP))
        if spec.name == "dual_weighted_mse":
            out |= np.maximum(np.abs(p), np.abs(t)) < 0.5
        return out

    p = _away_from_kinks(rng, lambda s: rng.uniform(-2.0, 2.0, s), bad, shape)
    if spec.name in ("mse_supplementary_weighted", "mse_supplementary_truth"):
        suppl = rng.choice([0.0, 0.5, 1.0, 2.0], size=shape)
        t = np.concatenate([t, suppl], axis=3)
    return t, p


def _confidence_point(rng, spec: LossSpec):
    if spec.name.startswith("fss"):
        # Small fields keep pooled gradients well above finite-difference noise.
        n = max(5, int(spec.params["mask_size"]) + 2)
        shape = (1, n, n, 1)
    elif spec.name.startswith(("iou", "dice", "tversky")):
        shape = (2, 4, 4, 2)
    else:
        shape = (2, 6, 6, 1)
    t = (rng.uniform(size=shape) < 0.4).astype(np.float64)
    disc = spec.discretization

    def bad(p):
        if disc is not None and disc.mode != "none":
            return np.abs(p - disc.cutoff) < KINK_GAP
        return np.zeros(p.shape, dtype=bool)

    p = _away_from_kinks(rng, lambda s: rng.uniform(0.0, 1.0, s), bad, shape)
    return t, p


def _ssim_point(rng, spec: LossSpec):
    size = max(12, int(spec.params["filter_size"]) + 1)
    shape = (2, size, size, 1)
    L = float(spec.params["max_val"])
    return rng.uniform(0.05 * L, 0.95 * L, shape), rng.uniform(0.05 * L, 0.95 * L, shape)


def _flux_point(rng, spec: LossSpec):
    shape = (3, 1, 1, 2)
    return rng.uniform(50.0, 400.0, shape), rng.uniform(50.0, 400.0, shape)


def sample_point(spec: LossSpec, rng: np.random.Generator):
    """Random ``(y_true, y_pred)`` in the domain of ``spec``, away from kinks."""
    name = spec.name
    if name.startswith(("csi", "iou", "dice", "tversky", "fss")):
        t, p = _confidence_point(rng, spec)
    elif name.startswith("ssim"):
        t, p = _ssim_point(rng, spec)
    elif name.startswith("flux_loss"):
        t, p = _flux_point(rng, spec)
    else:
        t, p = _regression_point(rng, spec)
    return GridTensor(t), GridTensor(p)


def run_gradcheck(spec: LossSpec, trials: int, rel_tol: float, seed: int = DEFAULT_SEED) -> dict:
    """Check d loss / d y_pred against central differences on random points."""
    rng = np.random.default_rng(seed)
    fn = spec.build()
    step = SSIM_STEP if spec.name.startswith("ssim") else DEFAULT_STEP
    reports = []
    for _ in range(trials):
        y_true, y_pred = sample_point(spec, rng)
        rep = grad_check(lambda p: fn(y_true, p), [y_pred], rel_tol=rel_tol, h=step, op=spec.name)
        reports.append(rep)
        if rep.blocked:
            break
    blocked = sorted({op for r in reports for op in r.blocked_ops})
    return {
        "loss": spec.to_dict(),
        "rel_tol": rel_tol,
        "seed": seed,
        "step": step,
        "trials": [r.to_dict() for r in reports],
        "blocked_ops": blocked,
        "pass": not blocked and all(r.passed for r in reports),
    }


def cmd_gradcheck(args, out) -> int:
    if args.trials < 1:
        raise InvalidSpec("--trials must be at least 1")
    if not args.rel_tol > 0:
        raise InvalidSpec("--rel-tol must be positive")
    spec = LossSpec.parse(args.loss)
    if spec.metric_only:
        raise GradientBlockedLoss(f"{spec.name} is a count metric with no gradient", (spec.name,))
    report = run_gradcheck(spec, args.trials, args.rel_tol, _seed())
    if report["blocked_ops"]:
        ops = report["blocked_ops"]
        _error(GradientBlockedLoss(f"gradient of {spec.name} is blocked by {', '.join(ops)}", ops),
               out, blocking_ops=ops, report=report)
        return EXIT_BLOCKED
    _emit(report, out)
    return EXIT_OK if report["pass"] else EXIT_GRADCHECK


# -- train-demo ------------------------------------------------------------


def _load_array(cfg_dir: Path, value):
    if isinstance(value, str):
        return read_grid(cfg_dir / value)
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1, 1, 1)
    elif arr.ndim == 3:
        arr = arr[..., None]
    elif arr.ndim != 4:
        raise ParseError("inline data must be 1-D (one value per sample), 3-D or 4-D")
    return GridTensor(arr)


def _demo_data(cfg: dict, cfg_dir: Path, seed: int):
    data = cfg.get("data", {"kind": "blobs"})
    if not isinstance(data, dict):
        raise InvalidSpec("'data' must be an object")
    if "x" in data or "y" in data:
        return _load_array(cfg_dir, data["x"]), _load_array(cfg_dir, data["y"])
    if data.get("kind", "blobs") != "blobs":
        raise InvalidSpec(f"unknown synthetic data kind {data.get('kind')!r}")
    return training.make_blob_dataset(int(data.get("n_samples", 16)), int(data.get("size", 8)),
                                      int(data.get("blobs", 1)), int(data.get("seed", seed)))


def _demo_model(cfg: dict, x: GridTensor) -> training.ToyModel:
    m = cfg.get("model", {})
    kind = m.get("kind", "scalar")
    common = dict(use_bias=bool(m.get("use_bias", True)), smoothing=bool(m.get("smoothing", False)))
    if kind == "scalar":
        return training.ToyModel.scalar(float(m.get("w", 0.0)), float(m.get("b", 0.0)), **common)
    if kind == "per_pixel":
        _, r, c, k = x.shape
        return training.ToyModel.per_pixel(r, c, k, float(m.get("w", 0.0)), float(m.get("b", 0.0)),
                                           **common)
    raise InvalidSpec(f"unknown model kind {kind!r}")


def cmd_train_demo(args, out) -> int:
    path = Path(args.config)
    try:
        cfg = json.loads(path.read_text())
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ParseError("training config must be a JSON object")
    x, y = _demo_data(cfg, path.parent, _seed())
    model = _demo_model(cfg, x)
    train_cfg = training.TrainConfig.from_dict(
        {k: v for k, v in cfg.items() if k not in ("data", "model")})
    model, reports = training.train(model, (x, y), train_cfg)
    phase_ends = []
    for rep in reports:
        if rep.boundary is not None:
            _emit({"event": "phase_boundary", "phase": rep.phase, **rep.boundary}, out)
        _emit({"event": "epoch", **rep.to_dict()}, out)
        if not phase_ends or phase_ends[-1]["phase"] != rep.phase:
            phase_ends.append({"phase": rep.phase, "loss": rep.phase_loss, "epochs": 0})
        phase_ends[-1]["epochs"] += 1
        phase_ends[-1]["final_loss_reported"] = rep.loss_reported
    _emit({
        "event": "summary",
        "epochs": len(reports),
        "phases": phase_ends,
        "epoch_params": [rep.params for rep in reports],
        "final_params": model.describe(),
        "final_metrics": reports[-1].metrics if reports else {},
    }, out)
    return EXIT_OK


# -- fss-sweep -------------------------------------------------------------


def _parse_masks(text: str) -> list[int]:
    try:
        masks = [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise InvalidSpec(f"--masks must be comma-separated integers, got {text!r}") from exc
    if not masks:
        raise InvalidSpec("--masks is empty")
    return masks


def cmd_fss_sweep(args, out) -> int:
    masks = _parse_masks(args.masks)
    if args.mode == "hard":
        mode = DiscretizationMode.hard(args.cutoff)
    elif args.mode == "soft":
        mode = DiscretizationMode.soft(args.cutoff, args.c)
    else:
        mode = DiscretizationMode.none()
    truth, pred = read_grid(args.truth), read_grid(args.pred)
    rows = [{"mask_size": n, "fss": fss_score(truth, pred, FssConfig(n, mode)).item()} for n in masks]
    _emit({"discretization": mode.to_dict(), "sweep": rows}, out)
    return EXIT_OK


# -- entry point -----------------------------------------------------------


class _JsonArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise ParseError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _JsonArgumentParser(prog="gridloss", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_JsonArgumentParser)

    ev = sub.add_parser("evaluate", help="score a prediction grid against a truth grid")
    ev.add_argument("--truth", required=True)
    ev.add_argument("--pred", required=True)
    ev.add_argument("--loss", action="append", required=True, metavar="SPEC",
                    help="loss spec, inline JSON or name:key=val,...; repeatable")
    ev.set_defaults(func=cmd_evaluate)

    gc = sub.add_parser("gradcheck", help="compare reverse-mode and finite-difference gradients")
    gc.add_argument("--loss", required=True, metavar="SPEC")
    gc.add_argument("--trials", type=int, default=10)
    gc.add_argument("--rel-tol", type=float, default=1e-5)
    gc.set_defaults(func=cmd_gradcheck)

    td = sub.add_parser("train-demo", help="run a training schedule from a JSON config")
    td.add_argument("--config", required=True)
    td.set_defaults(func=cmd_train_demo)

    fs = sub.add_parser("fss-sweep", help="fractions skill score over several mask sizes")
    fs.add_argument("--truth", required=True)
    fs.add_argument("--pred", required=True)
    fs.add_argument("--masks", default="1,3,5")
    fs.add_argument("--mode", choices=("hard", "soft", "none"), default="hard")
    fs.add_argument("--cutoff", type=float, default=0.5)
    fs.add_argument("--c", type=float, default=10.0)
    fs.set_defaults(func=cmd_fss_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        return args.func(args, out)
    except (GradientBlockedLoss, HardModeAsLoss) as exc:
        _error(exc, out, blocking_ops=list(getattr(exc, "blocking_ops", ())))
        return EXIT_BLOCKED
    except DivergenceDetected as exc:
        _error(exc, out)
        return EXIT_DIVERGED
    except GridLossError as exc:
        _error(exc, out)
        return EXIT_INPUT
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (OSError, ValueError, RuntimeError) as exc:
        _error(exc, out, type=type(exc).__name__)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
