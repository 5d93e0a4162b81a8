import time

import numpy as np
import pytest

from gridloss import tensor as T
from gridloss.discretize import hard_discretize
from gridloss.errors import DivergenceDetected, GradientBlockedLoss, InvalidSpec, ShapeMismatch
from gridloss.regression import mse, squared_error
from gridloss.tensor import GridTensor
from gridloss.training import (
    ToyModel,
    TrainConfig,
    auto_mean_reduce,
    batch_gradient,
    l2_penalty,
    make_blob_dataset,
    run_two_phase_demo,
    train,
)


def column(values):
    return GridTensor(np.asarray(values, dtype=float).reshape(-1, 1, 1, 1))


# -- auto-mean ---------------------------------------------------------------


def test_scalar_passes_through():
    s = GridTensor.scalar(2.5)
    out, flagged = auto_mean_reduce(s)
    assert out.item() == 2.5 and not flagged


def test_squared_errors_reduce_to_mse(rng):
    t, p = GridTensor(rng.normal(size=(2, 3, 3, 1))), GridTensor(rng.normal(size=(2, 3, 3, 1)))
    out, flagged = auto_mean_reduce(squared_error(t, p))
    assert flagged and out.item() == pytest.approx(mse(t, p).item(), rel=1e-15)


def test_constant_tensor_reduces_with_flag():
    out, flagged = auto_mean_reduce(GridTensor.filled((2, 2, 2, 1), 0.7))
    assert flagged and out.item() == pytest.approx(0.7, rel=1e-15)


# -- single steps ---------------------------------------------------------------


def test_closed_form_step():
    model = ToyModel.scalar(0.0, use_bias=False)
    cfg = TrainConfig.single("mse", 1, batch_size=1, learning_rate=0.1)
    model, reports = train(model, (column([1.0]), column([2.0])), cfg)
    assert abs(model.w.item() - 0.4) <= 1e-12
    assert reports[0].params == {"w": model.w.item()}


def test_zero_learning_rate_keeps_parameters(rng):
    x, y = column(rng.normal(size=6)), column(rng.normal(size=6))
    cfg = TrainConfig.single("mse", 4, batch_size=3, learning_rate=0.0)
    model, reports = train(ToyModel.scalar(0.3, 0.1), (x, y), cfg)
    assert (model.w.item(), model.b.item()) == (0.3, 0.1)
    assert len({r.loss_reported for r in reports}) == 1


def test_batch_gradient_is_mean_of_sample_gradients(rng):
    x = GridTensor(rng.normal(size=(4, 3, 3, 1)))
    y = GridTensor(rng.normal(size=(4, 3, 3, 1)))
    model = ToyModel.per_pixel(3, 3, w=0.2, b=-0.1)
    whole = batch_gradient(model, "mse", x, y)
    singles = [batch_gradient(model, "mse", T.batch_slice(x, i, i + 1), T.batch_slice(y, i, i + 1))
               for i in range(4)]
    for k in range(2):
        mean = np.mean([s[k].numpy() for s in singles], axis=0)
        assert np.allclose(whole[k].numpy(), mean, rtol=1e-12, atol=1e-15)


def test_l2_penalty_excludes_bias():
    model = ToyModel.per_pixel(2, 2, w=0.5, b=3.0)
    assert l2_penalty(model, 0.1).item() == pytest.approx(0.1 * 4 * 0.25, rel=1e-15)
    grads = batch_gradient(model, "mse", GridTensor(np.zeros((1, 2, 2, 1))),
                           GridTensor(np.full((1, 2, 2, 1), 3.0)), l2_lambda=0.1)
    # zero input and perfect bias: only the penalty pulls on w, nothing on b
    assert np.allclose(grads[0].numpy(), 2 * 0.1 * 0.5)
    assert np.array_equal(grads[1].numpy(), np.zeros((1, 2, 2, 1)))


# -- epoch reporting -------------------------------------------------------------


def test_combined_minus_penalty_equals_pure_loss(rng):
    x, y = make_blob_dataset(8, 6, seed=3)
    cfg = TrainConfig.single("mse", 6, batch_size=3, learning_rate=0.3, l2_lambda=0.05,
                             metrics=["mse"], loss_reporting="stateful")
    _, reports = train(ToyModel.scalar(0.2), (x, y), cfg)
    for r in reports:
        assert abs((r.combined_loss - r.l2_penalty) - r.pure_loss) <= 1e-12
        assert r.l2_penalty > 0


def test_stateless_and_stateful_definitions():
    # two batches with different losses; lr 0 keeps them fixed
    x, y = column([1.0, 1.0]), column([1.0, 3.0])
    runs = {}
    for mode in ("stateless", "stateful"):
        cfg = TrainConfig.single("mse", 1, batch_size=1, learning_rate=0.0, loss_reporting=mode)
        _, reports = train(ToyModel.scalar(1.0, use_bias=False), (x, y), cfg)
        runs[mode] = reports[0]
    assert runs["stateless"].batch_losses == [0.0, 4.0]
    assert runs["stateless"].loss_reported == 4.0
    assert runs["stateful"].loss_reported == 2.0


def test_reporting_modes_agree_on_single_batch(rng):
    x, y = column(rng.normal(size=4)), column(rng.normal(size=4))
    values = []
    for mode in ("stateless", "stateful"):
        cfg = TrainConfig.single("mse", 3, batch_size=4, learning_rate=0.1, loss_reporting=mode)
        _, reports = train(ToyModel.scalar(), (x, y), cfg)
        values.append([r.loss_reported for r in reports])
    assert values[0] == values[1]


def test_stateful_is_mean_and_stateless_is_last(rng):
    x, y = column(rng.normal(size=9)), column(rng.normal(size=9))
    for mode in ("stateless", "stateful"):
        cfg = TrainConfig.single("mse", 3, batch_size=4, learning_rate=0.1, loss_reporting=mode)
        _, reports = train(ToyModel.scalar(), (x, y), cfg)
        for r in reports:
            assert len(r.batch_losses) == 3
            expected = r.batch_losses[-1] if mode == "stateless" else np.mean(r.batch_losses)
            assert r.loss_reported == expected


# -- failures ------------------------------------------------------------------


def test_hard_metric_as_phase_loss_is_blocked():
    x, y = make_blob_dataset(4, 4)
    cfg = TrainConfig.single("csi:mode=hard", 1, batch_size=2)
    with pytest.raises(GradientBlockedLoss) as err:
        train(ToyModel.scalar(0.5), (x, y), cfg)
    assert "hard_discretize" in err.value.blocking_ops


def test_callable_with_blocked_op():
    x, y = column([0.2, 0.8]), column([0.0, 1.0])
    with pytest.raises(GradientBlockedLoss):
        batch_gradient(ToyModel.scalar(1.0), lambda t, p: mse(t, hard_discretize(p)), x, y)


def test_divergence_detected():
    x, y = column([1e3, -1e3]), column([1.0, 2.0])
    cfg = TrainConfig.single("mse", 200, batch_size=2, learning_rate=10.0)
    with pytest.raises(DivergenceDetected):
        train(ToyModel.scalar(1.0), (x, y), cfg)


@pytest.mark.parametrize("kwargs", [
    {"phases": []}, {"phases": [("mse", -1)]}, {"phases": [("miss_count", 1)]},
    {"phases": [("mse", 1)], "batch_size": 0}, {"phases": [("mse", 1)], "learning_rate": -1.0},
    {"phases": [("mse", 1)], "l2_lambda": float("nan")}, {"phases": [("mse", 1)], "loss_reporting": "x"},
])
def test_invalid_configs(kwargs):
    with pytest.raises(InvalidSpec):
        TrainConfig(**kwargs)


def test_batch_larger_than_data():
    with pytest.raises(InvalidSpec):
        train(ToyModel.scalar(), (column([1.0]), column([1.0])), TrainConfig.single("mse", 1, batch_size=2))


def test_per_pixel_shape_check():
    with pytest.raises(ShapeMismatch):
        ToyModel.per_pixel(2, 2)(GridTensor(np.zeros((1, 3, 3, 1))))


def test_parameter_limit():
    with pytest.raises(InvalidSpec):
        ToyModel.per_pixel(40, 40)


def test_config_from_dict():
    cfg = TrainConfig.from_dict({"phases": [{"loss": "mse", "epochs": 2},
                                            {"loss": {"name": "mse_fewer_misses"}, "epochs": 3}],
                                 "batch_size": 2, "metrics": ["miss_count"]})
    assert cfg.epochs == 5 and [s.name for s, _ in cfg.phases] == ["mse", "mse_fewer_misses"]
    with pytest.raises(InvalidSpec):
        TrainConfig.from_dict({"loss": "mse", "optimizer": "adam"})


# -- phases --------------------------------------------------------------------


def test_phases_do_not_reset_parameters():
    x, y = make_blob_dataset(8, 6)
    cfg = TrainConfig(batch_size=4, learning_rate=0.5, phases=[("mse", 3), ("mse_fewer_misses", 2)])
    _, reports = train(ToyModel.scalar(), (x, y), cfg)
    second = reports[3]
    assert second.phase == 2 and second.boundary is not None
    assert second.boundary["params"] == reports[2].params
    assert second.boundary["params_reset"] is False


def test_zero_second_phase_reduces_to_single_phase():
    data = make_blob_dataset()
    two = run_two_phase_demo(data, phase1_epochs=5, phase2_epochs=0)
    cfg = TrainConfig.single("mse", 5, batch_size=4, learning_rate=0.5, loss_reporting="stateful")
    _, one = train(ToyModel.scalar(), data, cfg)
    assert [r.params for r in two] == [r.params for r in one]
    assert all(r.boundary is None for r in two)


def test_two_phase_demo():
    start = time.perf_counter()
    reports = run_two_phase_demo()
    elapsed = time.perf_counter() - start
    assert elapsed < 30
    phase2 = [r for r in reports if r.phase == 2]
    boundary = phase2[0].boundary
    last_phase1 = [r for r in reports if r.phase == 1][-1]
    assert boundary["previous_loss"] == pytest.approx(last_phase1.metrics["mse"], rel=1e-14)
    assert boundary["next_loss"] >= boundary["previous_loss"]
    misses = [r.metrics["miss_count"] for r in phase2]
    assert all(b <= a for a, b in zip(misses, misses[1:]))
    assert misses[-1] < last_phase1.metrics["miss_count"]
