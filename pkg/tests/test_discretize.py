import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gridloss.discretize import DiscretizationMode, hard_discretize, soft_count, soft_discretize
from gridloss.errors import InvalidSpec, OutOfRange
from gridloss.tensor import GridTensor, embed


def values(t):
    return t.numpy().ravel()


def S(x):
    return 1.0 / (1.0 + math.exp(-x))


def test_hard_uses_strict_inequality():
    assert np.array_equal(values(hard_discretize(embed([0.2, 0.5, 0.9]), 0.5)), [0, 0, 1])


def test_hard_all_below():
    assert not values(hard_discretize(embed([0.1, 0.3]), 0.5)).any()


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 6, elements=st.floats(-2, 2)), st.floats(0.01, 0.99))
def test_hard_is_idempotent(x, cutoff):
    once = hard_discretize(embed(x), cutoff)
    assert np.array_equal(hard_discretize(once, cutoff).numpy(), once.numpy())


def test_soft_at_cutoff_is_half():
    assert values(soft_discretize(embed([0.37]), 0.37, 7.0))[0] == 0.5


def test_soft_known_value():
    assert values(soft_discretize(embed([1.0]), 0.5, 10.0))[0] == pytest.approx(0.993307, abs=1e-6)


def test_soft_converges_to_hard():
    p = embed([0.1, 0.45, 0.55, 0.9])
    gaps = [np.abs(values(soft_discretize(p, 0.5, c)) - values(hard_discretize(p, 0.5))).max()
            for c in (10, 100, 1000)]
    assert gaps[0] > gaps[1] > gaps[2] and gaps[2] < 1e-20


@pytest.mark.parametrize("c", [1.0, 5.0, 10.0, 50.0])
def test_soft_hard_gap_bound(c, rng):
    delta = 0.05
    p = rng.uniform(0, 1, 200)
    p = p[np.abs(p - 0.5) >= delta]
    gap = np.abs(values(soft_discretize(embed(p), 0.5, c)) - values(hard_discretize(embed(p), 0.5)))
    assert gap.max() <= S(-c * delta) + 1e-15


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 8, elements=st.floats(-1, 2)), st.floats(0.05, 20))
def test_soft_strictly_inside_unit_interval(x, c):
    # float64 sigmoid saturates to exactly 0 or 1 once |argument| exceeds ~36
    out = values(soft_discretize(embed(x), 0.5, c))
    assert np.all((out > 0) & (out < 1))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 8, elements=st.floats(-1e6, 1e6)), st.floats(0.05, 1e3))
def test_soft_within_closed_unit_interval(x, c):
    out = values(soft_discretize(embed(x), 0.5, c))
    assert np.all((out >= 0) & (out <= 1))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 8, elements=st.floats(0, 1)), arrays(np.float64, 8, elements=st.floats(0, 1)))
def test_every_mode_is_monotone(a, b):
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    for mode in (DiscretizationMode.hard(), DiscretizationMode.soft(c=10), DiscretizationMode.none()):
        assert np.all(values(mode.apply(embed(lo))) <= values(mode.apply(embed(hi))))


def test_count_hard():
    assert soft_count(embed([0.9, 0.9, 0.1]), DiscretizationMode.hard()).item() == 2.0


def test_count_none():
    assert soft_count(embed([0.5, 0.5]), DiscretizationMode.none()).item() == 1.0


def test_count_soft():
    got = soft_count(embed([0.9, 0.9, 0.1]), DiscretizationMode.soft(0.5, 10.0)).item()
    assert got == pytest.approx(2 * S(4) + S(-4), rel=1e-12)
    assert got == pytest.approx(1.982, abs=1e-3)


def test_count_none_rejects_out_of_range():
    with pytest.raises(OutOfRange):
        soft_count(embed([0.5, 1.5]), DiscretizationMode.none())


def test_raw_sigmoid_form_ignores_cutoff():
    mode = DiscretizationMode.soft(0.8, 3.0, soft_form="raw_sigmoid")
    assert values(mode.apply(embed([0.0])))[0] == 0.5


@pytest.mark.parametrize("kwargs", [
    {"mode": "hard", "cutoff": 0.0}, {"mode": "hard", "cutoff": 1.0},
    {"mode": "soft", "c": 0.0}, {"mode": "soft", "c": float("inf")},
    {"mode": "fuzzy"}, {"mode": "soft", "soft_form": "tanh"},
])
def test_invalid_modes(kwargs):
    with pytest.raises(InvalidSpec):
        DiscretizationMode(**kwargs)


def test_defaults():
    m = DiscretizationMode.soft()
    assert (m.cutoff, m.c) == (0.5, 1.0)


@pytest.mark.parametrize("mode", [
    DiscretizationMode.hard(0.3), DiscretizationMode.soft(0.4, 12.0), DiscretizationMode.none(),
    DiscretizationMode.soft(0.5, 2.0, "raw_sigmoid"),
])
def test_dict_round_trip(mode):
    assert DiscretizationMode.from_dict(mode.to_dict()) == mode


def test_from_dict_unknown_key():
    with pytest.raises(InvalidSpec):
        DiscretizationMode.from_dict({"mode": "hard", "threshold": 0.5})


def test_mode_accepts_grid_tensor_shapes():
    p = GridTensor(np.full((2, 3, 3, 2), 0.7))
    assert DiscretizationMode.hard().apply(p).shape == p.shape
