import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gridloss import spatial as S
from gridloss.discretize import DiscretizationMode
from gridloss.errors import HardModeAsLoss, InvalidSpec, MaskTooLarge, RangeViolation, ShapeMismatch
from gridloss.filters import average_pool2d
from gridloss.spatial import FssConfig, SsimConfig
from gridloss.tensor import GridTensor
from oracles import fss_direct, shifted_band, ssim_direct

HARD = DiscretizationMode.hard(0.5)


def field(a):
    a = np.asarray(a, dtype=float)
    return GridTensor(a.reshape((1,) + a.shape + (1,)) if a.ndim == 2 else a)


def v(t):
    return t.item()


# -- FSS ---------------------------------------------------------------------


def test_identical_fields_soft_loss_zero(rng):
    x = field(rng.uniform(size=(6, 6)))
    assert v(S.fss_loss(x, x)) == 0.0
    assert v(S.fss_score(x, x)) == 1.0


def test_all_zero_fields_soft_loss_zero():
    z = field(np.zeros((5, 5)))
    assert v(S.fss_loss(z, z)) == pytest.approx(0.0, abs=1e-7)


def test_all_zero_fields_hard_takes_fallback_branch():
    z = field(np.zeros((5, 5)))
    cfg = FssConfig(3, HARD)
    assert v(S.fss_loss(z, z, cfg)) == 0.0
    assert v(S.fss_score(z, z, cfg)) == 1.0


def test_hard_fallback_returns_mse_when_reference_vanishes():
    # the reference term is zero only if both density fields are zero, so MSE_n is zero too
    z = field(np.zeros((4, 4)))
    assert v(S.fss_loss(z, z, FssConfig(2, HARD, per_sample=True))) == 0.0


def test_fig3_window_density():
    obs, fc, (r, c) = shifted_band()
    o = average_pool2d(field(obs), (5, 5), (1, 1)).numpy()
    m = average_pool2d(field(fc), (5, 5), (1, 1)).numpy()
    # pooled index of the window centred at P
    assert o[0, r - 2, c - 2, 0] == 3 / 25
    assert m[0, r - 2, c - 2, 0] == 3 / 25


def test_fig3_score_non_decreasing_in_mask():
    obs, fc, _ = shifted_band()
    scores = [v(S.fss_score(field(obs), field(fc), FssConfig(n, HARD))) for n in (1, 3, 5)]
    assert scores == sorted(scores)
    for n, s in zip((1, 3, 5), scores):
        assert s == pytest.approx(fss_direct(obs, fc, n), abs=1e-12)


def test_disjoint_fields_mask_one_score_zero():
    a = np.zeros((4, 4))
    a[::2] = 1.0
    assert v(S.fss_score(field(a), field(1 - a), FssConfig(1, HARD))) == 0.0


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_hard_single_sample_matches_direct_oracle(n, rng):
    for _ in range(5):
        a = (rng.uniform(size=(7, 7)) < 0.4).astype(float)
        b = (rng.uniform(size=(7, 7)) < 0.4).astype(float)
        got = v(S.fss_score(field(a), field(b), FssConfig(n, HARD)))
        assert got == pytest.approx(fss_direct(a, b, n), abs=1e-12)


def test_batch_semantics_of_default_normalization(rng):
    a = (rng.uniform(size=(3, 6, 6, 1)) < 0.5).astype(float)
    b = (rng.uniform(size=(3, 6, 6, 1)) < 0.5).astype(float)
    n = 3
    o = np.stack([_pool(a[i, :, :, 0], n) for i in range(3)])
    m = np.stack([_pool(b[i, :, :, 0], n) for i in range(3)])
    mse_n = np.mean((o - m) ** 2)
    ref = (np.sum(o ** 2) + np.sum(m ** 2)) / o[0].size
    got = v(S.fss_loss(GridTensor(a), GridTensor(b), FssConfig(n, HARD)))
    assert got == pytest.approx(mse_n / ref, rel=1e-12)
    per = np.mean([np.mean((o[i] - m[i]) ** 2) / (np.mean(o[i] ** 2) + np.mean(m[i] ** 2)) for i in range(3)])
    got_per = v(S.fss_loss(GridTensor(a), GridTensor(b), FssConfig(n, HARD, per_sample=True)))
    assert got_per == pytest.approx(per, rel=1e-12)


def _pool(x, n):
    rows, cols = x.shape
    return np.array([[x[i:i + n, j:j + n].mean() for j in range(cols - n + 1)] for i in range(rows - n + 1)])


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (2, 5, 5, 1), elements=st.sampled_from([0.0, 1.0])),
       arrays(np.float64, (2, 5, 5, 1), elements=st.sampled_from([0.0, 1.0])),
       st.integers(1, 5))
def test_hard_score_bounded_and_symmetric(a, b, n):
    a, b = GridTensor(a), GridTensor(b)
    cfg = FssConfig(n, HARD)
    ab, ba = v(S.fss_score(a, b, cfg)), v(S.fss_score(b, a, cfg))
    assert ab == ba
    assert -1e-12 <= ab <= 1.0 + 1e-12


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (1, 5, 5, 1), elements=st.floats(0, 1)),
       arrays(np.float64, (1, 5, 5, 1), elements=st.floats(0, 1)))
def test_soft_score_bounded(a, b):
    s = v(S.fss_score(GridTensor(a), GridTensor(b)))
    assert -1e-12 <= s <= 1.0 + 1e-7


def test_mask_too_large():
    with pytest.raises(MaskTooLarge):
        S.fss_loss(field(np.zeros((3, 3))), field(np.zeros((3, 3))), FssConfig(4))


def test_hard_forbidden_as_loss():
    with pytest.raises(HardModeAsLoss):
        FssConfig(3, HARD, use_as_loss=True)


@pytest.mark.parametrize("n", [0, -1, 2.5])
def test_invalid_mask(n):
    with pytest.raises(InvalidSpec):
        FssConfig(n)


def test_fss_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        S.fss_loss(field(np.zeros((4, 4))), field(np.zeros((5, 5))))


def test_fss_default_config():
    cfg = FssConfig()
    assert cfg.mask_size == 3
    assert (cfg.discretization.mode, cfg.discretization.cutoff, cfg.discretization.c) == ("soft", 0.5, 10.0)


# -- SSIM --------------------------------------------------------------------------


def test_ssim_defaults():
    cfg = SsimConfig()
    assert (cfg.filter_size, cfg.filter_sigma, cfg.k1, cfg.k2, cfg.max_val) == (11, 1.5, 0.01, 0.03, 1.0)
    assert cfg.c1 == pytest.approx(1e-4) and cfg.c2 == pytest.approx(9e-4)


def test_ssim_identity(rng):
    x = GridTensor(rng.uniform(size=(2, 14, 13, 1)))
    assert v(S.ssim(x, x)) == pytest.approx(1.0, abs=1e-12)
    assert v(S.ssim_loss(x, x)) == pytest.approx(0.0, abs=1e-12)


def test_ssim_against_zero_image_below_one(rng):
    x = GridTensor(rng.uniform(0.2, 1.0, size=(1, 12, 12, 1)))
    assert v(S.ssim(x, GridTensor(np.zeros(x.shape)))) < 1.0


def test_ssim_constant_offset_luminance_only():
    a, L = 0.4, 1.0
    b = a + L / 10
    x, y = GridTensor(np.full((1, 12, 12, 1), a)), GridTensor(np.full((1, 12, 12, 1), b))
    c1 = (0.01 * L) ** 2
    expected = (2 * a * b + c1) / (a * a + b * b + c1)
    assert v(S.ssim(x, y)) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("shape", [(11, 11), (12, 15), (16, 13)])
def test_ssim_matches_direct_oracle(shape, rng):
    x, y = rng.uniform(size=shape), rng.uniform(size=shape)
    got = v(S.ssim(field(x), field(y)))
    assert got == pytest.approx(ssim_direct(x, y), abs=1e-12)


def test_ssim_custom_range_matches_oracle(rng):
    x, y = rng.uniform(0, 255, size=(12, 12)), rng.uniform(0, 255, size=(12, 12))
    cfg = SsimConfig(max_val=255.0, filter_size=7, filter_sigma=1.0)
    got = v(S.ssim(field(x), field(y), cfg))
    assert got == pytest.approx(ssim_direct(x, y, 255.0, 7, 1.0), abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(arrays(np.float64, (1, 11, 12, 1), elements=st.floats(0, 1)),
       arrays(np.float64, (1, 11, 12, 1), elements=st.floats(0, 1)))
def test_ssim_symmetric(a, b):
    a, b = GridTensor(a), GridTensor(b)
    assert v(S.ssim(a, b)) == pytest.approx(v(S.ssim(b, a)), abs=1e-12)


def test_ssim_batch_mean(rng):
    x, y = rng.uniform(size=(2, 12, 12, 1)), rng.uniform(size=(2, 12, 12, 1))
    per = [v(S.ssim(GridTensor(x[i:i + 1]), GridTensor(y[i:i + 1]))) for i in range(2)]
    assert v(S.ssim(GridTensor(x), GridTensor(y))) == pytest.approx(np.mean(per), rel=1e-13)


@pytest.mark.parametrize("bad", [-0.1, 1.1])
def test_ssim_range_violation(bad):
    x = np.full((1, 11, 11, 1), 0.5)
    y = x.copy()
    y[0, 3, 3, 0] = bad
    with pytest.raises(RangeViolation):
        S.ssim(GridTensor(x), GridTensor(y))


@pytest.mark.parametrize("a_shape, b_shape", [
    ((1, 11, 11, 1), (1, 12, 11, 1)),  # unequal
    ((1, 11, 11, 2), (1, 11, 11, 2)),  # multi-channel
    ((1, 10, 12, 1), (1, 10, 12, 1)),  # smaller than the window
])
def test_ssim_shape_errors(a_shape, b_shape):
    with pytest.raises(ShapeMismatch):
        S.ssim(GridTensor(np.zeros(a_shape)), GridTensor(np.zeros(b_shape)))


@pytest.mark.parametrize("kwargs", [{"filter_size": 10}, {"filter_sigma": 0.0}, {"max_val": -1.0}, {"k1": 0.0}])
def test_ssim_invalid_config(kwargs):
    with pytest.raises(InvalidSpec):
        SsimConfig(**kwargs)
