import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inactive_tse.losses import (
    LossConfig,
    LossDomainError,
    check_gradient,
    is_absent,
    loss_active,
    loss_composite,
    loss_inactive,
    loss_si_snr,
)


def unit(x):
    return x / np.linalg.norm(x)


def direct_active(est, ref, tau):
    return -10 * math.log10(np.sum(ref ** 2) / (np.sum((ref - est) ** 2) + tau * np.sum(ref ** 2)))


def direct_inactive(est, mix, tau):
    return 10 * math.log10(np.sum(est ** 2) + tau * np.sum(mix ** 2))


def test_config_validation():
    for bad in (dict(tau_active=0.0), dict(tau_active=1.0), dict(tau_inactive=-1.0), dict(epsilon_floor=0.0)):
        with pytest.raises(ValueError):
            LossConfig(**bad)


def test_active_anchors():
    ref = np.random.default_rng(0).normal(size=64)
    assert abs(loss_active(ref, ref).value - (-30.0)) < 1e-9
    assert abs(loss_active(np.zeros(64), ref).value - (-10 * math.log10(1 / 1.001))) < 1e-12
    assert abs(loss_active(np.zeros(64), ref).value - 0.004341) < 1e-6


def test_active_zero_reference():
    with pytest.raises(LossDomainError, match="active loss undefined for zero reference"):
        loss_active(np.ones(8), np.zeros(8))


def test_inactive_anchors():
    y = unit(np.random.default_rng(1).normal(size=64))
    assert abs(loss_inactive(np.zeros(64), y).value - (-20.0)) < 1e-9
    assert abs(loss_inactive(y, y).value - 10 * math.log10(1.01)) < 1e-12
    assert abs(loss_inactive(y, y).value - 0.0432) < 1e-4
    with pytest.raises(LossDomainError):
        loss_inactive(np.ones(8), np.zeros(8))


def test_composite_anchors():
    rng = np.random.default_rng(2)
    ref, y = rng.normal(size=32), unit(rng.normal(size=32))
    assert abs(loss_composite(ref, ref, y).value + 30.0) < 1e-9
    assert abs(loss_composite(np.zeros(32), None, y).value + 20.0) < 1e-9
    assert abs(loss_composite(np.zeros(32), np.zeros(32), y).value + 20.0) < 1e-9


def test_composite_dispatch_matches_direct_formulas():
    rng = np.random.default_rng(3)
    for i in range(100):
        n = int(rng.integers(4, 80))
        est, mix = rng.normal(size=n), rng.normal(size=n)
        present = rng.random() < 0.5
        ref = rng.normal(size=n) if present else (None if i % 2 else np.zeros(n))
        got = loss_composite(est, ref, mix).value
        want = direct_active(est, ref, 1e-3) if present else direct_inactive(est, mix, 1e-2)
        assert abs(got - want) < 1e-9


def test_is_absent():
    assert is_absent(None)
    assert is_absent(np.zeros(5))
    assert not is_absent(np.eye(1, 5)[0])


def test_lower_bounds_attained():
    rng = np.random.default_rng(4)
    ref, y = rng.normal(size=50), rng.normal(size=50)
    for _ in range(200):
        est = rng.normal(size=50) * rng.uniform(0, 3)
        assert loss_active(est, ref).value >= -30.0 - 1e-12
        assert loss_inactive(est, y).value >= 10 * math.log10(1e-2 * np.sum(y ** 2)) - 1e-12
    assert loss_inactive(np.zeros(50), y).value == pytest.approx(10 * math.log10(1e-2 * np.sum(y ** 2)), abs=1e-12)


def test_active_scale_dependence():
    x = np.random.default_rng(5).normal(size=64)
    lo = [loss_active(a * x, x).value for a in np.linspace(0.01, 0.99, 50)]
    hi = [loss_active(a * x, x).value for a in np.linspace(1.01, 1.99, 50)]
    assert np.all(np.diff(lo) < 0)
    assert np.all(np.diff(hi) > 0)


def test_si_snr_scale_invariance():
    rng = np.random.default_rng(6)
    ref = rng.normal(size=128)
    est = ref + 0.3 * rng.normal(size=128)
    assert loss_si_snr(2 * ref, ref).value == pytest.approx(loss_si_snr(ref, ref).value, abs=1e-9)
    base = loss_si_snr(est, ref).value
    for a in (0.1, 3.7):
        assert abs(loss_si_snr(a * est, ref).value - base) < 1e-9


def test_si_snr_orthogonal_capped():
    t = np.arange(64)
    ref = np.sin(2 * np.pi * 3 * t / 64)
    est = np.cos(2 * np.pi * 3 * t / 64)
    assert loss_si_snr(est, ref).value == 120.0
    assert not np.any(loss_si_snr(est, ref).gradient)


def test_si_snr_errors():
    with pytest.raises(LossDomainError):
        loss_si_snr(np.ones(8), np.zeros(8))
    # constant estimate is zero after centering
    with pytest.raises(LossDomainError):
        loss_si_snr(np.ones(8), np.arange(8.0))


def test_length_mismatch():
    with pytest.raises(ValueError):
        loss_active(np.ones(8), np.ones(9))


def test_batched_matches_loop():
    rng = np.random.default_rng(7)
    est, ref = rng.normal(size=(4, 3, 32)), rng.normal(size=(4, 3, 32))
    batch = loss_active(est, ref)
    for i in range(4):
        for j in range(3):
            one = loss_active(est[i, j], ref[i, j])
            assert batch.value[i, j] == pytest.approx(one.value, rel=1e-13)
            assert np.allclose(batch.gradient[i, j], one.gradient, rtol=1e-12)


def test_gradient_closed_forms():
    rng = np.random.default_rng(8)
    est, ref, mix = rng.normal(size=(3, 16))
    ln10 = math.log(10)
    denom = np.sum((ref - est) ** 2) + 1e-3 * np.sum(ref ** 2)
    assert np.allclose(loss_active(est, ref).gradient, 20 / ln10 * (est - ref) / denom, rtol=1e-12)
    arg = np.sum(est ** 2) + 1e-2 * np.sum(mix ** 2)
    assert np.allclose(loss_inactive(est, mix).gradient, 20 / ln10 * est / arg, rtol=1e-12)


def test_check_gradient_examples():
    rng = np.random.default_rng(9)
    est, ref, mix = rng.normal(size=(3, 64))
    assert check_gradient(loss_active, est, ref) < 1e-5
    assert check_gradient(loss_inactive, est, mix) < 1e-5
    assert check_gradient(loss_si_snr, est, ref) < 1e-4
    # the gradient vanishes at the optimum
    assert not np.any(loss_active(ref, ref).gradient)
    assert check_gradient(loss_active, ref, ref) < 1e-4


def test_check_gradient_detects_wrong_gradient():
    rng = np.random.default_rng(10)
    est, ref = rng.normal(size=(2, 32))

    def bad(e, r):
        v = loss_active(e, r)
        return type(v)(v.value, v.gradient * 1.01)

    assert check_gradient(bad, est, ref) > 5e-3


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 96), st.integers(0, 2 ** 32 - 1), st.floats(0.01, 3.0), st.floats(0.01, 3.0))
def test_gradients_property(n, seed, scale, noise):
    rng = np.random.default_rng(seed)
    ref = rng.normal(size=n) * scale
    est = ref + noise * scale * rng.normal(size=n)
    mix = ref + rng.normal(size=n)
    assert check_gradient(loss_active, est, ref) < 1e-4
    assert check_gradient(loss_inactive, est, mix) < 1e-4
