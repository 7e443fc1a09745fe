import numpy as np
import pytest
from hypothesis import given, strategies as st

from curvelab.cutoffs import (
    angular_pieces,
    annulus,
    bump,
    littlewood_paley,
    smooth_step,
    zeta,
    zeta_partition_check,
)


def test_bump_plateau_and_support():
    eta = bump()
    assert np.all(eta(np.linspace(-1, 1, 21)) == 1.0)
    assert np.all(eta(np.array([-2.0, 2.0, 2.5, -7.0])) == 0.0)
    x = np.linspace(-2, 2, 401)
    v = eta(x)
    assert v.min() >= 0 and v.max() <= 1


@pytest.mark.parametrize("order", [1, 2, 3])
def test_smooth_step_derivatives(order):
    t = np.linspace(0.05, 0.95, 19)
    h = 1e-5
    fd = (smooth_step(t + h, order - 1) - smooth_step(t - h, order - 1)) / (2 * h)
    assert np.allclose(fd, smooth_step(t, order), rtol=1e-5, atol=1e-6)


def test_smooth_step_is_flat_at_ends():
    for order in range(1, 4):
        assert np.allclose(smooth_step(np.array([0.0, 1.0]), order), 0.0)


@given(st.floats(-50, 50, allow_nan=False))
def test_zeta_translates_sum_to_one(x):
    assert abs(zeta_partition_check(np.array([x]))[0] - 1.0) < 1e-14


@given(st.floats(-20, 20, allow_nan=False))
def test_angular_pieces_weights(x):
    m0, w0, w1 = angular_pieces(np.array([x]))
    z = zeta()
    assert abs(w0[0] + w1[0] - 1.0) < 1e-14
    assert abs(z(x - m0[0]) - w0[0]) < 1e-14


def test_littlewood_paley_telescopes():
    r = np.linspace(0, 300, 3001)
    total = sum(littlewood_paley(k)(r) for k in range(0, 7))
    # eta + sum_{k=1}^{K} beta^k = eta(2^{-K} r)
    assert np.allclose(total, bump().dilate(2.0**-6)(r), atol=1e-14)


def test_littlewood_paley_support():
    b = littlewood_paley(5)
    assert b(np.array([2.0**4 * 0.99]))[0] == 0.0
    assert b(np.array([2.0**6 * 1.01]))[0] == 0.0
    assert b(np.array([2.0**5]))[0] == 1.0


def test_annulus_plateau():
    a = annulus(0.5, 8.0)
    assert np.all(a(np.linspace(1.0, 4.0, 13)) == 1.0)
    assert a(np.array([0.49]))[0] == 0.0 and a(np.array([8.01]))[0] == 0.0
    with pytest.raises(ValueError):
        annulus(2.0, 1.0)


def test_dilate_scales_derivatives():
    eta = bump()
    e2 = eta.dilate(3.0)
    x = np.linspace(-0.6, 0.6, 13)
    assert np.allclose(e2(x, 1), 3.0 * eta(3 * x, 1))
    with pytest.raises(ValueError):
        eta.dilate(0.0)
