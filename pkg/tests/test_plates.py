import numpy as np
import pytest
from hypothesis import given, strategies as st

from curvelab import plates
from curvelab.curves import moment_curve, perturbed_moment_curve


@pytest.fixture(scope="module")
def tup():
    return plates.cone_tuple_from_curve(moment_curve(4), 2)


def test_interpolant_matches_frame_values(tup):
    s = np.linspace(-0.25, 0.25, 17)
    ref = plates.frame_tuple_values(moment_curve(4), 2, s)
    assert np.max(np.abs(tup.g(s) - ref)) < 1e-12


def test_interpolated_derivative(tup):
    s = np.linspace(-0.2, 0.2, 5)
    h = 1e-5
    fd = (tup.g(s + h) - tup.g(s - h)) / (2 * h)
    assert np.allclose(fd, tup.g(s, 1), atol=1e-8)


def test_reparametrisation(tup):
    rng = np.random.default_rng(0)
    s = rng.uniform(-0.25, 0.25, 20)
    lams = rng.standard_normal((20, 2))
    assert plates.reparametrisation_residual(moment_curve(4), tup, lams, s) < 1e-12


def test_unit_determinant_near_origin(tup):
    assert tup.min_abs_det([1.0, 0.0], np.linspace(-0.1, 0.1, 5)) > 0.5


def test_tuple_dimensions():
    with pytest.raises(ValueError):
        plates.cone_tuple_from_curve(moment_curve(3), 3)
    t = plates.cone_tuple_from_curve(perturbed_moment_curve(4, 0.05), 3)
    assert t.g(0.0).shape == (1, 3, 1)


@given(
    st.floats(0.25, 2.0),
    st.floats(-2.0, 2.0),
    st.floats(-0.2, 0.2),
    st.floats(0.05, 1.0),
    st.floats(-1, 1),
    st.floats(0.01, 1.0),
)
def test_lorentz_identities(tup, a1, a2, b, rho, u, frac):
    s = float(np.clip(b + rho * u, -0.25, 0.25))
    res = plates.lorentz_identity_check(tup, [a1, a2], b, rho, s, frac * rho)
    assert res.matrix < 1e-9 and res.offset < 1e-9


def test_lorentz_parameter_order(tup):
    with pytest.raises(ValueError):
        plates.lorentz_identity_check(tup, [1.0, 0.0], 0.0, 0.1, 0.0, 0.2)


def test_plate_block_structure(tup):
    pl = plates.Plate(tup, (1.0, 0.5), 0.05, 0.125)
    M = pl.matrix
    assert np.allclose(M[2:, :2], 0.0)
    assert np.allclose(M[2:, 2:], np.eye(2))
    assert np.allclose(M[:2, 2:], tup.g(0.05)[0])
    assert np.allclose(M[:2, :2], tup.matrix([1.0, 0.5], 0.05, 0.125))


def test_plate_contains_its_samples(tup):
    pl = plates.Plate(tup, (1.0, 0.0), 0.0, 0.125, K=2.0)
    xi = pl.sample(500, np.random.default_rng(1))
    assert np.all(pl.contains(xi))
    assert not pl.contains(xi * 3).all()


def test_plate_projection_constant(tup):
    pl = plates.Plate(tup, (1.0, 0.0), 0.0, 0.125)
    assert plates.projection_constant(pl, 1000) < 2.0


def test_plate_decomposition_covers_interval(tup):
    pls = plates.plate_decomposition(tup, [1.0, 0.0], 1.0, 2.0**-3)
    assert [p.s for p in pls] == list(np.arange(-2, 3) * 0.125)
    pt = tup.cone_point([1.0, 0.0], 0.0625)
    assert sum(bool(p.contains(pt)[0]) for p in pls) >= 1


def test_net():
    assert np.allclose(plates.net((-0.25, 0.25), 0.25), [-0.25, 0, 0.25])
    assert np.allclose(plates.net((0.1, 0.5), 0.2), [0.2, 0.4])


def test_slab_scale_needed():
    sl = plates.Slab(moment_curve(2), 0.0, 0.1)
    xi = sl.corners()
    assert np.allclose(sl.scale_needed(xi), 1.0)
    assert np.all(sl.contains(xi * 0.99))


def test_admissible_weights():
    assert plates.admissible_weights([1.0, -2.0], 2, 4)
    assert not plates.admissible_weights([0.1, 0.0], 2, 4)
    assert not plates.admissible_weights([1.0], 2, 4)


def test_region_masks_partition():
    boxes = plates.frenet_boxes(moment_curve(3), 0.25, 10.0)
    masks, excluded = plates.region_masks(boxes, 3, 32)
    assert excluded == []
    total = sum(m.astype(int) for m in masks)
    assert total.max() == 1
    loose, _ = plates.region_masks(boxes, 3, 32, partition=False)
    assert sum(m.sum() for m in loose) >= sum(m.sum() for m in masks)


def test_decoupling_small_case():
    boxes = plates.frenet_boxes(moment_curve(3), 0.25, 10.0)
    res = plates.decoupling_constant_estimate(boxes, [2.0, 6.0], 32, trials=4, seed=3)
    r2, r6 = res[2.0], res[6.0]
    # disjoint Fourier supports: exact orthogonality at p = 2
    assert np.allclose(r2.ratio_l2, 1.0) and abs(r2.focusing_l2 - 1) < 1e-12
    assert r6.max_lp() <= r6.trivial_lp * (1 + 1e-9)
    assert r6.max_l2() <= r6.trivial_l2 * (1 + 1e-9)


def test_region_outside_lattice():
    boxes = plates.frenet_boxes(moment_curve(3), 0.25, 200.0)
    with pytest.raises(Exception, match="lattice|Nyquist|exceed"):
        plates.region_masks(boxes, 3, 32)


def test_decoupling_exponent_fit():
    rs = 2.0 ** -np.arange(1, 6)
    fit = plates.decoupling_exponent(rs, rs**-0.1)
    assert abs(fit.slope - 0.1) < 1e-12
