import numpy as np
import pytest
from hypothesis import given, strategies as st

from curvelab import cone
from curvelab.curves import moment_curve, perturbed_moment_curve


@given(st.floats(-0.3, 0.3), st.sampled_from([3, 4]))
def test_worst_cone_closed_form(tau, n):
    pt = cone.worst_cone(moment_curve(n), tau)
    assert np.allclose(pt.xi, cone.worst_cone_moment(n, tau), atol=1e-10)


@given(st.floats(-0.25, 0.25))
def test_worst_cone_pairings_vanish_on_perturbed_curve(tau):
    c = perturbed_moment_curve(4, 0.05, freq=2.0)
    pt = cone.worst_cone(c, tau)
    s = np.array([pt.s])
    for j in range(1, 4):
        assert abs(cone.pairing(c, s, pt.xi[None, :], j)[0]) < 1e-11
    assert pt.xi[-1] == 1.0 and pt.xi[-2] == -tau


def test_worst_cone_planar_case():
    pt = cone.worst_cone(moment_curve(2), 0.2)
    assert np.allclose(pt.xi, [-0.2, 1.0])


def test_worst_cone_range():
    with pytest.raises(ValueError):
        cone.worst_cone(moment_curve(3), 0.5)


def test_admissibility():
    with pytest.raises(cone.LocalisationError):
        cone.check_admissible(np.array([[1.0, 0.0, 0.0, 1.0]]))
    cone.check_admissible(np.array([[0.1, -0.2, 0.0, 1.0]]))


def _near_cone(m, seed, n=4, half=0.05):
    rng = np.random.default_rng(seed)
    xi = np.zeros((m, n))
    xi[:, -1] = 1
    xi[:, :-1] = rng.uniform(-half, half, (m, n - 1))
    return xi * rng.uniform(1, 1e3, m)[:, None]


@pytest.mark.parametrize("curve", [moment_curve(4), perturbed_moment_curve(4, 0.05)])
def test_roots_and_size_ratios(curve):
    xi = _near_cone(400, 3)
    rep = cone.u_report(curve, xi, window=None, strict=False)
    scale = np.linalg.norm(xi, axis=1)
    assert np.max(np.abs(cone.pairing(curve, rep.theta2, xi, 3)) / scale) < 1e-12
    has = ~np.isnan(rep.theta1_minus)
    assert has.sum() > 100
    for t in (rep.theta1_minus, rep.theta1_plus):
        assert np.max(np.abs(cone.pairing(curve, t[has], xi[has], 2)) / scale[has]) < 1e-12
    assert np.all(rep.theta1_minus[has] <= rep.theta2[has])
    assert np.all(rep.theta2[has] <= rep.theta1_plus[has])
    for name, arr in cone.size_ratios(rep).items():
        assert 0.1 <= arr.min() and arr.max() <= 10, name


def test_theta2_minimises_second_pairing():
    xi = _near_cone(50, 4)
    assert cone.global_min_gap(moment_curve(4), xi) >= -1e-9


def test_phi_gradient_matches_finite_differences():
    c = perturbed_moment_curve(3, 0.05)
    xi = np.array([0.01, -0.1, 1.0]) * 300
    g = cone.grad_phi(c, xi)
    h = 1e-4
    fd = np.array([(cone.phi(c, xi + h * e) - cone.phi(c, xi - h * e)) / (2 * h) for e in np.eye(3)])
    assert np.allclose(g, fd, atol=1e-6)


def test_x_nu_window():
    d = cone.phi_and_xnu(moment_curve(3), 2.0**12, 3, 0.3)
    assert d.nu == 3 and np.allclose(d.x, -cone.grad_phi(moment_curve(3), d.xi))
    with pytest.raises(ValueError):
        cone.phi_and_xnu(moment_curve(3), 2.0**12, 9, 0.3)
