import numpy as np
import pytest
from hypothesis import given, strategies as st

from curvelab.curves import (
    CurveDomainError,
    DegeneracyError,
    curve_from_spec,
    finite_type_profile,
    frenet_frames,
    model_class_check,
    moment_curve,
    perturbed_moment_curve,
    polynomial_curve,
    rescale,
    sphere_net,
)


def test_moment_curve_values():
    c = moment_curve(4)
    assert np.allclose(c.point(2.0), [2.0, 2.0, 8 / 6, 16 / 24])
    assert np.allclose(c.derivative_matrix(0.0), np.eye(4))
    # fifth derivative of the quartic moment curve vanishes
    assert np.allclose(c.deriv(np.linspace(-1, 1, 5), 5), 0.0)


def test_invalid_dimension():
    with pytest.raises(ValueError, match="n=1"):
        moment_curve(1)


@pytest.mark.parametrize("j", [1, 2, 3])
def test_derivatives_match_finite_differences(j):
    c = perturbed_moment_curve(3, 0.1, freq=2.0)
    s = np.linspace(-0.8, 0.8, 7)
    h = 1e-5
    fd = (c.deriv(s + h, j - 1) - c.deriv(s - h, j - 1)) / (2 * h)
    assert np.allclose(fd, c.deriv(s, j), atol=1e-7)


def test_perturbed_curve_stays_normalised():
    c = perturbed_moment_curve(4, 0.01, direction=[0, 1, 0, 1])
    rep = model_class_check(c, delta=0.1)
    assert rep.normalized and rep.member
    assert rep.normalization_error < 1e-12


def test_unnormalised_perturbation_is_flagged():
    c = perturbed_moment_curve(3, 0.5, normalized=False)
    rep = model_class_check(c, delta=0.1)
    assert not rep.normalized


@given(st.floats(-0.5, 0.5), st.floats(0.05, 0.5))
def test_rescaled_moment_curve_is_moment_curve(sigma, lam):
    c = moment_curve(3)
    r = rescale(c, sigma, lam)
    t = np.linspace(-1, 1, 9)
    assert np.allclose(r(t), moment_curve(3)(t), atol=1e-10)


@given(st.floats(-0.4, 0.4), st.floats(0.05, 0.5))
def test_rescaled_curve_normalisation(sigma, lam):
    c = perturbed_moment_curve(4, 0.05, freq=2.0)
    r = rescale(c, sigma, lam)
    assert np.allclose(r.point(0.0), 0.0, atol=1e-14)
    assert np.allclose(r.derivative_matrix(0.0), np.eye(4), atol=1e-9)


def test_rescale_domain_checks():
    c = moment_curve(2)
    with pytest.raises(CurveDomainError):
        rescale(c, 0.9, 0.5)
    rescale(c, 0.9, 0.5, strict=False)
    with pytest.raises(CurveDomainError):
        rescale(c, 0.0, -1.0)


def test_degenerate_rescale_raises():
    c = polynomial_curve(np.array([[0, 1, 0], [0, 0, 0]]))
    with pytest.raises(DegeneracyError):
        rescale(c, 0.0, 0.5)


def test_frenet_frames_orthonormal_and_triangular():
    c = perturbed_moment_curve(4, 0.05)
    s = np.linspace(-0.9, 0.9, 11)
    E = frenet_frames(c, s)
    eye = np.einsum("mij,mik->mjk", E, E)
    assert np.allclose(eye, np.eye(4), atol=1e-13)
    # [gamma]_s = E R with R upper triangular and positive diagonal
    R = np.einsum("mij,mik->mjk", E, c.derivative_matrices(s))
    assert np.allclose(np.tril(R, -1), 0.0, atol=1e-12)
    assert np.all(np.diagonal(R, axis1=1, axis2=2) > 0)


def test_frenet_frame_of_planar_curve_is_degenerate():
    c = polynomial_curve(np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]]))
    with pytest.raises(DegeneracyError):
        frenet_frames(c, [0.0])


def test_curve_from_spec():
    assert curve_from_spec({"kind": "moment", "n": 3}).n == 3
    c = curve_from_spec({"kind": "perturbed-moment", "n": 4, "amplitude": 0.01})
    assert c.kind == "perturbed-moment"
    for bad, msg in [({}, "kind"), ({"kind": "moment"}, "'n'"), ({"kind": "spiral"}, "unknown")]:
        with pytest.raises(ValueError, match=msg):
            curve_from_spec(bad)


def test_finite_type_profile_of_moment_curve():
    c = moment_curve(3)
    prof = finite_type_profile(c, 3, sphere_net(3, 400, seed=2), np.linspace(-0.5, 0.5, 5))
    assert prof.maximal_type <= 3
    assert np.all(prof.order >= 1)
