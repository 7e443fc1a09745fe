import numpy as np
import pytest
from hypothesis import given, strategies as st

from curvelab import grid
from curvelab.curves import moment_curve, perturbed_moment_curve
from curvelab.oscillatory import default_chi, eval_mu_hat

CHI = default_chi()


@pytest.fixture(scope="module")
def mu2():
    return grid.mu_hat_lattice(moment_curve(2), CHI, 2, 64)


def test_wavenumbers_fft_order():
    assert np.array_equal(grid.wavenumbers(8), [0, 1, 2, 3, -4, -3, -2, -1])


def test_field_requires_power_of_two_cube():
    with pytest.raises(ValueError):
        grid.PeriodicField(np.zeros((6, 6)))
    with pytest.raises(ValueError):
        grid.PeriodicField(np.zeros((8, 4)))


def test_round_trip_and_parseval():
    f = grid.random_band_limited(3, 16, 5.0, seed=1)
    assert f.round_trip_error() < 1e-14
    assert abs(grid.lp_norm(f, 2) - grid.l2_norm_frequency(f)) < 1e-12 * grid.lp_norm(f, 2)


def test_lp_norm_of_constant():
    f = grid.PeriodicField(np.full((16, 16), 3.0))
    area = (2 * np.pi) ** 2
    for p in (1.0, 2.0, 6.0):
        assert grid.lp_norm(f, p) == pytest.approx(3.0 * area ** (1 / p))
    assert grid.lp_norm(f, np.inf) == 3.0


def test_from_spectrum_single_mode():
    N, L = 16, 2 * np.pi
    F = np.zeros((N, N), dtype=complex)
    F[2, 15] = L**2
    f = grid.PeriodicField.from_spectrum(F, L)
    x, y = f.coordinates()
    assert np.allclose(f.values, np.exp(1j * (2 * x - 1 * y)))
    assert np.allclose(f.evaluate(np.array([[0.3, 1.1]])), np.exp(1j * (0.6 - 1.1)))


def test_sobolev_norm_of_mode():
    f = grid.PeriodicField.from_function(lambda x, y: np.exp(3j * x), 2, 16)
    assert grid.sobolev_norm(f, 2, 1.0) == pytest.approx(np.sqrt(10) * grid.lp_norm(f, 2))


@pytest.mark.parametrize("curve", [moment_curve(2), perturbed_moment_curve(2, 0.05, direction=[0.0, 1.0])])
def test_lattice_multiplier_matches_quadrature(curve):
    mu = grid.mu_hat_lattice(curve, CHI, 2, 32)
    k = grid.wavenumbers(32)
    rng = np.random.default_rng(0)
    for i, j in rng.integers(0, 32, (12, 2)):
        ref = eval_mu_hat(curve, CHI, [k[i], k[j]]).value
        assert abs(mu[i, j] - ref) < 1e-11


def test_fast_and_generic_paths_agree():
    c = moment_curve(2)
    slow = type(c)(c.n, c.deriv_fn, c.domain, "copy", {}, False)
    a = grid.mu_hat_lattice(c, CHI, 2, 32)
    b = grid.mu_hat_lattice(slow, CHI, 2, 32)
    assert np.max(np.abs(a - b)) < 1e-12


def test_radius_truncation(mu2):
    mu = grid.mu_hat_lattice(moment_curve(2), CHI, 2, 64, radius=10.0)
    r = grid.frequency_norm(2, 64)
    assert np.all(mu[r > 10.0] == 0)
    assert np.allclose(mu[r <= 10.0], mu2[r <= 10.0])


@given(st.integers(0, 63), st.integers(0, 63), st.floats(-2, 2), st.floats(-2, 2))
def test_averaging_linear_and_translation_covariant(mu2, i, j, a, b):
    f = grid.random_band_limited(2, 64, 12.0, seed=2)
    g = grid.random_band_limited(2, 64, 12.0, seed=3)
    A = lambda h: grid.averaging_operator(moment_curve(2), CHI, h, mu=mu2)
    lin = A(grid.PeriodicField(a * f.values + b * g.values))
    assert grid.relative_l2(lin, grid.PeriodicField(a * A(f).values + b * A(g).values)) < 1e-12
    shifted = grid.PeriodicField(np.roll(f.values, (i, j), axis=(0, 1)))
    assert np.allclose(A(shifted).values, np.roll(A(f).values, (i, j), axis=(0, 1)), atol=1e-12)


def test_direct_backend_agrees_with_multiplier(mu2):
    f = grid.random_band_limited(2, 64, 4.0, seed=4)
    a = grid.averaging_operator(moment_curve(2), CHI, f, mu=mu2)
    b = grid.averaging_operator(moment_curve(2), CHI, f, backend="direct")
    assert grid.relative_l2(b, a) < 1e-4
    with pytest.raises(ValueError):
        grid.averaging_operator(moment_curve(2), CHI, f, backend="spline")


def test_constant_is_scaled_by_mass(mu2):
    f = grid.PeriodicField(np.ones((64, 64)))
    out = grid.averaging_operator(moment_curve(2), CHI, f, mu=mu2)
    assert np.allclose(out.values, mu2[0, 0])


def test_wrap_error():
    with pytest.raises(grid.WrapError):
        grid.mu_hat_lattice(moment_curve(2), CHI, 2, 16, L=1.0)


def test_budget_refusal_message():
    with pytest.raises(grid.MemoryBudgetError) as exc:
        grid.check_budget((256,) * 4, budget=2 * 1024**3)
    msg = str(exc.value)
    assert "34.4 GB" in msg and "32.0 GiB" in msg
    assert grid.estimate_bytes((256,) * 4) == 8 * 256**4


def test_budget_from_environment(monkeypatch):
    monkeypatch.setenv(grid.BUDGET_ENV, "1000")
    assert grid.budget_bytes() == 1000
    with pytest.raises(grid.MemoryBudgetError):
        grid.check_budget((16, 16))


def test_band_must_fit_grid():
    grid.check_band(5, 64)
    with pytest.raises(grid.ScaleError):
        grid.check_band(6, 64)


def test_probe_report():
    rep = grid.dyadic_operator_probe(moment_curve(2), CHI, 3, 4.0, 64, n_random=2, seed=1)
    assert set(rep.maxima) == {"random", "bump", "focusing"}
    assert len(rep.families["random"]) == 2
    assert rep.max_ratio == max(rep.maxima.values())
    again = grid.dyadic_operator_probe(moment_curve(2), CHI, 3, 4.0, 64, n_random=2, seed=1)
    assert again.families == rep.families
    with pytest.raises(ValueError):
        grid.dyadic_operator_probe(moment_curve(2), CHI, 3, 4.0, 64, probes=("gabor",))


def test_probe_slope_needs_four_bands():
    reps = [grid.OperatorProbeReport(k, 4.0, {"x": [2.0 ** (-k / 4)]}) for k in range(2, 6)]
    assert grid.probe_slope(reps).slope == pytest.approx(-0.25)
    with pytest.raises(Exception):
        grid.probe_slope(reps[:3])
