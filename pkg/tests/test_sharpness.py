import numpy as np
import pytest

from curvelab import grid, sharpness as S
from curvelab.curves import moment_curve


def test_exponent_fit_exact():
    lam = 2.0 ** np.arange(4, 9)
    fit = S.exponent_fit([(np.log(x), np.log(5 * x**1.25)) for x in lam])
    assert fit.slope == pytest.approx(1.25, abs=1e-12)


def test_exponent_fit_noisy():
    rng = np.random.default_rng(7)
    lam = 2.0 ** np.arange(4, 14)
    pairs = [(np.log(x), np.log(x**-0.5) + 0.01 * rng.standard_normal()) for x in lam]
    fit = S.exponent_fit(pairs)
    assert abs(fit.slope + 0.5) < 3 * fit.stderr + 1e-3


def test_exponent_fit_errors():
    with pytest.raises(S.FitError):
        S.exponent_fit([(1.0, 1.0)] * 3)
    with pytest.raises(S.FitError, match="degenerate"):
        S.exponent_fit([(1.0, 0.0), (1.0, 1.0), (1.0, 2.0), (1.0, 3.0)])


def test_bump_spectrum_support():
    F = S.bump_spectrum(2, 128, 16.0)
    r = grid.frequency_norm(2, 128)
    assert np.all(F[(r < 8) | (r > 32)] == 0)
    assert np.all(F.real >= -1e-15) and np.allclose(F.imag, 0)


def test_bump_example_small():
    res = S.bump_example(moment_curve(2), 16.0, ps=(1.5, 2.0))
    assert res.N == 256
    assert set(res.ratios) == {1.5, 2.0}
    assert res.neighbourhood_min > 0
    with pytest.raises(grid.ScaleError):
        S.bump_example(moment_curve(2), 64.0, N=256)


def test_index_window():
    assert np.array_equal(S.index_window(2.0**12, 0.1, 4), [0])
    assert np.array_equal(S.index_window(2.0**8, 0.3, 2), [-4, -3, -2, -1, 0, 1, 2, 3, 4])


def test_wolff_target():
    assert S.wolff_target(2, 6) == pytest.approx(13 / 12)


def test_wolff_ensemble_disjoint_balls():
    ens = S.wolff_ensemble(moment_curve(2), 64.0, 0.3, 0.4, 512)
    assert len(ens.nus) == 5
    assert set(np.unique(ens.labels)) == {-1, 0, 1, 2, 3, 4}
    # the field is a sum of the pieces
    signs = np.array([1.0, -1.0, 1.0, 1.0, -1.0])
    total = sum(sg * ens.piece(i).values for i, sg in enumerate(signs))
    assert np.allclose(ens.field(signs).values, total)


def test_wolff_overlap_refused():
    with pytest.raises(S.ParameterError):
        S.wolff_ensemble(moment_curve(2), 64.0, 0.3, 2.0, 512)


def test_wolff_beyond_nyquist():
    with pytest.raises(grid.ScaleError):
        S.wolff_ensemble(moment_curve(2), 512.0, 0.3, 0.4, 256)


def test_wolff_example_reproducible():
    a = S.wolff_example(moment_curve(2), 64.0, trials=3, N=512, seed=4)
    b = S.wolff_example(moment_curve(2), 64.0, trials=3, N=512, seed=4)
    assert np.array_equal(a.norms, b.norms)
    assert a.moment == pytest.approx(np.mean(a.norms**6) ** (1 / 6))


def test_inversion():
    ens = S.wolff_ensemble(moment_curve(2), 64.0, 0.3, 0.4, 512)
    err = S.inversion_check(moment_curve(2), ens, np.ones(len(ens.nus)))
    assert err < 1e-12


def test_separation():
    assert S.separation_audit(moment_curve(4), 2.0**8, 0.1) == np.inf
    assert S.separation_audit(moment_curve(3), 2.0**12, 0.3) >= 0.5
