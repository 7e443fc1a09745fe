import numpy as np
import pytest
from hypothesis import given, strategies as st

from curvelab import decomposition as D
from curvelab.curves import moment_curve


@pytest.fixture(scope="module")
def j3():
    return D.decompose_J3(moment_curve(4), 8)


@pytest.fixture(scope="module")
def j4():
    return D.decompose_J4(moment_curve(4), 8)


def test_j3_levels(j3):
    assert [p.index["ell"] for p in j3.pieces] == [0, 1, 2]


def test_j3_partition_of_unity(j3):
    assert D.tree_reconstruction(j3, 100, seed=5) <= 1e-12


def test_j4_partition_of_unity(j4):
    assert D.tree_reconstruction(j4, 60, seed=5) <= 1e-12


def test_lambda_set():
    assert D.lambda_set(3) == []
    lam = D.lambda_set(12)
    assert (0, 0) in lam and all(l2 <= l1 for l1, l2 in lam)
    assert max(l2 for _, l2 in lam) == 2


def test_j4_kappa_default(j4):
    assert j4.kappa == pytest.approx(np.sqrt(0.05) / 8)


def test_j3_support_constants(j3):
    rep = D.support_audit(j3, 200, seed=1)
    c = rep.max_slack("J3")
    assert 1 <= c <= 16


def test_vacuous_piece_has_no_samples(j3):
    rep = D.support_audit(j3, 50, seed=1)
    assert any(p.vacuous for p in rep.pieces)


@given(st.lists(st.floats(-1, 1), min_size=4, max_size=4).filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_j_weights_partition(v):
    w = D.classify_J(moment_curve(4), np.array(v), n_grid=41)
    assert abs(w.weights.sum() + w.overlap[0] - 1.0) < 1e-12
    assert np.all(w.weights >= 0)


def test_classify_rejects_zero():
    with pytest.raises(ValueError):
        D.classify_J(moment_curve(4), np.zeros(4))


def test_frenet_box_membership():
    c = moment_curve(3)
    box = D.FrenetBox(c, 2, 0.0, 0.25)
    E = box.frame
    inside = 0.01 * E[:, 0] + 0.1 * E[:, 1] + 0.75 * E[:, 2]
    assert box.contains(inside)[0]
    # the third coordinate must stay in [1/2, 1]
    assert not box.contains(0.3 * E[:, 2])[0]
    # the box is symmetric under xi -> -xi
    assert box.contains(-inside)[0]
    assert not box.contains(0.1 * E[:, 1], C=100.0)[0]


def test_frenet_box_slack_scales_with_coordinates():
    c = moment_curve(3)
    box = D.FrenetBox(c, 2, 0.1, 0.25)
    xi = (0.125 * box.frame[:, 0] + 0.75 * box.frame[:, 2])[None, :]
    need = box.required_slack(xi)[0]
    assert box.contains(xi, C=need)[0] and not box.contains(xi, C=0.99 * need)[0]


def test_third_derivative_window():
    tree = D.decompose_J4(moment_curve(4), 8, rho=0.02)
    ranges = D.third_derivative_ratio(tree, 200, seed=2)
    assert ranges
    assert all(0.25 <= lo and hi <= 4 for lo, hi in ranges.values())
