import numpy as np
import pytest

import oracles
from adaptgof.baselines import gwz, gwz_bandwidth, icm, stute_zhu, zheng, zheng_bandwidth
from adaptgof.baselines import _FixedProjection
from adaptgof.exceptions import DegenerateFitError
from adaptgof.gof import run_test
from adaptgof.nls import fit
from adaptgof.sdr import reduce
from conftest import linear_data


def test_zheng_two_point_hand_value():
    X = np.array([[0.0, 0.0], [0.5, -0.5]])
    e = np.array([1.0, 2.0])
    h = 1.0
    k = (15 / 16 * (1 - 0.25) ** 2) ** 2
    expected = 2 * k * 2 / np.sqrt(2 * 2 * k * k * 4)
    assert zheng(X, e, h=h).statistic == pytest.approx(expected)
    assert zheng(X, e * np.array([1, -1]), h=h).statistic == pytest.approx(-expected)


def test_zheng_numerator_matches_loops(small_case):
    X, e = small_case["X"], small_case["e"]
    h = 1.3
    num, den = oracles.pairwise_ratio(X, e, h)
    if den == 0:
        with pytest.raises(DegenerateFitError):
            zheng(X, e, h=h)
        return
    assert zheng(X, e, h=h).statistic == pytest.approx(num / den, abs=1e-10)


def test_gwz_matches_loops(small_case):
    X, y, e = small_case["X"], small_case["y"], small_case["e"]
    B = np.linalg.qr(np.random.default_rng(0).standard_normal((X.shape[1], X.shape[1])))[0][:, :1]
    proj = _FixedProjection(B)
    h = 0.9
    num, den = oracles.pairwise_ratio(X @ B, e, h, scale_power=1)
    if den == 0:
        return
    assert gwz(X, e, proj, h=h).statistic == pytest.approx(np.sqrt(h) * num / den, abs=1e-10)


def test_gwz_three_point_two_dims():
    X = np.array([[0.0, 0.0], [0.3, 0.1], [0.2, -0.4]])
    e = np.array([1.0, -0.5, 2.0])
    proj = _FixedProjection(np.eye(2), q_hat=2)
    num, den = oracles.pairwise_ratio(X, e, 0.8, scale_power=2)
    assert gwz(X, e, proj, h=0.8).statistic == pytest.approx(np.sqrt(0.8) * num / den, rel=1e-12)


def test_bandwidth_rules():
    assert zheng_bandwidth(100, 7) == pytest.approx(1.5 * 100 ** (-1 / 11))
    assert gwz_bandwidth(100, 1) == pytest.approx(1.5 * 100 ** (-0.2))
    assert gwz_bandwidth(100, 1, printed=True) == pytest.approx(1.5 * 100 ** 0.2)


def test_icm_examples():
    X = np.array([[1.0, 2.0], [1.0, 2.0]])
    rep = icm(X, np.array([1.0, 1.0]), n_bootstrap=50)
    assert rep.statistic == pytest.approx(2.0)
    assert rep.method == "wild-bootstrap"
    assert icm(X, np.zeros(2), n_bootstrap=10).statistic == 0.0
    assert icm(X, np.array([1.0, 1.0]), n_bootstrap=10, include_diagonal=False).statistic == pytest.approx(1.0)


def test_icm_matches_loops(small_case):
    X, e = small_case["X"], small_case["e"]
    assert icm(X, e, n_bootstrap=5).statistic == pytest.approx(oracles.icm(X, e), abs=1e-12)


def test_icm_bootstrap_is_seeded_and_refit_runs():
    X, y = linear_data(n=60, p=3, seed=3)
    res = fit(X, y)
    a = icm(X, res.residuals, seed=5)
    b = icm(X, res.residuals, seed=5)
    assert a.p_value == b.p_value and a.critical_values == b.critical_values
    r = icm(X, res.residuals, seed=5, n_bootstrap=20, refit=True, y=y, family="linear", fit=res)
    assert 0 < r.p_value <= 1
    with pytest.raises(ValueError):
        icm(X, res.residuals, refit=True)


def test_all_statistics_permutation_invariant():
    X, y = linear_data(n=80, p=3, seed=4, a=0.8)
    perm = np.random.default_rng(0).permutation(80)
    r1, r2 = fit(X, y), fit(X[perm], y[perm])
    s1 = reduce(X, y, align_to=r1.beta)
    s2 = reduce(X[perm], y[perm], align_to=r2.beta)
    pairs = [
        (stute_zhu(X, y, "linear", r1).statistic, stute_zhu(X[perm], y[perm], "linear", r2).statistic),
        (zheng(X, r1.residuals).statistic, zheng(X[perm], r2.residuals).statistic),
        (gwz(X, r1.residuals, s1).statistic, gwz(X[perm], r2.residuals, s2).statistic),
        (icm(X, r1.residuals, n_bootstrap=5).statistic, icm(X[perm], r2.residuals, n_bootstrap=5).statistic),
    ]
    for a, b in pairs:
        assert a == pytest.approx(b, rel=1e-10, abs=1e-12)


def test_stute_zhu_equals_adaptive_pipeline_with_fitted_direction():
    X, y = linear_data(n=150, p=4, seed=6, a=0.5)
    res = fit(X, y)
    b = res.beta / np.linalg.norm(res.beta)
    sdr = reduce(X, y, align_to=res.beta, q=1)
    sdr.B_hat = b[:, None]
    acm = run_test(X, y, fit_result=res, sdr_result=sdr).acm2
    assert stute_zhu(X, y, "linear", res).statistic == pytest.approx(acm, abs=1e-10)


def test_report_rendering():
    X, y = linear_data(n=60, p=3)
    rep = zheng(X, fit(X, y).residuals)
    assert "statistic=" in rep.to_keyvalue()
    assert rep.method == "asymptotic-normal"
    assert "critical value" in rep.to_text()
