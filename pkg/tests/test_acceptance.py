"""Acceptance criteria at their stated tolerances.

Each test prints one ``PASS``/``FAIL`` line (even under output capture) and
then asserts the same condition.
"""

import numpy as np
import pytest

import oracles
from adaptgof.baselines import _FixedProjection, gwz, zheng
from adaptgof.cvm import brownian_path_sample, default_table
from adaptgof.exceptions import DegenerateFitError
from adaptgof.gof import run_test
from adaptgof.model import get_family
from adaptgof.nls import fit
from adaptgof.process import annihilation_check, marked_process, transform_marks
from adaptgof.sdr import cse_matrix, standardize
from adaptgof.sim import Scenario, transformed_covariance, qhat_frequencies, run_study
from conftest import SMALL

pytestmark = pytest.mark.slow
SEED = 1


@pytest.fixture
def verdict(capsys):
    def emit(label, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} {label}: {detail}")
        assert ok, detail
    return emit


def _power(scenario, tests=("acm",), reps=2000):
    tab = run_study([scenario], tests=tests, levels=(0.05,), reps=reps, seed=SEED)
    return {t: tab.proportion(t, scenario.name, scenario.a, scenario.n, 0.05) for t in tests}


def test_c1_null_size(verdict):
    size = _power(Scenario("H11", 0.0, 100))["acm"]
    verdict("C1 size H11 a=0 n=100", abs(size - 0.05) <= 0.02, f"rejection rate {size:.4f}, target 0.050 +- 0.020")


def test_c2_power_single_direction(verdict):
    pw = _power(Scenario("H11", 0.5, 200))["acm"]
    verdict("C2 power H11 a=0.5 n=200", pw >= 0.95, f"power {pw:.4f}, target >= 0.95")


def test_c3_power_two_directions(verdict):
    pw = _power(Scenario("H13", 0.25, 200))["acm"]
    verdict("C3 power H13 a=0.25 n=200", pw >= 0.85, f"power {pw:.4f}, target >= 0.85")


def test_c4_gap_over_directional_test(verdict):
    pw = _power(Scenario("H22", 0.5, 400), tests=("acm", "sz"))
    gap = pw["acm"] - pw["sz"]
    verdict("C4 H22 a=0.5 n=400 ACM minus SZ", gap >= 0.15,
            f"ACM {pw['acm']:.4f}, SZ {pw['sz']:.4f}, gap {gap:.4f}, target >= 0.15")


def test_c5_dimension_estimate(verdict):
    null = qhat_frequencies(Scenario("H11", 0.0, 400), reps=500, seed=SEED)
    alt = qhat_frequencies(Scenario("H13", 1.0, 400), reps=500, seed=SEED)
    frac1 = null.get(1, 0) / 500
    modal = max(alt, key=alt.get)
    verdict("C5 MRER q_hat", frac1 >= 0.95 and modal == 2,
            f"H11 a=0 P(q_hat=1) {frac1:.3f} (target >= 0.95); H13 a=1 frequencies {alt}, "
            f"modal {modal} (target 2)")


def test_c6_transform_covariance(verdict):
    chk = transformed_covariance(n=200, reps=2000, seed=0)
    z = np.abs(chk.z_scores).max()
    verdict("C6 transformed covariance", chk.within(3.0), f"max |z| over 5x5 grid {z:.3f}, target <= 3")


def test_c7_drift_annihilation(verdict):
    worst = 0.0
    families = ("linear", "exp", "quadpoly", "cubic")
    for k in range(20):
        rng = np.random.default_rng(1000 + k)
        n, p = int(rng.integers(60, 200)), int(rng.integers(2, 6))
        family = families[k % len(families)]
        X = rng.standard_normal((n, p))
        beta = rng.standard_normal(p)
        t = X @ (beta / np.linalg.norm(beta))
        mean = {"linear": t, "exp": np.exp(0.5 * t), "quadpoly": 1 + t + t * t, "cubic": t**3}[family]
        res = fit(X, mean + 0.3 * rng.standard_normal(n), family)
        for mode in ("spherical", "general"):
            c = rng.standard_normal() if mode == "spherical" else rng.standard_normal(p + get_family(family).d)
            val = annihilation_check(res, X, family, c=c, mode=mode)
            worst = max(worst, val / (np.linalg.norm(c) * np.sqrt(n)))
    verdict("C7 drift annihilation", worst <= 1e-8, f"max residual / (|c| sqrt(n)) {worst:.3g}, target <= 1e-8")


def test_c8_cvm_oracles(verdict):
    eig = default_table()
    paths = brownian_path_sample(10**6, 10_000)
    rel = {lv: np.quantile(paths, 1 - lv) / eig.critical_value(lv) - 1 for lv in (0.10, 0.05, 0.01)}
    means = (float(eig.metadata["mean"]), float(paths.mean()))
    ok = all(abs(r) <= 0.005 for r in rel.values()) and all(abs(m - 0.5) <= 0.005 for m in means)
    detail = ", ".join(f"level {lv}: {r:+.4%}" for lv, r in rel.items())
    verdict("C8 CvM quantile agreement", ok,
            f"{detail}; means eigen {means[0]:.5f} paths {means[1]:.5f}")


def _plugins(u):
    return np.sin(u) + 2.0, 1.0 + 0.5 * np.cos(u)


def test_c9_oracle_suites(verdict):
    err = dict(cse=0.0, marked=0.0, transform=0.0, zheng=0.0, gwz=0.0)
    for case in SMALL:
        X, y, e, u = case["X"], case["y"], case["e"], case["u"]
        if np.all(np.ptp(X, axis=0) > 0) and X.shape[0] > X.shape[1]:
            Z = standardize(X).Z
            err["cse"] = max(err["cse"], np.abs(cse_matrix(Z, y) - oracles.cse_matrix(Z, y)).max())
        mp = marked_process(e, u)
        err["marked"] = max(err["marked"], np.abs(mp.values - oracles.marked_process(e, u)[1]).max())
        m, s2 = _plugins(mp.jump_points)
        _, tv, _, keep, _ = transform_marks(mp.jump_points, mp.residuals, m / s2, m, s2)
        ref = oracles.transform(u, e, a=lambda z: _plugins(z)[0] / _plugins(z)[1],
                                m=lambda z: _plugins(z)[0], sigma2=lambda z: _plugins(z)[1])[1]
        err["transform"] = max(err["transform"], np.abs(tv[keep] - ref[keep]).max(initial=0.0))
        num, den = oracles.pairwise_ratio(X, e, 1.3)
        if den > 0:
            err["zheng"] = max(err["zheng"], abs(zheng(X, e, h=1.3).statistic - num / den))
        else:
            with pytest.raises(DegenerateFitError):
                zheng(X, e, h=1.3)
        B = np.linalg.qr(np.random.default_rng(0).standard_normal((X.shape[1], X.shape[1])))[0][:, :1]
        num, den = oracles.pairwise_ratio(X @ B, e, 0.9, scale_power=1)
        if den > 0:
            stat = gwz(X, e, _FixedProjection(B), h=0.9).statistic
            err["gwz"] = max(err["gwz"], abs(stat - np.sqrt(0.9) * num / den))
    worst = max(err.values())
    verdict("C9 brute-force oracles", worst <= 1e-10,
            ", ".join(f"{k} {v:.2g}" for k, v in err.items()) + " (target <= 1e-10)")


def test_c10_invariances(verdict):
    rng = np.random.default_rng(SEED)
    X = rng.standard_normal((150, 4))
    y = X @ np.array([0.5, 0.5, 0.5, 0.5]) + 0.3 * np.sin(2 * X[:, 0]) + rng.standard_normal(150)
    perm = rng.permutation(150)
    perm_diff, scale_rel = 0.0, 0.0
    for mode in ("spherical", "general"):
        base = run_test(X, y, mode=mode).acm2
        perm_diff = max(perm_diff, abs(run_test(X[perm], y[perm], mode=mode).acm2 - base))
        for c in (0.01, 7.5, 1e4):
            scale_rel = max(scale_rel, abs(run_test(X, c * y, mode=mode).acm2 / base - 1))
    verdict("C10 invariances", perm_diff < 1e-10 and scale_rel < 1e-8,
            f"permutation |dACM2| {perm_diff:.3g} (target < 1e-10), "
            f"scale relative change {scale_rel:.3g} (target < 1e-8)")
