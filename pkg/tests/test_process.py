import numpy as np
import pytest

import oracles
from adaptgof.exceptions import DegenerateFitError
from adaptgof.kernel import SmoothingConfig
from adaptgof.model import get_family
from adaptgof.nls import fit
from adaptgof.process import (
    annihilation_check,
    direction_grid,
    marked_process,
    sup_process,
    transform,
    transform_marks,
)
from adaptgof.sdr import reduce
from conftest import linear_data


def test_marked_process_matches_direct_sum(small_case):
    mp = marked_process(small_case["e"], small_case["u"])
    us, vals = oracles.marked_process(small_case["e"], small_case["u"])
    np.testing.assert_array_equal(mp.jump_points, us)
    np.testing.assert_allclose(mp.values, vals, atol=1e-12)
    np.testing.assert_array_equal(mp.residuals, small_case["e"][mp.order])


def test_marked_process_validates_shapes():
    with pytest.raises(ValueError):
        marked_process(np.ones(3), np.ones(4))


def _scalar_plugins(u):
    m = np.sin(u) + 2.0
    s2 = 1.0 + 0.5 * np.cos(u)
    return m, s2


def test_spherical_transform_matches_direct_loops(small_case):
    u, e = small_case["u"], small_case["e"]
    mp = marked_process(e, u)
    m, s2 = _scalar_plugins(mp.jump_points)
    values, tv, A, retained, _ = transform_marks(mp.jump_points, mp.residuals, m / s2, m, s2)
    us, tv_ref, A_ref = oracles.transform(
        u, e, a=lambda z: _scalar_plugins(z)[0] / _scalar_plugins(z)[1],
        m=lambda z: _scalar_plugins(z)[0], sigma2=lambda z: _scalar_plugins(z)[1],
    )
    np.testing.assert_allclose(A, A_ref, atol=1e-12)
    np.testing.assert_allclose(tv[retained], tv_ref[retained], atol=1e-10)


def test_vector_transform_solvers_agree_when_well_conditioned():
    rng = np.random.default_rng(0)
    n = 60
    u = np.sort(rng.standard_normal(n))
    m = np.column_stack([np.ones(n), u, np.cos(u)])
    s2 = 1.0 + 0.2 * u * u
    e = rng.standard_normal(n)
    out_l = transform_marks(u, e, m / s2[:, None], m, s2, solver="lstsq")
    out_p = transform_marks(u, e, m / s2[:, None], m, s2, solver="pinv")
    keep = out_l[3] & (np.arange(n) < n - 5)
    np.testing.assert_allclose(out_l[1][keep], out_p[1][keep], atol=1e-8)


def test_transform_is_linear_in_marks():
    rng = np.random.default_rng(1)
    u = np.sort(rng.standard_normal(40))
    m, s2 = _scalar_plugins(u)
    e1, e2 = rng.standard_normal(40), rng.standard_normal(40)
    f = lambda e: transform_marks(u, e, m / s2, m, s2)[1]
    np.testing.assert_allclose(f(2 * e1 - 3 * e2), 2 * f(e1) - 3 * f(e2), atol=1e-12)


def test_transform_from_fit_uses_index_derivative():
    X, y = linear_data(n=80, p=3, seed=2)
    res = fit(X, y, "cubic")
    beta = res.beta
    u = X @ beta / np.linalg.norm(beta)
    tp = transform(marked_process(res.residuals, u), X, res, "cubic")
    t = tp.jump_points * np.linalg.norm(beta)
    m = 3 * t**2 * t
    s2 = np.mean(res.residuals**2)
    ref = transform_marks(tp.jump_points, tp.residuals, m / s2, m, s2)[1]
    np.testing.assert_allclose(tp.transformed_values, ref, atol=1e-12)
    assert tp.u0 <= np.quantile(u, 0.99) + 1e-12


@pytest.mark.parametrize("mode", ["spherical", "general"])
@pytest.mark.parametrize("family", ["linear", "exp", "quadpoly"])
@pytest.mark.parametrize("het", [False, True])
def test_drift_is_annihilated(mode, family, het):
    rng = np.random.default_rng(7)
    n, p = 120, 3
    X = rng.standard_normal((n, p))
    t = X @ np.array([0.6, 0.0, 0.8])
    y = {"linear": t, "exp": np.exp(t), "quadpoly": 1 + t + t * t}[family] + 0.3 * rng.standard_normal(n)
    res = fit(X, y, family)
    c = 1.7 if mode == "spherical" else rng.standard_normal(p + get_family(family).d)
    val = annihilation_check(res, X, family, c=c, mode=mode, heteroscedastic=het)
    assert val <= 1e-8 * np.linalg.norm(c) * np.sqrt(n)


def test_retained_points_respect_u0():
    X, y = linear_data(n=100, p=3)
    res = fit(X, y, "linear")
    tp = transform(marked_process(res.residuals, X @ res.beta), X, res, "linear", u0_quantile=0.8)
    assert tp.retained.sum() == 80
    assert tp.dropped == 0


def test_transform_rejects_perfect_fit():
    X = np.random.default_rng(0).standard_normal((20, 2))
    res = fit(X, X @ np.array([1.0, 2.0]), "linear")
    res.residuals[:] = 0.0
    with pytest.raises(DegenerateFitError):
        transform(marked_process(res.residuals, X[:, 0]), X, res, "linear")


def test_invalid_mode():
    X, y = linear_data(n=30, p=2)
    res = fit(X, y)
    with pytest.raises(ValueError, match="mode"):
        transform(marked_process(res.residuals, X[:, 0]), X, res, "linear", mode="elliptic")


@pytest.mark.parametrize("q", [1, 2, 3, 5])
def test_direction_grid(q):
    D = direction_grid(q, 64)
    assert D.shape == ((1, q) if q == 1 else (64, q))
    np.testing.assert_allclose(np.linalg.norm(D, axis=1), 1.0)
    assert np.all(D[:, 0] >= 0)
    np.testing.assert_array_equal(D[0], np.eye(q)[0])
    np.testing.assert_array_equal(D, direction_grid(q, 64))


def test_sup_process_independent_of_jobs_and_dominates_reference():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((150, 4))
    y = X[:, 0] + X[:, 1] ** 2 + 0.5 * rng.standard_normal(150)
    res = fit(X, y)
    sdr = reduce(X, y, align_to=res.beta, q=2)
    a = sup_process(X, res, "linear", sdr, n_directions=16)
    b = sup_process(X, res, "linear", sdr, n_directions=16, n_jobs=2)
    np.testing.assert_array_equal(a.values, b.values)
    assert np.all(a.values >= np.abs(a.reference.transformed_values) - 1e-15)
    assert a.directions.shape == (16, 2)


def test_heteroscedastic_sigma_follows_argmax_direction():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((100, 3))
    y = X[:, 0] + (1 + np.abs(X[:, 0])) * rng.standard_normal(100)
    res = fit(X, y)
    sdr = reduce(X, y, q=2)
    sp = sup_process(X, res, "linear", sdr, SmoothingConfig(), n_directions=8, heteroscedastic=True)
    cols = np.arange(100)
    S = np.vstack([tp.sigma2_values for tp in sp.per_direction])
    np.testing.assert_array_equal(sp.sigma2, S[sp.argmax, cols])
