import numpy as np
import pytest

from adaptgof.model import (
    FAMILIES,
    Dataset,
    ModelFamily,
    ParamVector,
    check_derivatives,
    evaluate,
    get_family,
    hessian_blocks,
    register_family,
    score,
)


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_analytic_derivatives_match_finite_differences(name):
    assert check_derivatives(get_family(name), p=4) < 1e-5


def test_evaluate_single_point_is_scalar():
    val = evaluate("cubic", ParamVector(np.array([1.0, 2.0]), np.zeros(0)), np.array([1.0, 0.5]))
    assert isinstance(val, float)
    assert val == pytest.approx(8.0)


def test_quadpoly_values_and_score_shape():
    gam = ParamVector(np.array([0.6, 0.8]), np.array([1.0, 2.0, 3.0]))
    X = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    t = X @ gam.beta
    np.testing.assert_allclose(evaluate("quadpoly", gam, X), 1 + 2 * t + 3 * t**2)
    assert score("quadpoly", gam, X).shape == (3, 5)
    assert hessian_blocks("quadpoly", gam, X).shape == (3, 5, 5)


def test_param_vector_round_trip():
    pv = ParamVector.from_gamma(np.arange(5.0), 2)
    np.testing.assert_array_equal(pv.beta, [0.0, 1.0])
    np.testing.assert_array_equal(pv.gamma, np.arange(5.0))


def test_dimension_mismatch_raises():
    with pytest.raises(ValueError, match="dimension mismatch"):
        evaluate("linear", ParamVector(np.ones(3), np.zeros(0)), np.ones((4, 2)))
    with pytest.raises(ValueError, match="theta"):
        evaluate("quadpoly", ParamVector(np.ones(2), np.zeros(2)), np.ones((4, 2)))


def test_unknown_family():
    with pytest.raises(ValueError, match="unknown model family"):
        get_family("logistic")


def test_register_family_rejects_wrong_derivative():
    bad = ModelFamily(
        name="bad_sine", d=0, g=lambda t, th: np.sin(t), g1=lambda t, th: np.sin(t),
        g2=lambda t, th: np.zeros((len(t), 0)), g11=lambda t, th: -np.sin(t),
        g12=lambda t, th: np.zeros((len(t), 0)), g22=lambda t, th: np.zeros((len(t), 0, 0)),
    )
    with pytest.raises(ValueError, match="finite"):
        register_family(bad)
    assert "bad_sine" not in FAMILIES


def test_register_valid_family():
    sine = ModelFamily(
        name="sine_test", d=0, g=lambda t, th: np.sin(t), g1=lambda t, th: np.cos(t),
        g2=lambda t, th: np.zeros((len(t), 0)), g11=lambda t, th: -np.sin(t),
        g12=lambda t, th: np.zeros((len(t), 0)), g22=lambda t, th: np.zeros((len(t), 0, 0)),
    )
    try:
        register_family(sine)
        assert get_family("sine_test") is sine
    finally:
        FAMILIES.pop("sine_test", None)


def test_dataset_from_arrays_validates():
    ds = Dataset.from_arrays(np.arange(6.0).reshape(3, 2), [1, 2, 3])
    assert (ds.n, ds.p) == (3, 2)
    with pytest.raises(ValueError):
        Dataset.from_arrays(np.ones((3, 2)), [1, 2])
