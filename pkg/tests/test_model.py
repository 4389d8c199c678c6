"""Model validation, risk quantities and generator calibration."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from rsgbm import (
    DimensionMismatch,
    InvalidGenerator,
    NegativeRate,
    NonPositiveVol,
    NoValidGenerator,
    SingularCovariance,
    ValidationError,
    approximate_generator,
    discrete_to_continuous,
    generator_from_transition,
    load_model,
    parse_config,
    risk_quantities,
    stationary_distribution,
    validate_model,
)


def _raw(**kw):
    raw = {
        "mu": [[0.04], [0.08]],
        "sigma": [[[0.4]], [[0.2]]],
        "r": [0.02, 0.04],
        "Lambda": [[-0.5, 0.5], [0.5, -0.5]],
    }
    raw.update(kw)
    return raw


def test_shen_risk_quantities():
    rq = risk_quantities(load_model("shen"))
    np.testing.assert_allclose(rq.m[:, 0], [0.02, 0.04], atol=1e-15)
    np.testing.assert_allclose(rq.rho[:, 0], [0.125, 1.0], rtol=1e-12)
    np.testing.assert_allclose(rq.ell, [0.0025, 0.04], rtol=1e-12)


def test_two_asset_risk_quantities():
    sigma = np.array([[[0.3, 0.0], [0.1, 0.2]], [[0.2, 0.05], [0.0, 0.25]]])
    model = validate_model(
        {"mu": [[0.1, 0.05], [0.0, 0.02]], "sigma": sigma, "r": [0.01, 0.02], "Lambda": [[-1, 1], [2, -2]]}
    )
    rq = risk_quantities(model)
    for i in range(2):
        a = sigma[i] @ sigma[i].T
        m = model.mu[i] - model.r[i]
        np.testing.assert_allclose(rq.rho[i], np.linalg.solve(a, m), rtol=1e-12)
        np.testing.assert_allclose(rq.ell[i], m @ np.linalg.solve(a, m), rtol=1e-12)


def test_model_is_read_only():
    model = load_model("shen")
    with pytest.raises(ValueError):
        model.mu[0, 0] = 1.0


@pytest.mark.parametrize(
    "override, exc",
    [
        ({"Lambda": [[-0.5, 0.6], [0.5, -0.5]]}, InvalidGenerator),
        ({"Lambda": [[0.5, -0.5], [0.5, -0.5]]}, InvalidGenerator),
        ({"r": [0.02, -0.01]}, NegativeRate),
        ({"r": [0.02]}, DimensionMismatch),
        ({"sigma": [[[0.4]], [[0.0]]]}, SingularCovariance),
        ({"mu": [[0.04, 0.1], [0.08, 0.1]]}, DimensionMismatch),
        ({"Lambda": [[-1, 0.5, 0.5], [0.5, -1, 0.5], [0.5, 0.5, -1]]}, DimensionMismatch),
    ],
)
def test_validation_errors(override, exc):
    with pytest.raises(exc):
        validate_model(_raw(**override))


def test_validation_errors_are_value_errors():
    with pytest.raises(ValueError):
        validate_model(_raw(r=[-1.0, 0.0]))


def test_singular_two_asset_covariance():
    sigma = np.array([[[0.2, 0.2], [0.2, 0.2]]])
    with pytest.raises(SingularCovariance):
        validate_model({"mu": [[0.1, 0.1]], "sigma": sigma, "r": [0.0], "Lambda": [[0.0]]})


def test_parse_config_round_trip():
    doc = {
        "model": {"l": 2, "d": 1},
        "regime": {"1": {"mu": [0.04], "sigma": [[0.4]], "r": 0.02}, "2": {"mu": [0.08], "sigma": [[0.2]], "r": 0.04}},
        "generator": {"rows": [[-0.5, 0.5], [0.5, -0.5]]},
    }
    model = parse_config(doc)
    ref = load_model("shen")
    np.testing.assert_array_equal(model.Lambda, ref.Lambda)
    np.testing.assert_array_equal(model.a, ref.a)


@pytest.mark.parametrize(
    "mutate, exc",
    [
        (lambda d: d.pop("generator"), ValidationError),
        (lambda d: d["model"].update(l=3), DimensionMismatch),
        (lambda d: d["regime"]["2"].pop("r"), ValidationError),
        (lambda d: d.update(transition={"rows": [[1, 0], [0, 1]]}), ValidationError),
    ],
)
def test_parse_config_errors(mutate, exc):
    doc = {
        "model": {"l": 2, "d": 1},
        "regime": {"1": {"mu": [0.04], "sigma": [[0.4]], "r": 0.02}, "2": {"mu": [0.08], "sigma": [[0.2]], "r": 0.04}},
        "generator": {"rows": [[-0.5, 0.5], [0.5, -0.5]]},
    }
    mutate(doc)
    with pytest.raises(exc):
        parse_config(doc)


def test_load_missing_file():
    with pytest.raises(ValidationError):
        load_model("/nonexistent/model.toml")


def test_load_malformed_toml(tmp_path):
    p = tmp_path / "m.toml"
    p.write_text("[model\nl = 2")
    with pytest.raises(ValidationError):
        load_model(p)


def test_transition_config_matches_log():
    model = load_model("apple_transition")
    Q = np.array([[0.76, 0.24], [0.059, 0.941]])
    np.testing.assert_allclose(expm(model.Lambda / 252), Q, atol=1e-12)


# generator calibration ---------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(
    p=st.floats(0.01, 0.45),
    q=st.floats(0.01, 0.45),
    periods=st.sampled_from([12.0, 52.0, 252.0]),
)
def test_generator_round_trip(p, q, periods):
    Q = np.array([[1 - p, p], [q, 1 - q]])
    L = generator_from_transition(Q, periods)
    assert np.all(L[~np.eye(2, dtype=bool)] >= 0)
    np.testing.assert_allclose(L.sum(axis=1), 0.0, atol=1e-9)
    np.testing.assert_allclose(expm(L / periods), Q, atol=1e-10)


def test_generator_from_known_rates():
    L = np.array([[-3.0, 2.0, 1.0], [0.5, -1.0, 0.5], [0.2, 0.3, -0.5]])
    np.testing.assert_allclose(generator_from_transition(expm(L / 12), 12), L, atol=1e-9)


def test_no_generator_for_negative_eigenvalue():
    Q = np.array([[0.2, 0.8], [0.9, 0.1]])
    with pytest.raises(NoValidGenerator, match="approximate_generator"):
        generator_from_transition(Q, 252)


def test_no_generator_for_negative_off_diagonal():
    # log of this matrix has a negative off-diagonal rate
    Q = np.array([[0.9, 0.1, 0.0], [0.0, 0.9, 0.1], [0.1, 0.0, 0.9]])
    with pytest.raises(NoValidGenerator):
        generator_from_transition(Q, 252)


def test_approximate_generator_fallback():
    Q = np.array([[0.2, 0.8], [0.9, 0.1]])
    L = approximate_generator(Q, 252)
    np.testing.assert_allclose(L, 252 * (Q - np.eye(2)))
    np.testing.assert_allclose(L.sum(axis=1), 0.0, atol=1e-12)


def test_transition_rows_must_be_stochastic():
    with pytest.raises(ValidationError):
        generator_from_transition([[0.5, 0.4], [0.1, 0.9]], 252)


def test_discrete_to_continuous_daily():
    mu, sigma = discrete_to_continuous([-0.0018, 0.0018], [0.0283, 0.0123], 252)
    np.testing.assert_allclose(sigma, [0.44925, 0.19526], atol=1e-4)
    np.testing.assert_allclose(mu, [-0.352688, 0.472663], atol=1e-4)


def test_discrete_to_continuous_rejects_zero_vol():
    with pytest.raises(NonPositiveVol):
        discrete_to_continuous([0.0], [0.0], 252)


@pytest.mark.parametrize(
    "L, pi",
    [
        ([[-0.5, 0.5], [0.5, -0.5]], [0.5, 0.5]),
        ([[-71.862, 71.862], [17.6661, -17.6661]], [17.6661 / 89.5281, 71.862 / 89.5281]),
    ],
)
def test_stationary_distribution(L, pi):
    np.testing.assert_allclose(stationary_distribution(L), pi, rtol=1e-10)
