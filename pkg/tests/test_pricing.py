"""Monte Carlo, Fourier and Black-Scholes pricing."""

import warnings

import numpy as np
import pytest
from conftest import random_model
from hypothesis import given, settings
from hypothesis import strategies as st

from rsgbm import (
    AuxFunctions,
    FourierPricer,
    GridPricer,
    MissingGradient,
    MultiAssetUnsupported,
    NestedMCPricer,
    Payoff,
    alpha,
    bs_delta,
    bs_price,
    fourier_call,
    fourier_call_delta,
    fourier_put,
    load_model,
    mc_delta,
    mc_price,
    mc_price_and_delta,
    validate_model,
)
from rsgbm.pricing import Z95, _clip_price, identity_payoff
from rsgbm.simulate import chunk_rng, sample_regime_paths


def single_regime(sigma=0.2658, r=0.0216, mu=0.1):
    return validate_model({"mu": [mu], "sigma": [sigma], "r": [r], "Lambda": [[0.0]]})


# Black-Scholes ------------------------------------------------------------------


def test_bs_textbook_value():
    assert bs_price(100, 100, 0.2, 0.05, 1.0).value == pytest.approx(10.450583572185565, abs=1e-12)
    assert bs_delta(100, 100, 0.2, 0.05, 1.0) == pytest.approx(0.6368306511756191, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(
    s=st.floats(10, 500),
    K=st.floats(10, 500),
    sigma=st.floats(0.05, 1.0),
    r=st.floats(0.0, 0.1),
    T=st.floats(0.01, 5.0),
)
def test_bs_parity(s, K, sigma, r, T):
    c = bs_price(s, K, sigma, r, T).value
    p = bs_price(s, K, sigma, r, T, "put").value
    assert c - p == pytest.approx(s - K * np.exp(-r * T), abs=1e-10 * max(s, K))
    assert bs_delta(s, K, sigma, r, T) - bs_delta(s, K, sigma, r, T, "put") == pytest.approx(1.0)


def test_bs_zero_strike():
    assert bs_price(129.95, 0.0, 0.3, 0.02, 1.0).value == 129.95


def test_bs_delta_is_derivative():
    h = 1e-4
    fd = (bs_price(100 + h, 95, 0.3, 0.02, 0.5).value - bs_price(100 - h, 95, 0.3, 0.02, 0.5).value) / (2 * h)
    assert bs_delta(100, 95, 0.3, 0.02, 0.5) == pytest.approx(fd, abs=1e-7)


# Fourier ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "i0, K, price, delta",
    [
        (0, 70, 34.09563230436526, 0.8900093784102281),
        (0, 100, 15.636074034084643, 0.5998761528696517),
        (0, 120, 8.712564659819037, 0.39941268851615613),
        (1, 70, 33.11915502499114, 0.9583397702480793),
        (1, 100, 11.358700835061121, 0.6118500076924556),
        (1, 120, 4.410071701794635, 0.3063044533845378),
    ],
)
def test_shen_fourier_frozen(shen, shen_aux, i0, K, price, delta):
    assert fourier_call(shen, shen_aux, K, 100.0, i0, 1.0).value == pytest.approx(price, abs=1e-6)
    assert fourier_call_delta(shen, shen_aux, K, 100.0, i0, 1.0) == pytest.approx(delta, abs=1e-6)


@pytest.mark.parametrize("K", [60.0, 100.0, 129.95, 130.0, 200.0])
@pytest.mark.parametrize("T", [20 / 252, 1.0, 3.0])
def test_fourier_single_regime_matches_bs(K, T):
    model = single_regime()
    aux = AuxFunctions(model, T)
    c = fourier_call(model, aux, K, 129.95, 0, T).value
    assert c == pytest.approx(bs_price(129.95, K, 0.2658, 0.0216, T).value, abs=1e-6)
    d = fourier_call_delta(model, aux, K, 129.95, 0, T)
    assert d == pytest.approx(bs_delta(129.95, K, 0.2658, 0.0216, T), abs=1e-6)


def test_fourier_deep_in_the_money(shen, shen_aux):
    c = fourier_call(shen, shen_aux, 1e-3, 100.0, 0, 1.0)
    assert c.value == pytest.approx(100.0 - shen_aux.beta(1.0)[0] * 1e-3, abs=1e-5)
    assert fourier_call_delta(shen, shen_aux, 1e-3, 100.0, 0, 1.0) == pytest.approx(1.0, abs=1e-6)


def test_fourier_monotone_in_strike(shen, shen_aux):
    K = np.linspace(40, 200, 33)
    for i in range(2):
        prices = [fourier_call(shen, shen_aux, k, 100.0, i, 1.0).value for k in K]
        deltas = [fourier_call_delta(shen, shen_aux, k, 100.0, i, 1.0) for k in K]
        assert np.all(np.diff(prices) < 0)
        assert np.all(np.diff(deltas) < 0)
        assert all(0.0 <= d <= 1.0 for d in deltas)


@pytest.mark.parametrize("i0", [0, 1])
def test_fourier_delta_is_derivative(shen, shen_aux, i0):
    h = 1e-3
    up = fourier_call(shen, shen_aux, 100.0, 100.0 + h, i0, 1.0).value
    dn = fourier_call(shen, shen_aux, 100.0, 100.0 - h, i0, 1.0).value
    assert fourier_call_delta(shen, shen_aux, 100.0, 100.0, i0, 1.0) == pytest.approx((up - dn) / (2 * h), abs=1e-5)


def test_fourier_put_parity(shen, shen_aux):
    for K in (80.0, 110.0):
        c = fourier_call(shen, shen_aux, K, 100.0, 1, 1.0).value
        p = fourier_put(shen, shen_aux, K, 100.0, 1, 1.0).value
        assert c - p == pytest.approx(100.0 - shen_aux.beta(1.0)[1] * K, abs=1e-10)


@pytest.mark.parametrize("seed", [0, 1])
def test_regime_collapse(seed):
    # identical regimes: price does not depend on the start regime or on Lambda
    rng = np.random.default_rng(seed)
    L = random_model(rng, 3).Lambda
    model = validate_model({"mu": [0.05] * 3, "sigma": [0.3] * 3, "r": [0.01] * 3, "Lambda": L})
    aux = AuxFunctions(model, 1.0)
    ref = bs_price(100.0, 105.0, 0.3, 0.01, 1.0).value
    for i in range(3):
        assert fourier_call(model, aux, 105.0, 100.0, i, 1.0).value == pytest.approx(ref, abs=1e-6)


def test_fourier_rejects_two_assets():
    rng = np.random.default_rng(0)
    model = random_model(rng, 2, d=2)
    with pytest.raises(MultiAssetUnsupported):
        fourier_call(model, AuxFunctions(model), 1.0, 1.0, 0, 1.0)


def test_clip_warns_on_negative():
    with pytest.warns(RuntimeWarning):
        assert _clip_price(-1e-6) == 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert _clip_price(-1e-10) == 0.0


# Monte Carlo --------------------------------------------------------------------------


def test_constant_payoff_is_beta(shen, shen_aux):
    one = Payoff.custom(lambda S: np.ones(S.shape[0]))
    est = mc_price(shen, shen_aux, one, 100.0, 1, 1.0, 1000, seed=3)
    assert est.value == pytest.approx(shen_aux.beta(1.0)[1], rel=1e-14)
    assert est.half_width == 0.0


@pytest.mark.parametrize("i0", [0, 1])
def test_identity_payoff_delta_is_one(shen, shen_aux, i0):
    (price, (delta,)), = mc_price_and_delta(shen, shen_aux, [identity_payoff()], 100.0, i0, 1.0, 50_000, seed=i0)
    assert abs(price.value - 100.0) <= 3 * price.half_width / Z95
    assert abs(delta.value - 1.0) <= 3 * delta.half_width / Z95


def test_single_regime_mc_contains_bs():
    model = single_regime(sigma=0.25, r=0.03)
    aux = AuxFunctions(model, 1.0)
    est = mc_price(model, aux, Payoff.call(100.0), 100.0, 0, 1.0, 200_000, seed=1)
    lo, hi = est.interval
    assert lo <= bs_price(100.0, 100.0, 0.25, 0.03, 1.0).value <= hi


@pytest.mark.parametrize("K", [80.0, 100.0, 120.0])
def test_put_call_parity_mc(shen, shen_aux, K):
    c = mc_price(shen, shen_aux, Payoff.call(K), 100.0, 0, 1.0, 100_000, seed=4)
    p = mc_price(shen, shen_aux, Payoff.put(K), 100.0, 0, 1.0, 100_000, seed=5)
    se = np.hypot(c.half_width, p.half_width) / Z95
    assert abs((c.value - p.value) - (100.0 - shen_aux.beta(1.0)[0] * K)) <= 3 * se


@pytest.mark.parametrize("i0", [0, 1])
def test_mc_matches_fourier(shen, shen_aux, i0):
    strikes = (70.0, 100.0, 120.0)
    res = mc_price_and_delta(shen, shen_aux, [Payoff.call(K) for K in strikes], 100.0, i0, 1.0, 100_000, seed=i0)
    for K, (price, (delta,)) in zip(strikes, res):
        f = fourier_call(shen, shen_aux, K, 100.0, i0, 1.0).value
        fd = fourier_call_delta(shen, shen_aux, K, 100.0, i0, 1.0)
        assert abs(price.value - f) <= price.half_width + 2e-3
        assert abs(delta.value - fd) <= delta.half_width + 1e-4


@pytest.mark.parametrize("name, s0, T", [("shen", 100.0, 1.0), ("apple", 129.95, 20 / 252)])
def test_weighted_physical_chain_oracle(name, s0, T):
    """Independent route: untilted chain, path weight exp(-int(ell + r)) / gamma, risk-neutral terminal."""
    model = load_model(name)
    aux = AuxFunctions(model, T)
    gen = aux.generator("constant")
    n = 200_000
    K = s0
    for i0 in range(2):
        paths = sample_regime_paths(gen, aux.uniformization_bound(gen, T), i0, T, chunk_rng(40, i0), n)
        w = np.exp(-paths.integrate(aux.risk.ell + model.r)) / aux.gamma(T)[i0]
        a = model.a[:, 0, 0]
        var = paths.integrate(a)
        drift = paths.integrate(model.r - a / 2)
        Z = np.random.default_rng(41 + i0).standard_normal(n)
        y = w * np.maximum(s0 * np.exp(drift + np.sqrt(var) * Z) - K, 0.0)
        f = fourier_call(model, aux, K, s0, i0, T).value
        assert abs(y.mean() - f) <= 3 * y.std(ddof=1) / np.sqrt(n)


def test_shared_sample_matches_separate_calls(shen, shen_aux):
    pay = Payoff.call(100.0)
    (p, (d,)), = mc_price_and_delta(shen, shen_aux, [pay], 100.0, 0, 1.0, 5000, seed=9)
    assert p.value == pytest.approx(mc_price(shen, shen_aux, pay, 100.0, 0, 1.0, 5000, seed=9).value, rel=1e-12)
    assert d.value == pytest.approx(mc_delta(shen, shen_aux, pay, 100.0, 0, 1.0, 5000, seed=9)[0].value, rel=1e-12)


def test_mc_thread_independent(shen, shen_aux):
    pay = Payoff.call(100.0)
    a = mc_price(shen, shen_aux, pay, 100.0, 0, 1.0, 150_000, seed=2, threads=1)
    b = mc_price(shen, shen_aux, pay, 100.0, 0, 1.0, 150_000, seed=2, threads=4)
    assert a == b


def test_missing_gradient(shen, shen_aux):
    pay = Payoff.custom(lambda S: S[:, 0] ** 2)
    with pytest.raises(MissingGradient):
        mc_delta(shen, shen_aux, pay, 100.0, 0, 1.0, 10)


def test_needs_two_pairs(shen, shen_aux):
    with pytest.raises(ValueError):
        mc_price(shen, shen_aux, Payoff.call(100.0), 100.0, 0, 1.0, 1)


def test_two_asset_exchange_like_payoff():
    # basket of two assets with no switching reduces to lognormal moments
    rng = np.random.default_rng(4)
    model = random_model(rng, 2, d=2).with_generator(np.zeros((2, 2)))
    aux = AuxFunctions(model, 1.0)
    pay = Payoff.custom(lambda S: S.sum(axis=1), lambda S: np.ones_like(S))
    est = mc_price(model, aux, pay, [1.0, 2.0], 0, 1.0, 50_000, seed=0)
    assert abs(est.value - 3.0) <= 3 * est.half_width / Z95
    deltas = mc_delta(model, aux, pay, [1.0, 2.0], 0, 1.0, 50_000, seed=0)
    for dlt in deltas:
        assert abs(dlt.value - 1.0) <= 3 * dlt.half_width / Z95


# path pricers ------------------------------------------------------------------------------


def test_fourier_pricer_batches(shen, shen_aux):
    pricer = FourierPricer(shen_aux, Payoff.call(100.0), 1.0)
    s = np.array([[80.0], [100.0], [120.0], [100.0]])
    i = np.array([0, 0, 1, 1])
    C, D = pricer.price_and_grad(0.25, s, i)
    for k in range(4):
        ref = fourier_call(shen, shen_aux, 100.0, s[k, 0], i[k], 0.75).value
        assert C[k] == pytest.approx(ref, abs=1e-6)
        assert D[k, 0] == pytest.approx(fourier_call_delta(shen, shen_aux, 100.0, s[k, 0], i[k], 0.75), abs=1e-6)


def test_fourier_pricer_put(shen, shen_aux):
    pricer = FourierPricer(shen_aux, Payoff.put(100.0), 1.0)
    C, D = pricer.price_and_grad(0.0, [[100.0]], [0])
    assert C[0] == pytest.approx(fourier_put(shen, shen_aux, 100.0, 100.0, 0, 1.0).value, abs=1e-8)
    assert D[0, 0] == pytest.approx(fourier_call_delta(shen, shen_aux, 100.0, 100.0, 0, 1.0) - 1.0, abs=1e-8)


def test_grid_pricer_matches_fourier(shen_aux):
    base = FourierPricer(shen_aux, Payoff.call(100.0), 1.0)
    grid = GridPricer(base, s_ref=100.0)
    rng = np.random.default_rng(0)
    s = rng.uniform(50, 200, size=(20_000, 1))
    i = rng.integers(0, 2, size=20_000)
    for t in (0.0, 0.5, 0.99):
        C0, D0 = base.price_and_grad(t, s, i)
        C1, D1 = grid.price_and_grad(t, s, i)
        np.testing.assert_allclose(C1, C0, atol=1e-4)
        np.testing.assert_allclose(D1, D0, atol=1e-3)


def test_grid_pricer_outside_range(shen_aux):
    base = FourierPricer(shen_aux, Payoff.call(100.0), 1.0)
    grid = GridPricer(base, s_ref=100.0, width=1.0)
    s = np.concatenate([[5.0, 900.0], np.linspace(60, 160, 5000)])[:, None]
    C0, _ = base.price_and_grad(0.3, s, np.zeros(s.shape[0], dtype=int))
    C1, _ = grid.price_and_grad(0.3, s, np.zeros(s.shape[0], dtype=int))
    np.testing.assert_allclose(C1, C0, atol=1e-4)


def test_nested_pricer_matches_fourier(shen, shen_aux):
    pay = Payoff.call(100.0)
    nested = NestedMCPricer(shen, shen_aux, pay, 1.0, n_inner=50_000, seed=1)
    C, D = nested.price_and_grad(0.5, [[100.0], [110.0]], [0, 1])
    for k, (s, i) in enumerate(((100.0, 0), (110.0, 1))):
        ref = fourier_call(shen, shen_aux, 100.0, s, i, 0.5).value
        assert C[k] == pytest.approx(ref, abs=0.1)
        assert D[k, 0] == pytest.approx(fourier_call_delta(shen, shen_aux, 100.0, s, i, 0.5), abs=0.01)


def test_nested_pricer_at_maturity(shen, shen_aux):
    nested = NestedMCPricer(shen, shen_aux, Payoff.call(100.0), 1.0, n_inner=10)
    c, d = nested.price_and_grad_one(1.0, np.array([120.0]), 0)
    assert c == 20.0
    assert d[0] == 1.0


def test_alpha_identity_payoff(shen_aux):
    class SpotPricer:
        aux = shen_aux

        def price_and_grad(self, t, s, i):
            s = np.atleast_2d(s)
            return s[:, 0].copy(), np.ones_like(s)

    a = alpha(0.3, [[100.0], [50.0]], [0, 1], SpotPricer())
    np.testing.assert_allclose(a[:, 0], 1.0 + shen_aux.risk.rho[[0, 1], 0])


def test_alpha_martingale_case():
    model = validate_model(
        {"mu": [0.02, 0.04], "sigma": [0.4, 0.2], "r": [0.02, 0.04], "Lambda": [[-0.5, 0.5], [0.5, -0.5]]}
    )
    aux = AuxFunctions(model, 1.0)
    pricer = FourierPricer(aux, Payoff.call(100.0), 1.0)
    s, i = [[90.0], [110.0]], [0, 1]
    _, D = pricer.price_and_grad(0.2, s, i)
    np.testing.assert_allclose(alpha(0.2, s, i, pricer), D)


@pytest.mark.parametrize("scale", [1e-7, 1e-3, 1.0, 30.0])
def test_batched_2x2_exponential(scale):
    from scipy.linalg import expm

    from rsgbm.pricing import _expm_batch

    rng = np.random.default_rng(3)
    M = scale * (rng.normal(size=(200, 2, 2)) + 1j * rng.normal(size=(200, 2, 2)))
    M += rng.normal(size=(200, 1, 1)) * np.eye(2)  # shift so the exponent does not overflow
    ref = np.stack([expm(m) for m in M])
    np.testing.assert_allclose(_expm_batch(M), ref, rtol=1e-9, atol=1e-12 * np.abs(ref).max())
