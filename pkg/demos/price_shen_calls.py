"""Call prices and initial hedges in the two-regime market, three ways.

The Fourier inversion is exact up to quadrature error, the forward-measure
Monte Carlo carries a 95% interval, and the untilted risk-neutral price shows
how little the variance-optimal measure moves prices when the market price
of risk is small.
"""

from rsgbm import AuxFunctions, Payoff, load_model, validate_model
from rsgbm.pricing import fourier_call, fourier_call_delta, mc_price_and_delta

model = load_model("shen")
aux = AuxFunctions(model, 1.0)
strikes = [70, 80, 90, 100, 110, 120]

# risk-neutral comparison: drift equal to the rate in every regime, so ell = 0
neutral = validate_model(
    {"mu": model.r.tolist(), "sigma": model.sigma[:, 0, 0].tolist(), "r": model.r.tolist(), "Lambda": model.Lambda}
)
aux_n = AuxFunctions(neutral, 1.0)

print("beta(1) =", aux.beta(1.0).round(6))
print(f"{'K':>4} {'i':>2} {'fourier':>9} {'mc':>9} {'+-':>7} {'phi0':>7} {'neutral':>9}")
for i in range(model.l):
    mc = mc_price_and_delta(model, aux, [Payoff.call(K) for K in strikes], 100.0, i, 1.0, 100_000, seed=i)
    for K, (price, _) in zip(strikes, mc):
        f = fourier_call(model, aux, K, 100.0, i, 1.0).value
        phi = fourier_call_delta(model, aux, K, 100.0, i, 1.0)
        n = fourier_call(neutral, aux_n, K, 100.0, i, 1.0).value
        print(f"{K:>4} {i + 1:>2} {f:9.4f} {price.value:9.4f} {price.half_width:7.4f} {phi:7.4f} {n:9.4f}")
