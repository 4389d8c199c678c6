"""Published reference values and the routines that regenerate them.

Reference tables are stored as ``{(strike, regime): (value, half_width)}``
with 0-based regimes.  ``SHEN_ALT_MEASURE`` comes from a different martingale
measure and is kept only for side-by-side display.
"""

from __future__ import annotations

import time

import numpy as np

from .auxfn import AuxFunctions
from .model import generator_from_transition, load_model
from .pricing import Payoff, bs_delta, bs_price, fourier_call, fourier_call_delta, mc_price_and_delta

SHEN_STRIKES = (70, 80, 90, 100, 110, 120)
APPLE_STRIKES = (128, 129, 130)

SHEN_ALT_MEASURE = {
    (70, 0): 34.0904, (80, 0): 26.7779, (90, 0): 20.6144, (100, 0): 15.6171, (110, 0): 11.6953, (120, 0): 8.6931,
    (70, 1): 33.1151, (80, 1): 24.5557, (90, 1): 17.1617, (100, 1): 11.3358, (110, 1): 7.1553, (120, 1): 4.3873,
}

SHEN_REF_PRICE = {
    (70, 0): (34.0580, 0.0489), (70, 1): (33.1345, 0.0347),
    (80, 0): (26.6933, 0.0460), (80, 1): (24.6400, 0.0328),
    (90, 0): (20.4806, 0.0424), (90, 1): (17.3062, 0.0299),
    (100, 0): (15.4499, 0.0384), (100, 1): (11.5217, 0.0262),
    (110, 0): (11.5158, 0.0343), (110, 1): (7.3565, 0.0222),
    (120, 0): (8.5192, 0.0303), (120, 1): (4.5829, 0.0184),
}
SHEN_REF_PHI0 = {
    (70, 0): (0.8935, 0.0007), (70, 1): (0.9547, 0.0005),
    (80, 0): (0.8112, 0.0008), (80, 1): (0.8863, 0.0006),
    (90, 0): (0.7103, 0.0009), (90, 1): (0.7672, 0.0008),
    (100, 0): (0.6005, 0.0010), (100, 1): (0.6111, 0.0008),
    (110, 0): (0.4931, 0.0010), (110, 1): (0.4492, 0.0009),
    (120, 0): (0.3958, 0.0009), (120, 1): (0.3095, 0.0008),
}

APPLE_S0 = 129.95
APPLE_T = 20 / 252
APPLE_BS_SIGMA = 0.2658
APPLE_BS_RATE = 0.0216
APPLE_REF_BS = {128: (5.0304, 0.6034), 129: (4.4776, 0.5629), 130: (3.9658, 0.5220)}

APPLE_REF_PRICE = {
    (128, 0): (5.0210, 0.0094), (128, 1): (4.9813, 0.0094),
    (129, 0): (4.4653, 0.0090), (129, 1): (4.4236, 0.0090),
    (130, 0): (3.9523, 0.0085), (130, 1): (3.9097, 0.0085),
}
APPLE_REF_PHI0 = {
    (128, 0): (0.6070, 0.0007), (128, 1): (0.6092, 0.0007),
    (129, 0): (0.5648, 0.0007), (129, 1): (0.5659, 0.0007),
    (130, 0): (0.5222, 0.0007), (130, 1): (0.5222, 0.0007),
}

SHEN_BETA_1 = (0.9767, 0.9644)
SHEN_LAMBDA = 0.5185
APPLE_LAMBDA = 72.2522
APPLE_Q = ((0.7600, 0.2400), (0.0590, 0.9410))
APPLE_GENERATOR = ((-71.8620, 71.8620), (17.6661, -17.6661))
APPLE_REF_PERIOD_MOMENTS = {"mean": (-0.0018, 0.0018), "vol": (0.0283, 0.0123)}
APPLE_REF_ANNUAL = {"mu": (-0.3436, 0.4813), "sigma": (0.4486, 0.1945)}

DESK_PAIRS = 100_000
FULL_PAIRS = 500_000


def mc_table(config: str, strikes, s0: float, T: float, n_pairs: int, seed: int = 0, threads=None,
             ref_price=None, ref_phi=None):
    """Monte Carlo call values and initial hedges for every (strike, regime).

    Each regime uses one shared sample for all strikes.  Returns a list of
    row dicts; when reference tables are given, rows also carry the
    published numbers and whether the intervals overlap.
    """
    model = load_model(config)
    aux = AuxFunctions(model, T)
    payoffs = [Payoff.call(K) for K in strikes]
    rows = []
    for i in range(model.l):
        res = mc_price_and_delta(model, aux, payoffs, s0, i, T, n_pairs, seed=seed + i, threads=threads)
        for K, (price, deltas) in zip(strikes, res):
            row = {
                "strike": K,
                "regime": i + 1,
                "value": price.value,
                "half_width": price.half_width,
                "phi0": deltas[0].value,
                "phi0_half_width": deltas[0].half_width,
                "n_pairs": n_pairs,
            }
            if ref_price is not None:
                pv, ph = ref_price[(K, i)]
                dv, dh = ref_phi[(K, i)]
                row.update(
                    ref_value=pv, ref_half_width=ph, ref_phi0=dv, ref_phi0_half_width=dh,
                    value_overlap=bool(price.overlaps(pv, ph)),
                    phi0_overlap=bool(deltas[0].overlaps(dv, dh)),
                )
            rows.append(row)
    rows.sort(key=lambda r: (r["strike"], r["regime"]))
    return rows


def shen_table2(n_pairs: int = DESK_PAIRS, seed: int = 0, threads=None):
    return mc_table("shen", SHEN_STRIKES, 100.0, 1.0, n_pairs, seed, threads, SHEN_REF_PRICE, SHEN_REF_PHI0)


def apple_table8(n_pairs: int = DESK_PAIRS, seed: int = 0, threads=None):
    return mc_table("apple", APPLE_STRIKES, APPLE_S0, APPLE_T, n_pairs, seed, threads, APPLE_REF_PRICE, APPLE_REF_PHI0)


def table6():
    """Black-Scholes values and deltas for the Apple calls."""
    rows = []
    for K in APPLE_STRIKES:
        price = bs_price(APPLE_S0, K, APPLE_BS_SIGMA, APPLE_BS_RATE, APPLE_T).value
        delta = bs_delta(APPLE_S0, K, APPLE_BS_SIGMA, APPLE_BS_RATE, APPLE_T)
        rows.append({"strike": K, "bs": price, "delta": delta,
                     "ref_bs": APPLE_REF_BS[K][0], "ref_delta": APPLE_REF_BS[K][1]})
    return rows


def fourier_table(config: str, strikes, s0: float, T: float):
    """Fourier call values and deltas for every (strike, regime)."""
    model = load_model(config)
    aux = AuxFunctions(model, T)
    rows = []
    for K in strikes:
        for i in range(model.l):
            rows.append({
                "strike": K,
                "regime": i + 1,
                "value": fourier_call(model, aux, K, s0, i, T).value,
                "phi0": fourier_call_delta(model, aux, K, s0, i, T),
            })
    return rows


def offline_quantities():
    """beta(1) and the uniformization bound for the Shen market; bound and generator for Apple."""
    t0 = time.perf_counter()
    shen = load_model("shen")
    aux = AuxFunctions(shen, 1.0)
    apple = load_model("apple")
    aux_a = AuxFunctions(apple, APPLE_T)
    out = {
        "shen_beta_1": aux.beta(1.0).tolist(),
        "shen_lambda": aux.uniformization_bound(aux.generator("arrow"), 1.0).lam,
        "apple_lambda": aux_a.uniformization_bound(aux_a.generator("tilde"), APPLE_T).lam,
        "apple_generator": generator_from_transition(np.array(APPLE_Q), 252).tolist(),
    }
    out["seconds"] = time.perf_counter() - t0
    return out
