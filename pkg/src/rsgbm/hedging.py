"""Simulation of the variance-optimal hedge under the physical measure.

On a grid ``0 = t_0 < ... < t_n = T`` the discounted portfolio follows the
self-financing rule ``V_{k+1} = V_k + phi_k . (X_{k+1} - X_k)`` with
``X = B S`` and

    phi_k = grad C(t_k, S_k, tau_{t_k-}) + G_k rho(tau_{t_k-}) / X_k,
    G_k   = B_k C(t_k, S_k, tau_k) - V_k,   V_0 = C(0, s0, i0).

Assets move by exact lognormal segments between grid points (the regime path
is simulated exactly and integrated piecewise), so the only discretization is
the rebalancing frequency.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .auxfn import AuxFunctions
from .errors import GridTooCoarse, PricerFailure, ValidationError
from .model import RegimeModel
from .pricing import Z95, FourierPricer, GridPricer, NestedMCPricer, Payoff
from .simulate import (
    MeasureTag,
    chunk_rng,
    gaussian_factor,
    log_drift,
    map_chunks,
    sample_regime_paths,
)

HEDGE_STREAM = 11


@dataclass
class HedgeConfig:
    """Settings of a hedging simulation.

    ``pricer`` is ``"fourier"`` (one-asset calls and puts), ``"grid"`` (the
    Fourier pricer interpolated on a log-spot grid) or ``"nested"`` (inner
    Monte Carlo with ``n_inner`` antithetic pairs per evaluation).
    """

    n_steps: int = 100
    n_paths: int = 10_000
    pricer: str = "fourier"
    n_inner: int = 20_000
    seed: int = 0
    checkpoints: Sequence[float] = ()
    all_regimes: bool = False
    threads: Optional[int] = None

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValidationError("n_steps must be at least 1")
        if self.n_paths < 2:
            raise ValidationError("n_paths must be at least 2")
        if self.pricer not in ("fourier", "grid", "nested"):
            raise ValidationError(f"unknown pricer {self.pricer!r}")


@dataclass
class HedgeResults:
    """Per-path records on the hedge grid.

    Arrays have a leading path axis and a grid axis of length ``n_steps + 1``
    (``phi`` and ``jumps`` have ``n_steps``).
    """

    t: np.ndarray
    S: np.ndarray
    tau: np.ndarray
    tau_left: np.ndarray
    B: np.ndarray
    C: np.ndarray
    V: np.ndarray
    phi: np.ndarray
    G: np.ndarray
    V_delta: np.ndarray
    payoff_T: np.ndarray
    jumps: np.ndarray
    C_all: Optional[np.ndarray] = None

    @property
    def X(self) -> np.ndarray:
        return self.B[..., None] * self.S

    @property
    def n_paths(self) -> int:
        return self.S.shape[0]

    @property
    def n_steps(self) -> int:
        return self.t.size - 1

    def grid_index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.t - t)))
        if abs(self.t[k] - t) > 1e-9 * max(1.0, self.t[-1]):
            raise ValidationError(f"time {t} is not on the hedge grid")
        return k


@dataclass
class HedgeStats:
    C0: float
    phi0: np.ndarray
    mean_G_T: float
    sd_G_T: float
    half_width: float
    rms_he: float
    n_paths: int
    n_steps: int
    checkpoints: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "C0": self.C0,
            "phi0": np.asarray(self.phi0).tolist(),
            "mean_G_T": self.mean_G_T,
            "sd_G_T": self.sd_G_T,
            "ci": [self.mean_G_T - self.half_width, self.mean_G_T + self.half_width],
            "half_width": self.half_width,
            "rms_he": self.rms_he,
            "n_paths": self.n_paths,
            "n_steps": self.n_steps,
            "checkpoints": self.checkpoints,
        }


def _mean_ci(x: np.ndarray):
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    m = x.mean(axis=0)
    hw = Z95 * x.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(m)
    return m, hw


def make_pricer(model, aux, payoff: Payoff, s0, T: float, config: HedgeConfig):
    if config.pricer == "nested" or model.d != 1 or payoff.kind not in ("call", "put"):
        if config.pricer != "nested":
            raise PricerFailure("Fourier pricers need a one-asset call or put; use pricer='nested'")
        return NestedMCPricer(model, aux, payoff, T, n_inner=config.n_inner, seed=config.seed)
    base = FourierPricer(aux, payoff, T)
    if config.pricer == "grid":
        return GridPricer(base, s_ref=float(np.ravel(s0)[0]))
    return base


def _simulate_physical(model, aux, s0, i0, T, grid, config):
    """Asset values, discount factors and regimes on the grid for all paths."""
    gen = aux.generator("constant")
    bound = aux.uniformization_bound(gen, T)
    v = log_drift(model, MeasureTag.PHYSICAL)
    d = model.d
    n_steps = grid.size - 1

    def work(c, size):
        rng = chunk_rng(config.seed, c, HEDGE_STREAM)
        paths = sample_regime_paths(gen, bound, i0, T, rng, size)
        Fv = np.stack([paths.integrate(v, until=t) for t in grid], axis=1)
        Fa = np.stack([paths.integrate(model.a, until=t) for t in grid], axis=1)
        Fr = np.stack([paths.integrate(model.r, until=t) for t in grid], axis=1)
        Z = rng.standard_normal(size=(size, n_steps, d))
        dA = np.diff(Fa, axis=1)
        L = gaussian_factor(dA.reshape(-1, d, d)).reshape(size, n_steps, d, d)
        incr = np.diff(Fv, axis=1) + np.einsum("nkij,nkj->nki", L, Z)
        logS = np.log(s0) + np.concatenate([np.zeros((size, 1, d)), np.cumsum(incr, axis=1)], axis=1)
        tau = np.stack([paths.states_at(t) for t in grid], axis=1)
        tau_left = np.stack([paths.states_at(t, left=True) for t in grid], axis=1)
        tau_left[:, 0] = tau[:, 0]
        jumps = np.stack([paths.jumps_between(grid[k], grid[k + 1]) for k in range(n_steps)], axis=1)
        return np.exp(logS), np.exp(-Fr), tau, tau_left, jumps

    parts = map_chunks(work, config.n_paths, config.threads)
    return [np.concatenate(p, axis=0) for p in zip(*parts)]


def _evaluate(pricer, t, S, regimes, k):
    if isinstance(pricer, NestedMCPricer):
        keys = [(p, k) for p in range(S.shape[0])]
        return pricer.price_and_grad(t, S, regimes, keys=keys)
    return pricer.price_and_grad(t, S, regimes)


def simulate_hedge(
    model: RegimeModel,
    aux: AuxFunctions,
    payoff: Payoff,
    s0,
    i0: int,
    T: float,
    config: HedgeConfig,
    pricer=None,
):
    """Simulate the optimal hedge along ``config.n_paths`` physical paths.

    Returns
    -------
    stats : HedgeStats
    results : HedgeResults
    """
    s0 = np.broadcast_to(np.asarray(s0, dtype=float), (model.d,)).copy()
    grid = np.linspace(0.0, T, config.n_steps + 1)
    pricer = make_pricer(model, aux, payoff, s0, T, config) if pricer is None else pricer
    S, B, tau, tau_left, jumps = _simulate_physical(model, aux, s0, i0, T, grid, config)
    n, d, l = S.shape[0], model.d, model.l

    coarse = (jumps > 10).any(axis=1).mean()
    if coarse > 0.01:
        warnings.warn(
            f"{coarse:.1%} of paths have more than 10 regime jumps between hedge dates",
            GridTooCoarse,
            stacklevel=2,
        )

    rho = aux.risk.rho
    X = B[..., None] * S
    C = np.empty((n, grid.size))
    V = np.empty((n, grid.size))
    Gm = np.empty((n, grid.size))
    Vd = np.empty((n, grid.size))
    phi = np.empty((n, config.n_steps, d))
    C_all = np.empty((n, grid.size, l)) if config.all_regimes else None

    payoff_T = payoff(S[:, -1])
    for k in range(config.n_steps + 1):
        t = grid[k]
        if k == config.n_steps:
            C[:, k] = payoff_T
            if C_all is not None:
                C_all[:, k, :] = payoff_T[:, None]
            break
        if C_all is not None:
            Dk_all = np.empty((n, l, d))
            for j in range(l):
                cj, dj = _evaluate(pricer, t, S[:, k], np.full(n, j), k)
                C_all[:, k, j], Dk_all[:, j] = cj, dj
            rows = np.arange(n)
            C[:, k] = C_all[rows, k, tau[:, k]]
            C_left, D_left = C_all[rows, k, tau_left[:, k]], Dk_all[rows, tau_left[:, k]]
        else:
            C_left, D_left = _evaluate(pricer, t, S[:, k], tau_left[:, k], k)
            C[:, k] = C_left
            moved = tau[:, k] != tau_left[:, k]
            if moved.any():
                C[moved, k] = _evaluate(pricer, t, S[moved, k], tau[moved, k], k)[0]
        if k == 0:
            C0 = float(C[0, 0])
            V[:, 0] = C0
            Vd[:, 0] = C0
            phi0 = D_left[0].copy()
        G_left = B[:, k] * C_left - V[:, k]
        Gm[:, k] = B[:, k] * C[:, k] - V[:, k]
        phi[:, k] = D_left + G_left[:, None] * rho[tau_left[:, k]] / X[:, k]
        dX = X[:, k + 1] - X[:, k]
        V[:, k + 1] = V[:, k] + np.einsum("nj,nj->n", phi[:, k], dX)
        Vd[:, k + 1] = Vd[:, k] + np.einsum("nj,nj->n", D_left, dX)
    Gm[:, -1] = B[:, -1] * C[:, -1] - V[:, -1]

    results = HedgeResults(
        t=grid, S=S, tau=tau, tau_left=tau_left, B=B, C=C, V=V, phi=phi, G=Gm,
        V_delta=Vd, payoff_T=payoff_T, jumps=jumps, C_all=C_all,
    )
    GT = Gm[:, -1]
    m, hw = _mean_ci(GT)
    stats = HedgeStats(
        C0=C0,
        phi0=phi0,
        mean_G_T=float(m),
        sd_G_T=float(GT.std(ddof=1)),
        half_width=float(hw),
        rms_he=float(np.sqrt(np.mean(GT**2))),
        n_paths=n,
        n_steps=config.n_steps,
    )
    if config.checkpoints:
        stats.checkpoints = martingale_diagnostics(results, aux, config.checkpoints)
    return stats, results


def martingale_diagnostics(results: HedgeResults, aux: AuxFunctions, checkpoints, pairs=()):
    """Sample means (with 95% half-widths) of the hedging-error martingales.

    For each checkpoint ``t``: ``gamma_{tau_t}(T - t) G_t`` and
    ``gamma_{tau_t}(T - t) X_t G_t`` (one column per asset).  For each pair
    ``(U, V)``: ``G_T (X_V - X_U)``.  All have mean zero in theory.
    """
    T = results.t[-1]
    X = results.X
    rows = []
    for t in checkpoints:
        k = results.grid_index(t)
        g = aux.gamma(T - results.t[k])[results.tau[:, k]]
        y1 = g * results.G[:, k]
        y2 = (g * results.G[:, k])[:, None] * X[:, k]
        m1, h1 = _mean_ci(y1)
        m2, h2 = _mean_ci(y2)
        rows.append(
            {
                "kind": "checkpoint",
                "t": float(results.t[k]),
                "gamma_G": float(m1),
                "gamma_G_hw": float(h1),
                "gamma_X_G": np.asarray(m2).tolist(),
                "gamma_X_G_hw": np.asarray(h2).tolist(),
            }
        )
    GT = results.G[:, -1]
    for U, Vt in pairs:
        ku, kv = results.grid_index(U), results.grid_index(Vt)
        if ku > kv:
            raise ValidationError("pairs must satisfy U <= V")
        y = GT[:, None] * (X[:, kv] - X[:, ku])
        m, h = _mean_ci(y)
        rows.append(
            {
                "kind": "increment",
                "U": float(results.t[ku]),
                "V": float(results.t[kv]),
                "mean": np.asarray(m).tolist(),
                "hw": np.asarray(h).tolist(),
            }
        )
    return rows


def hedging_error_decomposition(results: HedgeResults, aux: AuxFunctions) -> dict:
    """Rebuild ``G`` from its martingale/jump/drift decomposition.

    Discretizes ``dG = -G dM + B dC_jump - B (tilde(T - u) C)(tau) du`` with
    ``dM = rho(tau)^T D(X)^{-1} dX`` on the hedge grid and compares it with
    the tracked ``G``.  Needs ``all_regimes=True`` in the hedge config.
    """
    if results.C_all is None:
        raise ValidationError("decomposition needs prices in every regime (HedgeConfig.all_regimes)")
    T = results.t[-1]
    X = results.X
    rho = aux.risk.rho
    tilde = aux.generator("tilde")
    n = results.n_paths
    rows = np.arange(n)
    R = np.zeros((n, results.t.size))
    jump_sum = np.zeros(n)
    for k in range(results.n_steps):
        t0, t1 = results.t[k], results.t[k + 1]
        i0 = results.tau[:, k]
        i1 = results.tau[:, k + 1]
        dM = np.einsum("nj,nj->n", rho[i0], (X[:, k + 1] - X[:, k]) / X[:, k])
        jump = results.B[:, k + 1] * (results.C_all[rows, k + 1, i1] - results.C_all[rows, k + 1, i0])
        Lt = tilde(T - t0)
        drift = results.B[:, k] * np.einsum("nj,nj->n", Lt[i0], results.C_all[:, k, :]) * (t1 - t0)
        R[:, k + 1] = R[:, k] - results.G[:, k] * dM + jump - drift
        jump_sum += jump
    diff = R - results.G
    return {
        "reconstructed": R,
        "discrepancy": diff,
        "jump_sum": jump_sum,
        "rms_T": float(np.sqrt(np.mean(diff[:, -1] ** 2))),
        "rms_path": float(np.sqrt(np.mean(diff**2))),
    }


def optimality_check(results: HedgeResults, shifts=(-0.5, 0.5)) -> dict:
    """Compare the sample hedging error of ``(C0, phi)`` with perturbed strategies.

    Returns, for each alternative, the mean excess ``HE(alt) - HE(C0, phi)``
    and its standard error (paired across paths).
    """
    GT = results.G[:, -1]
    base = GT**2
    BT = results.B[:, -1]
    out = {"HE": float(base.mean())}
    alts = {"delta_only": BT * results.payoff_T - results.V_delta[:, -1]}
    for s in shifts:
        alts[f"initial{s:+g}"] = GT - s
    n = GT.size
    for name, err in alts.items():
        diff = err**2 - base
        out[name] = {
            "HE": float((err**2).mean()),
            "excess": float(diff.mean()),
            "se": float(diff.std(ddof=1) / math.sqrt(n)),
        }
    return out
