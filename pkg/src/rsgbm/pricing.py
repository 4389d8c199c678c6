"""European option values and initial hedges.

Monte Carlo prices use the forward law: ``C(0, s, i) = beta_i(T) E[Phi(S_T)]``
with regimes driven by ``arrow(T - u)`` and log-drift ``r - a/2``.  Deltas use
the pathwise estimator ``beta_i(T) E[S_T dPhi(S_T)] / s``.

For one asset the call splits into two tail probabilities,
``C = s P_check(S_T > K) - beta K P_fwd(S_T > K)``, each obtained by
Gil-Pelaez inversion of the closed-form transforms in :mod:`rsgbm.auxfn`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import ndtr
from scipy.interpolate import CubicSpline

from .auxfn import AuxFunctions
from .errors import (
    MissingGradient,
    MultiAssetUnsupported,
    PricerFailure,
    QuadratureNotConverged,
    ValidationError,
)
from .model import RegimeModel
from .simulate import MeasureTag, chunk_rng, map_chunks, sample_terminal

Z95 = 1.959963984540054


# -- payoffs ----------------------------------------------------------------


@dataclass(frozen=True)
class Payoff:
    """European payoff ``fn(S_T)`` with an optional a.e. gradient.

    ``fn`` and ``grad`` act on arrays of shape (n, d) and return (n,) and
    (n, d).  ``degree`` bounds the polynomial growth of ``fn``.
    """

    kind: str
    fn: Callable[[np.ndarray], np.ndarray]
    grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    strike: Optional[float] = None
    degree: int = 1

    def __call__(self, S):
        return self.fn(np.atleast_2d(S))

    def gradient(self, S):
        if self.grad is None:
            raise MissingGradient(f"payoff {self.kind!r} has no gradient")
        return self.grad(np.atleast_2d(S))

    @classmethod
    def call(cls, K: float, asset: int = 0) -> "Payoff":
        def fn(S):
            return np.maximum(S[:, asset] - K, 0.0)

        def grad(S):
            g = np.zeros_like(S)
            g[:, asset] = S[:, asset] > K
            return g

        return cls("call", fn, grad, strike=float(K))

    @classmethod
    def put(cls, K: float, asset: int = 0) -> "Payoff":
        def fn(S):
            return np.maximum(K - S[:, asset], 0.0)

        def grad(S):
            g = np.zeros_like(S)
            g[:, asset] = -(S[:, asset] < K).astype(float)
            return g

        return cls("put", fn, grad, strike=float(K), degree=0)

    @classmethod
    def custom(cls, fn, grad=None, degree: int = 1) -> "Payoff":
        return cls("custom", fn, grad, degree=degree)


def identity_payoff(asset: int = 0) -> Payoff:
    """``Phi(s) = s[asset]``; its price is the spot itself."""

    def grad(S):
        g = np.zeros_like(S)
        g[:, asset] = 1.0
        return g

    return Payoff.custom(lambda S: S[:, asset].copy(), grad, degree=1)


@dataclass(frozen=True)
class PriceEstimate:
    value: float
    half_width: float
    n: int
    method: str
    regime: Optional[int] = None
    measure: Optional[str] = None
    extra: dict = field(default_factory=dict)

    @property
    def interval(self):
        return (self.value - self.half_width, self.value + self.half_width)

    def overlaps(self, value: float, half_width: float) -> bool:
        """Whether ``value +- half_width`` intersects this estimate's interval."""
        return abs(self.value - value) <= self.half_width + half_width


# -- Monte Carlo -----------------------------------------------------------


class _Moments:
    """Mean and centred sum of squares, mergeable in a fixed order."""

    __slots__ = ("n", "mean", "m2")

    def __init__(self, x: np.ndarray):
        self.n = x.shape[0]
        self.mean = x.mean(axis=0)
        self.m2 = ((x - self.mean) ** 2).sum(axis=0)

    def merge(self, other: "_Moments") -> "_Moments":
        n = self.n + other.n
        delta = other.mean - self.mean
        self.mean = self.mean + delta * (other.n / n)
        self.m2 = self.m2 + other.m2 + delta**2 * (self.n * other.n / n)
        self.n = n
        return self

    def sd(self):
        return np.sqrt(np.maximum(self.m2, 0.0) / (self.n - 1))


def forward_pair_moments(
    model: RegimeModel,
    aux: AuxFunctions,
    stats: Callable[[np.ndarray], np.ndarray],
    s0,
    i0: int,
    T: float,
    n_pairs: int,
    seed: int = 0,
    threads: Optional[int] = None,
    stream: int = 0,
) -> _Moments:
    """Moments of antithetic pair averages of ``stats(S_T)`` under the forward law.

    ``stats`` maps terminal values (n, d) to an array (n, k) of statistics.
    """
    if n_pairs < 2:
        raise ValidationError("need at least two antithetic pairs")

    def work(c, size):
        rng = chunk_rng(seed, c, stream)
        ts = sample_terminal(model, aux, MeasureTag.FORWARD, s0, i0, T, rng, size, antithetic=True)
        return _Moments(0.5 * (stats(ts.S_T) + stats(ts.S_T_anti)))

    parts = map_chunks(work, n_pairs, threads)
    acc = parts[0]
    for p in parts[1:]:
        acc.merge(p)
    return acc


def _estimates(mom: _Moments, scale: float, method: str, i0: int):
    sd = mom.sd()
    out = []
    for k in range(np.size(mom.mean)):
        val = float(np.atleast_1d(mom.mean)[k] * scale)
        hw = float(Z95 * np.atleast_1d(sd)[k] * scale / math.sqrt(mom.n))
        out.append(PriceEstimate(val, hw, mom.n, method, regime=i0, measure="forward"))
    return out


def _delta_stats(payoff: Payoff, s0: np.ndarray):
    if payoff.grad is None:
        raise MissingGradient(f"payoff {payoff.kind!r} has no gradient")

    def stats(S):
        return S * payoff.gradient(S) / s0

    return stats


def mc_price(model, aux, payoff: Payoff, s0, i0: int, T: float, n_pairs: int, seed: int = 0, threads=None):
    """Monte Carlo price ``beta_i0(T) E_fwd[Phi(S_T)]`` with a 95% half-width."""
    beta = float(aux.beta(T)[i0])
    mom = forward_pair_moments(
        model, aux, lambda S: payoff(S)[:, None], s0, i0, T, n_pairs, seed, threads
    )
    return _estimates(mom, beta, "mc", i0)[0]


def mc_delta(model, aux, payoff: Payoff, s0, i0: int, T: float, n_pairs: int, seed: int = 0, threads=None):
    """Pathwise deltas, one :class:`PriceEstimate` per asset."""
    s0 = np.broadcast_to(np.asarray(s0, dtype=float), (model.d,))
    beta = float(aux.beta(T)[i0])
    mom = forward_pair_moments(model, aux, _delta_stats(payoff, s0), s0, i0, T, n_pairs, seed, threads)
    return _estimates(mom, beta, "mc", i0)


def mc_price_and_delta(
    model, aux, payoffs: Sequence[Payoff], s0, i0: int, T: float, n_pairs: int, seed: int = 0, threads=None
):
    """Prices and deltas of several payoffs from one shared sample.

    Returns a list of ``(price, [delta per asset])`` per payoff.
    """
    s0 = np.broadcast_to(np.asarray(s0, dtype=float), (model.d,))
    d = model.d
    dstats = [_delta_stats(p, s0) for p in payoffs]

    def stats(S):
        cols = []
        for p, ds in zip(payoffs, dstats):
            cols.append(p(S)[:, None])
            cols.append(ds(S))
        return np.concatenate(cols, axis=1)

    beta = float(aux.beta(T)[i0])
    mom = forward_pair_moments(model, aux, stats, s0, i0, T, n_pairs, seed, threads)
    ests = _estimates(mom, beta, "mc", i0)
    out = []
    for k in range(len(payoffs)):
        block = ests[k * (d + 1) : (k + 1) * (d + 1)]
        out.append((block[0], block[1:]))
    return out


# -- Fourier inversion (d = 1) ----------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)
TRUNCATION_TOL = 1e-10
MAX_TRUNCATION = 1e7
MAX_REFINEMENTS = 8


def _expm_batch(M: np.ndarray) -> np.ndarray:
    """Matrix exponentials of a stack of complex l x l matrices."""
    if M.shape[-1] != 2:
        from scipy.linalg import expm

        return expm(M)
    # closed form for 2 x 2: M = s I + N, N traceless, N^2 = q^2 I
    s = 0.5 * (M[..., 0, 0] + M[..., 1, 1])
    N = M.copy()
    N[..., 0, 0] -= s
    N[..., 1, 1] -= s
    q = np.sqrt(N[..., 0, 0] ** 2 + N[..., 0, 1] * N[..., 1, 0])
    small = np.abs(q) < 1e-4
    qs = np.where(small, 1.0, q)
    ep, em = np.exp(s + q), np.exp(s - q)
    ch = 0.5 * (ep + em)
    sh = np.where(small, np.exp(s) * (1.0 + q**2 / 6.0 + q**4 / 120.0), (ep - em) / (2.0 * qs))
    out = sh[..., None, None] * N
    out[..., 0, 0] += ch
    out[..., 1, 1] += ch
    return out


class TailInverter:
    """Tail probabilities of ``X = log(S_T / s)`` under the forward and check laws.

    ``P(X > k) = 1/2 + (1/pi) int_0^inf Re[exp(-iuk) Psi(iu) / (iu)] du``.
    The integral is truncated where ``|Psi(iu) / u| < 1e-10`` (using the
    Gaussian bound ``|Psi(iu)| <= exp(-u^2 tau min(a) / 2)``) and evaluated by
    composite 16-point Gauss-Legendre; panels are halved until two successive
    estimates agree within ``tol`` at the probe log-strikes.
    """

    def __init__(self, aux: AuxFunctions, i: int, tau: float, k_probe=(0.0,), tol: float = 1e-6):
        m = aux.model
        if m.d != 1:
            raise MultiAssetUnsupported("Fourier pricing is implemented for d = 1 only")
        self.aux, self.i, self.tau, self.tol = aux, int(i), float(tau), tol
        if self.tau == 0.0:
            self.nodes = np.zeros(0)
            return
        a = m.a[:, 0, 0]
        c = 0.5 * self.tau * a.min()
        U = 1.0
        while math.exp(-c * U * U) / U >= TRUNCATION_TOL:
            U *= 1.25
            if U > MAX_TRUNCATION:
                raise QuadratureNotConverged(
                    f"characteristic function decays too slowly (tau = {tau:g}); truncation bound exceeded"
                )
        self.U = U
        probe = np.atleast_1d(np.asarray(k_probe, dtype=float))
        kmax = float(np.abs(probe).max(initial=0.0))
        drift = float(np.abs(m.r).max() + a.max()) * self.tau
        scale = 1.0 / math.sqrt(self.tau * a.max())
        width = min(2.0 * math.pi / max(kmax + drift, 1e-12), 2.0 * scale, U)
        prev = self._build(width, probe)
        for _ in range(MAX_REFINEMENTS):
            width *= 0.5
            cur = self._build(width, probe)
            err = max(np.abs(cur[0] - prev[0]).max(), np.abs(cur[1] - prev[1]).max())
            prev = cur
            if err < tol:
                self.error = err
                return
        raise QuadratureNotConverged(f"tail probabilities did not converge (last change {err:.2e})")

    def _build(self, width: float, probe):
        n_panels = max(1, int(math.ceil(self.U / width)))
        edges = np.linspace(0.0, self.U, n_panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        u = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
        w = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
        theta = 1j * u
        fwd = self._transform(theta, "forward")
        chk = self._transform(theta, "check")
        self.nodes = u
        self.g_fwd = w * fwd / theta
        self.g_chk = w * chk / theta
        return self.tails(probe)

    def _transform(self, theta, which):
        aux, m = self.aux, self.aux.model
        if which == "forward":
            th1, th2, norm = theta - 1.0, 0.5 * theta * (theta - 1.0), aux.delta(self.tau)[self.i]
        else:
            th1, th2, norm = theta, 0.5 * theta * (theta + 1.0), aux.gamma(self.tau)[self.i]
        l = m.l
        rate = th1[:, None] * m.r + th2[:, None] * m.a[:, 0, 0] - aux.risk.ell
        M = np.zeros((theta.size, l, l), dtype=complex)
        idx = np.arange(l)
        M[:, idx, idx] = rate
        M += m.Lambda
        E = _expm_batch(self.tau * M)
        return E[:, self.i, :].sum(axis=-1) / norm

    def tails(self, k):
        """``(P_check(X > k), P_fwd(X > k))`` for an array of log-strikes."""
        k = np.asarray(k, dtype=float)
        if self.tau == 0.0:
            p = (k < 0).astype(float)
            return p, p.copy()
        flat = k.reshape(-1)
        out_c = np.empty(flat.size)
        out_f = np.empty(flat.size)
        step = max(1, int(4_000_000 // max(self.nodes.size, 1)))
        G = np.stack([self.g_chk, self.g_fwd], axis=1)
        for start in range(0, flat.size, step):
            kk = flat[start : start + step]
            phase = np.exp(-1j * np.outer(kk, self.nodes))
            vals = (phase @ G).real
            out_c[start : start + step] = vals[:, 0]
            out_f[start : start + step] = vals[:, 1]
        pc = 0.5 + out_c / math.pi
        pf = 0.5 + out_f / math.pi
        return np.clip(pc, 0.0, 1.0).reshape(k.shape), np.clip(pf, 0.0, 1.0).reshape(k.shape)


def _clip_price(value):
    value = np.asarray(value, dtype=float)
    if np.any(value < -1e-8):
        warnings.warn("Fourier price below -1e-8 clipped to 0 (quadrature noise)", RuntimeWarning, stacklevel=3)
    return np.maximum(value, 0.0)


def fourier_call_tails(aux: AuxFunctions, K, s0: float, i0: int, T: float, tol: float = 1e-6):
    """Tail probabilities ``(P_check, P_fwd)`` of ``S_T > K`` for one or more strikes."""
    K = np.asarray(K, dtype=float)
    if np.any(K <= 0):
        raise ValidationError("strike must be positive")
    k = np.log(K / s0)
    inv = TailInverter(aux, i0, T, k_probe=k, tol=tol)
    return inv.tails(k)


def fourier_call(model, aux, K, s0: float, i0: int, T: float, tol: float = 1e-6) -> PriceEstimate:
    """Call price ``s P_check(S_T > K) - beta K P_fwd(S_T > K)``."""
    pc, pf = fourier_call_tails(aux, K, s0, i0, T, tol)
    beta = float(aux.beta(T)[i0])
    value = float(_clip_price(s0 * pc - beta * float(K) * pf))
    return PriceEstimate(value, 0.0, 0, "fourier", regime=i0, extra={"p_check": float(pc), "p_forward": float(pf)})


def fourier_call_delta(model, aux, K, s0: float, i0: int, T: float, tol: float = 1e-6) -> float:
    """Call delta, the check-law tail probability."""
    pc, _ = fourier_call_tails(aux, K, s0, i0, T, tol)
    return float(pc)


def fourier_put(model, aux, K, s0: float, i0: int, T: float, tol: float = 1e-6) -> PriceEstimate:
    """Put price via ``P = C - s + beta K`` (the forward price of ``S_T`` is ``s / beta``)."""
    call = fourier_call(model, aux, K, s0, i0, T, tol)
    beta = float(aux.beta(T)[i0])
    value = float(_clip_price(call.value - s0 + beta * float(K)))
    return PriceEstimate(value, 0.0, 0, "fourier", regime=i0)


# -- Black-Scholes ------------------------------------------------------------


def _d1_d2(s0, K, sigma, r, T):
    vt = sigma * np.sqrt(T)
    d1 = (np.log(s0 / K) + (r + 0.5 * sigma**2) * T) / vt
    return d1, d1 - vt


def bs_price(s0, K, sigma, r, T, kind: str = "call") -> PriceEstimate:
    """Black-Scholes price of a European call or put."""
    if kind not in ("call", "put"):
        raise ValidationError(f"kind must be 'call' or 'put', got {kind!r}")
    if K <= 0:
        return PriceEstimate(float(s0) if kind == "call" else 0.0, 0.0, 0, "black_scholes")
    d1, d2 = _d1_d2(s0, K, sigma, r, T)
    disc = math.exp(-r * T)
    if kind == "call":
        v = s0 * ndtr(d1) - K * disc * ndtr(d2)
    else:
        v = K * disc * ndtr(-d2) - s0 * ndtr(-d1)
    return PriceEstimate(float(v), 0.0, 0, "black_scholes")


def bs_delta(s0, K, sigma, r, T, kind: str = "call") -> float:
    d1, _ = _d1_d2(s0, K, sigma, r, T)
    return float(ndtr(d1) if kind == "call" else ndtr(d1) - 1.0)


# -- pricers used along simulated paths ---------------------------------------


class FourierPricer:
    """``C_t(s, i)`` and ``dC/ds`` of a one-asset call or put by Fourier inversion.

    ``price_and_grad(t, s, i)`` takes spots ``s`` of shape (n, 1) and regimes
    ``i`` of shape (n,), and returns arrays of shape (n,) and (n, 1).
    """

    def __init__(self, aux: AuxFunctions, payoff: Payoff, T: float, tol: float = 1e-6):
        if aux.model.d != 1:
            raise MultiAssetUnsupported("Fourier pricer needs d = 1")
        if payoff.kind not in ("call", "put"):
            raise PricerFailure("Fourier pricer supports calls and puts only")
        self.aux, self.payoff, self.T, self.tol = aux, payoff, float(T), tol
        self.K = payoff.strike

    def price_and_grad(self, t: float, s, i):
        s = np.asarray(s, dtype=float).reshape(-1)
        i = np.asarray(i).reshape(-1)
        tau = self.T - t
        C = np.empty(s.size)
        D = np.empty(s.size)
        beta = self.aux.beta(tau)
        for reg in np.unique(i):
            sel = i == reg
            k = np.log(self.K / s[sel])
            probe = np.quantile(k, np.linspace(0, 1, 9)) if k.size > 9 else k
            try:
                inv = TailInverter(self.aux, int(reg), tau, k_probe=probe, tol=self.tol)
            except QuadratureNotConverged as exc:
                raise PricerFailure(str(exc)) from exc
            pc, pf = inv.tails(k)
            call = s[sel] * pc - beta[reg] * self.K * pf
            if self.payoff.kind == "call":
                C[sel], D[sel] = call, pc
            else:
                C[sel], D[sel] = call - s[sel] + beta[reg] * self.K, pc - 1.0
        return np.maximum(C, 0.0), D[:, None]


class GridPricer:
    """Interpolates another one-asset pricer on a log-spot grid.

    At each requested time the wrapped pricer is evaluated once per regime on
    log-spaced spots covering ``+- width`` standard deviations of ``log S_T``
    around ``s_ref``; values and deltas are then cubic-spline interpolated in
    ``log s``.  The spacing is at most ``spacing`` times the remaining
    standard deviation, so the grid refines near maturity.  When the grid
    would need more nodes than there are query spots, the wrapped pricer is
    called directly.
    """

    def __init__(self, base, s_ref: float, width: float = 8.0, points: int = 401, spacing: float = 0.1):
        self.base, self.aux, self.T = base, base.aux, base.T
        self.s_ref, self.width, self.points, self.spacing = float(s_ref), width, points, spacing
        a = self.aux.model.a[:, 0, 0]
        self._a_min, self._a_max = float(a.min()), float(a.max())
        self._cache: dict = {}

    def _layout(self, t: float):
        half = self.width * math.sqrt(self._a_max * max(self.T, 1e-12))
        tau = max(self.T - t, 0.0)
        step = self.spacing * math.sqrt(self._a_min * tau)
        n = self.points if step <= 0 else max(self.points, int(math.ceil(2 * half / step)) + 1)
        return half, n

    def _splines(self, t: float, half: float, n: int):
        key = round(float(t), 14)
        if key not in self._cache:
            x = np.linspace(math.log(self.s_ref) - half, math.log(self.s_ref) + half, n)
            s = np.exp(x)
            out = []
            for reg in range(self.aux.model.l):
                C, D = self.base.price_and_grad(t, s[:, None], np.full(s.size, reg))
                out.append((CubicSpline(x, C), CubicSpline(x, D[:, 0]), x[0], x[-1]))
            self._cache = {key: out}
        return self._cache[key]

    def price_and_grad(self, t: float, s, i):
        s = np.asarray(s, dtype=float).reshape(-1)
        i = np.asarray(i).reshape(-1)
        half, n = self._layout(t)
        if t >= self.T or n * self.aux.model.l >= s.size:
            return self.base.price_and_grad(t, s[:, None], i)
        x = np.log(s)
        C = np.empty(s.size)
        D = np.empty(s.size)
        splines = self._splines(t, half, n)
        for reg in np.unique(i):
            sel = i == reg
            fc, fd, lo, hi = splines[reg]
            xs = x[sel]
            inside = (xs >= lo) & (xs <= hi)
            c_sel = fc(np.clip(xs, lo, hi))
            d_sel = fd(np.clip(xs, lo, hi))
            if not np.all(inside):
                c_out, d_out = self.base.price_and_grad(t, s[sel][~inside][:, None], np.full((~inside).sum(), reg))
                c_sel[~inside], d_sel[~inside] = c_out, d_out[:, 0]
            C[sel], D[sel] = c_sel, d_sel
        return C, D[:, None]


class NestedMCPricer:
    """Inner Monte Carlo pricer for arbitrary payoffs and any ``d``.

    Every call draws a fresh sample keyed by ``(seed, key)``; the hedge loop
    passes ``key = (outer path, grid index)``.
    """

    def __init__(self, model, aux, payoff: Payoff, T: float, n_inner: int = 20_000, seed: int = 0):
        self.model, self.aux, self.payoff, self.T = model, aux, payoff, float(T)
        self.n_inner, self.seed = int(n_inner), int(seed)

    def price_and_grad_one(self, t: float, s: np.ndarray, i: int, key=(0, 0)):
        tau = self.T - t
        if tau <= 0:
            S = np.atleast_2d(s)
            return float(self.payoff(S)[0]), self.payoff.gradient(S)[0]
        s = np.asarray(s, dtype=float)
        beta = float(self.aux.beta(tau)[i])
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([self.seed, 7, *map(int, key)])))
        ts = sample_terminal(self.model, self.aux, MeasureTag.FORWARD, s, i, tau, rng, self.n_inner, antithetic=True)
        vals = 0.5 * (self.payoff(ts.S_T) + self.payoff(ts.S_T_anti))
        if self.payoff.grad is None:
            raise PricerFailure("nested Monte Carlo hedging needs a payoff gradient")
        g = 0.5 * (ts.S_T * self.payoff.gradient(ts.S_T) + ts.S_T_anti * self.payoff.gradient(ts.S_T_anti))
        return beta * float(vals.mean()), beta * g.mean(axis=0) / s

    def price_and_grad(self, t: float, s, i, keys=None):
        s = np.atleast_2d(np.asarray(s, dtype=float))
        i = np.asarray(i).reshape(-1)
        n = s.shape[0]
        keys = [(k, 0) for k in range(n)] if keys is None else keys
        C = np.empty(n)
        D = np.empty((n, self.model.d))
        for k in range(n):
            C[k], D[k] = self.price_and_grad_one(t, s[k], int(i[k]), keys[k])
        return C, D


def alpha(t: float, s, i, pricer) -> np.ndarray:
    """``alpha_t(s, i) = grad C_t(s, i) + C_t(s, i) rho(i) / s``, shape (n, d)."""
    s = np.atleast_2d(np.asarray(s, dtype=float))
    i = np.asarray(i).reshape(-1)
    C, D = pricer.price_and_grad(t, s, i)
    rho = pricer.aux.risk.rho[i]
    return D + C[:, None] * rho / s
