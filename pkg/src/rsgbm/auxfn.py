"""Deterministic auxiliary functions of the regime chain.

``gamma(t) = expm(t (Lambda - D(ell))) 1`` and
``delta(t) = expm(t (Lambda - D(ell + r))) 1`` carry the change of measure;
``beta = delta / gamma`` is the regime-dependent discount factor.  From them
come the time-inhomogeneous generators

    tilde(t)[i, j] = Lambda[i, j] gamma[j](t) / gamma[i](t)
    arrow(t)[i, j] = Lambda[i, j] delta[j](t) / delta[i](t)

which drive the regimes under the variance-optimal and forward measures.
Along calendar time ``u`` in ``[0, T]`` the chain uses ``tilde(T - u)`` or
``arrow(T - u)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import expm

from .errors import MultiAssetUnsupported, NegativeTime, ValidationError
from .model import RegimeModel, risk_quantities

BOUND_POINTS = 10_001
BOUND_SAFETY = 1e-3
_SPECTRAL_COND = 1e8

KINDS = ("constant", "tilde", "arrow")


def _check_time(t):
    if np.any(np.asarray(t) < 0):
        raise NegativeTime("time argument must be nonnegative")


class _ExpmOnes:
    """Evaluate ``expm(t A) 1`` for scalar or vector ``t``.

    Scalars go through scipy's Pade scaling-and-squaring.  Long vectors of
    times (the sampler asks for millions) use a cached eigendecomposition
    when it is well conditioned, checked against Pade at construction.
    """

    def __init__(self, A: np.ndarray, t_check: float = 1.0):
        self.A = A
        l = A.shape[0]
        self.ones = np.ones(l)
        self.spectral = False
        try:
            w, V = np.linalg.eig(A)
            if np.linalg.cond(V) < _SPECTRAL_COND:
                self.w = w
                self.V = V
                self.c = np.linalg.solve(V, self.ones.astype(complex))
                self.spectral = True
                for t in (t_check, 0.1 * t_check, 10.0 * t_check):
                    ref = expm(t * A) @ self.ones
                    got = self._spectral(np.array([t]))[0]
                    if not np.allclose(got, ref, rtol=1e-10, atol=1e-300):
                        self.spectral = False
                        break
        except np.linalg.LinAlgError:
            self.spectral = False

    def _spectral(self, t: np.ndarray) -> np.ndarray:
        E = np.exp(t[:, None] * self.w[None, :]) * self.c[None, :]
        return (E @ self.V.T).real

    def __call__(self, t):
        _check_time(t)
        if np.ndim(t) == 0:
            return expm(float(t) * self.A) @ self.ones
        t = np.asarray(t, dtype=float)
        flat = t.reshape(-1)
        if self.spectral and flat.size > 8:
            out = self._spectral(flat)
        else:
            out = expm(flat[:, None, None] * self.A) @ self.ones
        return out.reshape(t.shape + (self.A.shape[0],))


@dataclass(frozen=True)
class TimeDepGenerator:
    """Time-indexed generator of kind ``constant``, ``tilde`` or ``arrow``.

    ``tilde`` and ``arrow`` are time-reversed when simulated: at calendar
    time ``u`` of a chain on ``[0, T]`` the rates are those at ``T - u``.
    """

    kind: str
    aux: "AuxFunctions"

    @property
    def reversed(self) -> bool:
        return self.kind != "constant"

    def argument(self, u, T):
        """Generator argument used at calendar time ``u``."""
        return np.asarray(T) - np.asarray(u) if self.reversed else np.asarray(u)

    def _weights(self, t):
        if self.kind == "tilde":
            return self.aux.gamma(t)
        return self.aux.delta(t)

    def __call__(self, t) -> np.ndarray:
        L = self.aux.model.Lambda
        if self.kind == "constant":
            return np.broadcast_to(L, np.shape(t) + L.shape).copy()
        w = self._weights(t)
        G = L * w[..., None, :] / w[..., :, None]
        idx = np.arange(L.shape[0])
        G[..., idx, idx] = 0.0
        G[..., idx, idx] = -G.sum(axis=-1)
        return G

    def rows(self, t: np.ndarray, states: np.ndarray) -> np.ndarray:
        """Rows ``G(t[k])[states[k], :]`` for a batch, shape (n, l)."""
        L = self.aux.model.Lambda
        rows = L[states].copy()
        n = rows.shape[0]
        ar = np.arange(n)
        if self.kind != "constant":
            w = self._weights(t)
            rows *= w / w[ar, states][:, None]
        rows[ar, states] = 0.0
        rows[ar, states] = -rows.sum(axis=1)
        return rows

    def exit_rates(self, t) -> np.ndarray:
        """``-G(t)[i, i]`` for every regime, shape ``shape(t) + (l,)``."""
        L = self.aux.model.Lambda
        off = L - np.diag(np.diag(L))
        if self.kind == "constant":
            return np.broadcast_to(off.sum(axis=1), np.shape(t) + (L.shape[0],)).copy()
        w = self._weights(t)
        return (w @ off.T) / w


@dataclass(frozen=True)
class UniformizationBound:
    """Dominating rate for uniformization of a generator on ``[0, T]``."""

    lam: float
    sup: float
    points: int
    kind: str
    T: float


class AuxFunctions:
    """Evaluator of gamma, delta, beta, the tilted generators and ``h``.

    Parameters
    ----------
    model : RegimeModel
    T : float, optional
        Horizon used as a default by :meth:`uniformization_bound`.
    """

    def __init__(self, model: RegimeModel, T: Optional[float] = None):
        self.model = model
        self.T = T
        self.risk = risk_quantities(model)
        ell = self.risk.ell
        L = model.Lambda
        scale = 1.0 if T is None else float(T)
        self._gamma = _ExpmOnes(L - np.diag(ell), scale)
        self._delta = _ExpmOnes(L - np.diag(ell + model.r), scale)
        self._bounds: dict = {}

    # gamma, delta, beta ---------------------------------------------------

    def gamma(self, t):
        """``gamma(t)``; vector of length l (or array with trailing l axis)."""
        return self._gamma(t)

    def delta(self, t):
        return self._delta(t)

    def beta(self, t):
        """Regime discount factor ``delta(t) / gamma(t)``."""
        return self.delta(t) / self.gamma(t)

    # generators -----------------------------------------------------------

    def generator(self, kind: str) -> TimeDepGenerator:
        if kind not in KINDS:
            raise ValidationError(f"unknown generator kind {kind!r}")
        return TimeDepGenerator(kind, self)

    def tilde_generator(self, t):
        _check_time(t)
        return TimeDepGenerator("tilde", self)(t)

    def arrow_generator(self, t):
        _check_time(t)
        return self.generator("arrow")(t)

    def uniformization_bound(
        self, gen: TimeDepGenerator, T: Optional[float] = None, points: int = BOUND_POINTS
    ) -> UniformizationBound:
        """``lam = (1 + 1e-3) * max over a grid of -G(t)[i, i]`` on ``[0, T]``."""
        T = self.T if T is None else T
        if T is None or T <= 0:
            raise ValidationError("uniformization bound needs a horizon T > 0")
        key = (gen.kind, float(T), int(points))
        if key not in self._bounds:
            if gen.kind == "constant":
                sup = float(np.max(-np.diag(self.model.Lambda), initial=0.0))
            else:
                grid = np.linspace(0.0, T, points)
                sup = float(gen.exit_rates(grid).max())
            self._bounds[key] = UniformizationBound(
                lam=(1.0 + BOUND_SAFETY) * sup, sup=sup, points=points, kind=gen.kind, T=float(T)
            )
        return self._bounds[key]

    # Feynman-Kac transforms (d = 1) ---------------------------------------

    def _require_scalar_asset(self):
        if self.model.d != 1:
            raise MultiAssetUnsupported("characteristic functions are implemented for d = 1 only")

    def feynman_kac_h(self, t: float, theta1, theta2) -> np.ndarray:
        """``h(t, theta1, theta2) = expm(t (D(theta1 r + theta2 a - ell) + Lambda)) 1``.

        ``theta1`` and ``theta2`` may be complex arrays (broadcast together);
        the result has a trailing axis of length l.
        """
        self._require_scalar_asset()
        _check_time(t)
        th1, th2 = np.broadcast_arrays(
            np.asarray(theta1, dtype=complex), np.asarray(theta2, dtype=complex)
        )
        m = self.model
        rate = (
            th1[..., None] * m.r
            + th2[..., None] * m.a[:, 0, 0]
            - self.risk.ell
        )
        l = m.l
        M = np.zeros(rate.shape + (l,), dtype=complex)
        idx = np.arange(l)
        M[..., idx, idx] = rate
        M += m.Lambda
        E = expm(t * M.reshape(-1, l, l)).reshape(M.shape)
        return E.sum(axis=-1)

    def char_fn_forward(self, i: int, horizon: float, theta):
        """Laplace transform ``E[exp(theta log(S_T / s))]`` under the forward law."""
        theta = np.asarray(theta, dtype=complex)
        h = self.feynman_kac_h(horizon, theta - 1.0, 0.5 * theta * (theta - 1.0))
        return h[..., i] / self.delta(horizon)[i]

    def char_fn_check(self, i: int, horizon: float, theta):
        """Same transform under the Esscher-tilted (check) law."""
        theta = np.asarray(theta, dtype=complex)
        h = self.feynman_kac_h(horizon, theta, 0.5 * theta * (theta + 1.0))
        return h[..., i] / self.gamma(horizon)[i]

    # tabulation -----------------------------------------------------------

    def table(self, T: float, points: int) -> dict:
        """Columns behind the gamma/delta/beta and exit-rate plots."""
        t = np.linspace(0.0, T, points)
        cols = {"t": t}
        g, dl = self.gamma(t), self.delta(t)
        b = dl / g
        nt = TimeDepGenerator("tilde", self).exit_rates(t)
        na = TimeDepGenerator("arrow", self).exit_rates(t)
        for name, arr in (
            ("gamma", g),
            ("delta", dl),
            ("beta", b),
            ("neg_diag_tilde", nt),
            ("neg_diag_arrow", na),
        ):
            for i in range(self.model.l):
                cols[f"{name}_{i + 1}"] = arr[:, i]
        return cols
