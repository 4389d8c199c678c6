"""Regime-switching market specification.

A market is ``l`` regimes driven by a continuous-time Markov chain with
generator ``Lambda`` and ``d`` assets whose drift ``mu[i]``, volatility
matrix ``sigma[i]`` and short rate ``r[i]`` depend on the current regime.

Regimes are 0-based everywhere in the Python API.  TOML files and the CLI
number them from 1.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np
from scipy.linalg import expm

from .errors import (
    DimensionMismatch,
    InvalidGenerator,
    NegativeRate,
    NonPositiveVol,
    NoValidGenerator,
    SingularCovariance,
    ValidationError,
)

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

GENERATOR_ROW_TOL = 1e-12
PD_RATIO = 1e-12
LOG_IMAG_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class RegimeModel:
    """Validated regime-switching GBM market.

    Build instances with :func:`validate_model` or :func:`load_model`; the
    constructor itself does not check anything.

    Attributes
    ----------
    mu : ndarray, shape (l, d)
        Drift per regime (1/year).
    sigma : ndarray, shape (l, d, d)
        Volatility matrix per regime.
    r : ndarray, shape (l,)
        Short rate per regime.
    Lambda : ndarray, shape (l, l)
        Generator of the regime chain (1/year).
    a : ndarray, shape (l, d, d)
        Cached covariance ``sigma @ sigma.T``.
    """

    mu: np.ndarray
    sigma: np.ndarray
    r: np.ndarray
    Lambda: np.ndarray
    a: np.ndarray
    name: str = ""
    defaults: Mapping[str, Any] = field(default_factory=dict)

    @property
    def l(self) -> int:  # noqa: E743
        return self.Lambda.shape[0]

    @property
    def d(self) -> int:
        return self.mu.shape[1]

    @property
    def constant_rate(self) -> bool:
        return bool(np.all(self.r == self.r[0]))

    def with_generator(self, Lambda) -> "RegimeModel":
        """Copy of the model with a different generator (validated)."""
        return validate_model(
            {"mu": self.mu, "sigma": self.sigma, "r": self.r, "Lambda": Lambda},
            name=self.name,
            defaults=self.defaults,
        )


@dataclass(frozen=True)
class RiskQuantities:
    """Excess drift ``m``, ``rho = a^{-1} m`` and ``ell = m^T a^{-1} m``."""

    m: np.ndarray
    rho: np.ndarray
    ell: np.ndarray


def _readonly(x: np.ndarray) -> np.ndarray:
    x = np.array(x, dtype=float)
    x.setflags(write=False)
    return x


def _as_matrix_stack(sigma, l: int, d: int) -> np.ndarray:
    s = np.asarray(sigma, dtype=float)
    if d == 1 and s.shape in {(l,), (l, 1)}:
        s = s.reshape(l, 1, 1)
    if s.shape != (l, d, d):
        raise DimensionMismatch(f"sigma must have shape ({l}, {d}, {d}), got {s.shape}")
    return s


def check_generator(Lambda, tol: float = GENERATOR_ROW_TOL) -> np.ndarray:
    """Return ``Lambda`` as an array, raising InvalidGenerator if it is not one."""
    L = np.asarray(Lambda, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise DimensionMismatch(f"generator must be square, got shape {L.shape}")
    off = L[~np.eye(L.shape[0], dtype=bool)]
    if np.any(off < 0):
        raise InvalidGenerator("generator has negative off-diagonal entries")
    rows = L.sum(axis=1)
    scale = max(1.0, float(np.abs(L).max(initial=0.0)))
    if np.any(np.abs(rows) > tol * scale):
        raise InvalidGenerator(f"generator rows must sum to 0, got row sums {rows.tolist()}")
    return L


def validate_model(raw: Mapping[str, Any], name: str = "", defaults=None) -> RegimeModel:
    """Validate a raw model description and return a :class:`RegimeModel`.

    Parameters
    ----------
    raw : mapping
        Keys ``mu`` (l x d, or length l when d = 1), ``sigma`` (l x d x d,
        or length l when d = 1), ``r`` (length l) and ``Lambda`` (l x l).

    Raises
    ------
    DimensionMismatch, InvalidGenerator, SingularCovariance, NegativeRate
    """
    try:
        Lambda = np.atleast_2d(np.asarray(raw["Lambda"], dtype=float))
        mu = np.asarray(raw["mu"], dtype=float)
        r = np.atleast_1d(np.asarray(raw["r"], dtype=float))
        sigma = raw["sigma"]
    except KeyError as exc:
        raise ValidationError(f"missing model field {exc}") from None
    if Lambda.shape[0] != Lambda.shape[1]:
        raise DimensionMismatch(f"Lambda must be l x l, got {Lambda.shape}")
    l = Lambda.shape[0]
    if mu.ndim <= 1:
        mu = mu.reshape(l, 1) if mu.size == l else mu.reshape(1, -1)
    if mu.shape[0] != l:
        raise DimensionMismatch(f"mu has {mu.shape[0]} regimes, Lambda has {l}")
    d = mu.shape[1]
    if r.shape != (l,):
        raise DimensionMismatch(f"r must have length {l}, got shape {r.shape}")
    sigma = _as_matrix_stack(sigma, l, d)
    check_generator(Lambda)
    if np.any(r < 0):
        raise NegativeRate(f"rates must be nonnegative, got {r.tolist()}")

    a = sigma @ np.swapaxes(sigma, 1, 2)
    a = 0.5 * (a + np.swapaxes(a, 1, 2))
    for i in range(l):
        w = np.linalg.eigvalsh(a[i])
        if w[-1] <= 0 or w[0] <= PD_RATIO * w[-1]:
            raise SingularCovariance(f"a({i + 1}) = sigma sigma^T is not positive definite")

    return RegimeModel(
        mu=_readonly(mu),
        sigma=_readonly(sigma),
        r=_readonly(r),
        Lambda=_readonly(Lambda),
        a=_readonly(a),
        name=name,
        defaults=dict(defaults or {}),
    )


def risk_quantities(model: RegimeModel) -> RiskQuantities:
    """Market price of risk quantities for every regime."""
    m = model.mu - model.r[:, None]
    rho = np.linalg.solve(model.a, m[..., None])[..., 0]
    ell = np.einsum("ij,ij->i", m, rho)
    return RiskQuantities(m=_readonly(m), rho=_readonly(rho), ell=_readonly(np.maximum(ell, 0.0)))


def _real_logm(Q: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eig(Q)
    if np.any(np.abs(w) == 0):
        raise NoValidGenerator("transition matrix is singular; its logarithm is undefined")
    if np.any((np.abs(w.imag) < 1e-14) & (w.real <= 0)):
        raise NoValidGenerator(
            "transition matrix has a non-positive real eigenvalue, so no real logarithm exists"
        )
    L = V @ np.diag(np.log(w)) @ np.linalg.inv(V)
    if np.abs(L.imag).max() > LOG_IMAG_TOL:
        raise NoValidGenerator("principal logarithm is not real")
    return L.real


def generator_from_transition(Q, periods_per_year: float) -> np.ndarray:
    """Generator ``Lambda`` with ``expm(Lambda / periods_per_year) == Q``.

    Uses the principal logarithm.  When it does not exist or is not a valid
    generator, raise NoValidGenerator; the usual fallback is
    :func:`approximate_generator`.
    """
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise DimensionMismatch(f"transition matrix must be square, got {Q.shape}")
    if np.any(Q < 0) or np.any(Q > 1) or np.any(np.abs(Q.sum(axis=1) - 1) > 1e-10):
        raise ValidationError("transition matrix must be row-stochastic with entries in [0, 1]")
    fallback = f"fall back to Lambda ~ {periods_per_year:g} * (Q - I) (approximate_generator)"
    try:
        L = periods_per_year * _real_logm(Q)
    except NoValidGenerator as exc:
        raise NoValidGenerator(f"{exc}; {fallback}") from None
    off = ~np.eye(Q.shape[0], dtype=bool)
    scale = max(1.0, np.abs(L).max())
    if np.any(L[off] < -1e-10 * scale):
        raise NoValidGenerator(f"matrix logarithm has negative off-diagonal rates; {fallback}")
    L[off] = np.maximum(L[off], 0.0)
    np.fill_diagonal(L, 0.0)
    np.fill_diagonal(L, -L.sum(axis=1))
    return L


def approximate_generator(Q, periods_per_year: float) -> np.ndarray:
    """First-order generator ``periods * (Q - I)``; never fails, never exact."""
    Q = np.asarray(Q, dtype=float)
    L = periods_per_year * (Q - np.eye(Q.shape[0]))
    np.fill_diagonal(L, 0.0)
    np.fill_diagonal(L, -L.sum(axis=1))
    return L


def discrete_to_continuous(period_means, period_vols, periods_per_year: float):
    """Annualise per-period Gaussian regime returns.

    Each period's log-return has mean about ``(mu - sigma^2 / 2) / periods``
    and variance ``sigma^2 / periods``.

    Returns
    -------
    mu, sigma : ndarray
    """
    means = np.asarray(period_means, dtype=float)
    vols = np.asarray(period_vols, dtype=float)
    if np.any(vols <= 0):
        raise NonPositiveVol("per-period volatilities must be positive")
    sigma = np.sqrt(periods_per_year) * vols
    mu = periods_per_year * means + 0.5 * sigma**2
    return mu, sigma


# -- TOML ingestion ---------------------------------------------------------

BUNDLED = ("shen", "apple", "apple_transition")


def bundled_config(name: str) -> Path:
    """Path of a config shipped with the package (``shen``, ``apple``, ...)."""
    stem = name[:-5] if name.endswith(".toml") else name
    if stem not in BUNDLED:
        raise ValidationError(f"unknown bundled config {name!r}; choose from {BUNDLED}")
    return Path(str(resources.files("rsgbm") / "configs" / f"{stem}.toml"))


def _resolve(path) -> Path:
    p = Path(path)
    if p.exists():
        return p
    stem = p.name[:-5] if p.name.endswith(".toml") else p.name
    if stem in BUNDLED:
        return bundled_config(stem)
    raise ValidationError(f"config file not found: {path}")


def parse_config(doc: Mapping[str, Any], approx_generator: bool = False, name: str = ""):
    """Turn a parsed TOML document into a :class:`RegimeModel`."""
    head = doc.get("model", {})
    regimes = doc.get("regime")
    if not isinstance(regimes, Mapping) or not regimes:
        raise ValidationError("config needs [regime.N] sections")
    keys = sorted(regimes, key=lambda k: int(k))
    if [int(k) for k in keys] != list(range(1, len(keys) + 1)):
        raise ValidationError("regimes must be numbered 1..l")
    l = int(head.get("l", len(keys)))
    if l != len(keys):
        raise DimensionMismatch(f"[model] l = {l} but {len(keys)} regime sections given")
    mu, sigma, r = [], [], []
    for k in keys:
        sec = regimes[k]
        try:
            mu.append(np.atleast_1d(np.asarray(sec["mu"], dtype=float)))
            sigma.append(np.atleast_2d(np.asarray(sec["sigma"], dtype=float)))
            r.append(float(sec["r"]))
        except KeyError as exc:
            raise ValidationError(f"[regime.{k}] is missing {exc}") from None
    d = int(head.get("d", mu[0].size))
    for k, m_, s_ in zip(keys, mu, sigma):
        if m_.size != d:
            raise DimensionMismatch(f"[regime.{k}] mu has length {m_.size}, expected d = {d}")
        if s_.shape != (d, d):
            raise DimensionMismatch(f"[regime.{k}] sigma has shape {s_.shape}, expected ({d}, {d})")

    if "generator" in doc and "transition" in doc:
        raise ValidationError("give either [generator] or [transition], not both")
    for sec in ("generator", "transition"):
        if sec in doc and "rows" not in doc[sec]:
            raise ValidationError(f"[{sec}] is missing 'rows'")
    if "generator" in doc:
        Lambda = np.asarray(doc["generator"]["rows"], dtype=float)
    elif "transition" in doc:
        tr = doc["transition"]
        Q = np.asarray(tr["rows"], dtype=float)
        periods = float(tr.get("periods_per_year", 252))
        if approx_generator:
            Lambda = approximate_generator(Q, periods)
        else:
            Lambda = generator_from_transition(Q, periods)
    else:
        raise ValidationError("config needs a [generator] or [transition] section")
    if Lambda.shape != (l, l):
        raise DimensionMismatch(f"generator must be {l} x {l}, got {Lambda.shape}")
    raw = {"mu": np.stack(mu), "sigma": np.stack(sigma), "r": np.array(r), "Lambda": Lambda}
    return validate_model(raw, name=name, defaults=doc.get("defaults", {}))


def load_model(path, approx_generator: bool = False) -> RegimeModel:
    """Read a TOML model file (or a bundled config name) and validate it."""
    p = _resolve(path)
    try:
        with open(p, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"{p}: {exc}") from None
    return parse_config(doc, approx_generator=approx_generator, name=p.stem)


def stationary_distribution(Lambda) -> np.ndarray:
    """Stationary law ``pi`` with ``pi @ Lambda = 0`` (irreducible chains)."""
    L = np.asarray(Lambda, dtype=float)
    l = L.shape[0]
    A = np.vstack([L.T, np.ones(l)])
    b = np.zeros(l + 1)
    b[-1] = 1.0
    return np.linalg.lstsq(A, b, rcond=None)[0]


def transition_matrix(model: RegimeModel, t: float) -> np.ndarray:
    """``P(t) = expm(t * Lambda)``."""
    return expm(t * model.Lambda)
