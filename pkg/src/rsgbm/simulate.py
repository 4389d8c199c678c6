"""Exact simulation of regime paths and terminal asset values.

Regime paths come from uniformization: a Poisson(lam T) number of candidate
times, spread as ordered uniforms built from exponential spacings, with a
jump resolved at each candidate from the generator row divided by ``lam``.
Given a path, log-returns are Gaussian with mean and covariance equal to the
time integrals of the regime drift and covariance, so terminal values are
sampled without discretization error.

Randomness is organised in fixed-size chunks.  Chunk ``c`` of stream ``s``
owns the generator ``Philox(SeedSequence([seed, s, c]))``; results do not
depend on how many workers process the chunks.
"""

from __future__ import annotations

import enum
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from .auxfn import AuxFunctions, TimeDepGenerator, UniformizationBound
from .errors import BoundViolation, CholeskyFailure, ValidationError
from .model import RegimeModel

CHUNK = 1 << 16


class MeasureTag(enum.Enum):
    PHYSICAL = "physical"
    FORWARD = "forward"
    CHECK = "check"

    @property
    def generator_kind(self) -> str:
        return {"physical": "constant", "forward": "arrow", "check": "tilde"}[self.value]


def chunk_rng(seed: int, chunk: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for one chunk of paths."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream), int(chunk)])))


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("RSGBM_THREADS", "1")))
    except ValueError:
        return 1


def map_chunks(fn: Callable[[int, int], object], n: int, threads: Optional[int] = None, chunk: int = CHUNK):
    """Apply ``fn(chunk_index, size)`` to the chunks covering ``n`` items, in order."""
    sizes = [min(chunk, n - start) for start in range(0, n, chunk)]
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or len(sizes) == 1:
        return [fn(c, size) for c, size in enumerate(sizes)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(len(sizes)), sizes))


@dataclass(frozen=True)
class RegimePath:
    """One regime path: candidate times ``times`` (0 < t_1 < ... < t_n < T)
    and ``states[k]`` the regime on ``[t_k, t_{k+1})`` with ``t_0 = 0``."""

    times: np.ndarray
    states: np.ndarray
    T: float

    @property
    def i0(self) -> int:
        return int(self.states[0])

    def jump_times(self) -> np.ndarray:
        changed = self.states[1:] != self.states[:-1]
        return self.times[changed]

    def state_at(self, t: float) -> int:
        return int(self.states[np.searchsorted(self.times, t, side="right")])


@dataclass(frozen=True)
class RegimePaths:
    """A batch of regime paths in padded form.

    ``times`` has shape (n, m) with unused slots set to ``T``; ``states`` has
    shape (n, m + 1) and repeats the last state in unused slots.
    """

    times: np.ndarray
    states: np.ndarray
    counts: np.ndarray
    T: float

    def __len__(self) -> int:
        return self.times.shape[0]

    def path(self, k: int) -> RegimePath:
        n = int(self.counts[k])
        return RegimePath(times=self.times[k, :n].copy(), states=self.states[k, : n + 1].copy(), T=self.T)

    @property
    def final_states(self) -> np.ndarray:
        return self.states[:, -1]

    def segments(self) -> np.ndarray:
        """Length of the time spent in ``states[:, k]``, shape (n, m + 1)."""
        n = len(self)
        edges = np.concatenate([np.zeros((n, 1)), self.times, np.full((n, 1), self.T)], axis=1)
        return np.diff(edges, axis=1)

    def states_at(self, t: float, left: bool = False) -> np.ndarray:
        """Regime at time ``t`` (``left=True``: the left limit)."""
        idx = (self.times < t).sum(axis=1) if left else (self.times <= t).sum(axis=1)
        # padded times equal T; never step past the recorded states
        idx = np.minimum(idx, self.counts)
        return self.states[np.arange(len(self)), idx]

    def occupation_until(self, t: float) -> np.ndarray:
        """Time spent in each segment up to ``t``, shape (n, m + 1)."""
        n = len(self)
        starts = np.concatenate([np.zeros((n, 1)), self.times], axis=1)
        ends = np.concatenate([self.times, np.full((n, 1), self.T)], axis=1)
        return np.clip(np.minimum(ends, t) - starts, 0.0, None)

    def integrate(self, q: np.ndarray, until: Optional[float] = None) -> np.ndarray:
        """Exact ``int_0^until q[tau_u] du``; ``q`` has shape (l, ...)."""
        seg = self.segments() if until is None else self.occupation_until(until)
        vals = q[self.states]
        return np.einsum("nk,nk...->n...", seg, vals)

    def jumps_between(self, t0: float, t1: float) -> np.ndarray:
        """Number of actual regime changes in ``(t0, t1]``."""
        changed = self.states[:, 1:] != self.states[:, :-1]
        inside = (self.times > t0) & (self.times <= t1)
        return (changed & inside).sum(axis=1)


def sample_regime_paths(
    gen: TimeDepGenerator,
    bound: UniformizationBound,
    i0,
    T: float,
    rng: np.random.Generator,
    n: int,
) -> RegimePaths:
    """Sample ``n`` regime paths on ``[0, T]`` by uniformization.

    ``i0`` is a starting regime or an array of ``n`` starting regimes.

    Raises
    ------
    BoundViolation
        If a candidate time needs an exit rate above ``bound.lam``.
    """
    lam = float(bound.lam)
    l = gen.aux.model.l
    start = np.broadcast_to(np.asarray(i0, dtype=np.int64), (n,)).copy()
    if np.any(start < 0) or np.any(start >= l):
        raise ValidationError(f"initial regime must lie in 0..{l - 1}")
    counts = rng.poisson(lam * T, size=n) if lam > 0 else np.zeros(n, dtype=np.int64)
    m = int(counts.max(initial=0))
    times = np.full((n, m), float(T))
    states = np.repeat(start[:, None], m + 1, axis=1)
    if m == 0:
        return RegimePaths(times=times, states=states, counts=counts, T=float(T))

    # ordered uniforms from n + 1 exponential spacings
    E = rng.standard_exponential(size=(n, m + 1))
    cols = np.arange(m + 1)
    E[cols[None, :] > counts[:, None]] = 0.0
    csum = np.cumsum(E, axis=1)
    total = csum[np.arange(n), counts]
    U = csum[:, :m] / total[:, None]
    active = cols[None, :m] < counts[:, None]
    times[active] = (T * U)[active]

    V = rng.random(size=(n, m))
    current = start.copy()
    for k in range(m):
        act = np.nonzero(active[:, k])[0]
        if act.size:
            tk = times[act, k]
            arg = gen.argument(tk, T)
            rows = gen.rows(arg, current[act])
            exit_rate = -rows[np.arange(act.size), current[act]]
            if np.any(exit_rate > lam * (1.0 + 1e-12)):
                raise BoundViolation(
                    f"exit rate {exit_rate.max():.6g} exceeds uniformization bound {lam:.6g}"
                )
            probs = rows / lam
            probs[np.arange(act.size), current[act]] += 1.0
            cdf = np.cumsum(probs, axis=1)
            nxt = (V[act, k][:, None] >= cdf[:, :-1]).sum(axis=1)
            current[act] = nxt
        states[:, k + 1] = current
    return RegimePaths(times=times, states=states, counts=counts, T=float(T))


def sample_regime_path(gen, bound, i0: int, T: float, rng) -> RegimePath:
    """Single-path version of :func:`sample_regime_paths`."""
    return sample_regime_paths(gen, bound, i0, T, rng, 1).path(0)


@dataclass(frozen=True)
class PathIntegrals:
    """Exact integrals over ``[0, T]`` of the regime-dependent coefficients.

    Arrays carry a leading path axis: ``int_r``, ``int_ell`` have shape (n,),
    ``int_v`` (n, d) and ``int_a`` (n, d, d).
    """

    int_r: np.ndarray
    int_ell: np.ndarray
    int_v: np.ndarray
    int_a: np.ndarray


def log_drift(model: RegimeModel, measure: MeasureTag) -> np.ndarray:
    """Per-regime drift of ``log S`` under ``measure``, shape (l, d)."""
    half_var = 0.5 * np.diagonal(model.a, axis1=1, axis2=2)
    measure = MeasureTag(measure)
    if measure is MeasureTag.PHYSICAL:
        return model.mu - half_var
    if measure is MeasureTag.FORWARD:
        return model.r[:, None] - half_var
    if model.d != 1:
        raise ValidationError("the check measure is defined for d = 1 only")
    return model.r[:, None] + half_var


def path_integrals(paths: RegimePaths, model: RegimeModel, measure: MeasureTag, ell=None) -> PathIntegrals:
    """Integrals of r, ell, log-drift and covariance along each path."""
    if ell is None:
        from .model import risk_quantities

        ell = risk_quantities(model).ell
    return PathIntegrals(
        int_r=paths.integrate(model.r),
        int_ell=paths.integrate(np.asarray(ell)),
        int_v=paths.integrate(log_drift(model, measure)),
        int_a=paths.integrate(model.a),
    )


def gaussian_factor(cov: np.ndarray) -> np.ndarray:
    """Batched lower factor ``L`` with ``L L^T = cov``.

    Cholesky first; singular matrices fall back to an eigenvalue factor with
    eigenvalues clipped at ``1e-14 * trace``.
    """
    d = cov.shape[-1]
    if d == 1:
        return np.sqrt(np.maximum(cov, 0.0))
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(cov)
        floor = 1e-14 * np.trace(cov, axis1=-2, axis2=-1)
        w = np.maximum(w, floor[..., None])
        if not np.all(np.isfinite(w)):
            raise CholeskyFailure("covariance of log-returns is not finite") from None
        return V * np.sqrt(w)[..., None, :]


@dataclass(frozen=True)
class TerminalSample:
    """Terminal asset values for a batch of paths.

    ``S_T`` has shape (n, d).  With antithetic sampling, ``S_T_anti`` holds the
    partner values (same regime path, Gaussian draw negated).
    """

    S_T: np.ndarray
    integrals: PathIntegrals
    paths: RegimePaths
    S_T_anti: Optional[np.ndarray] = None

    @property
    def antithetic(self) -> bool:
        return self.S_T_anti is not None


def sample_terminal(
    model: RegimeModel,
    aux: AuxFunctions,
    measure: MeasureTag,
    s0,
    i0,
    T: float,
    rng: np.random.Generator,
    n: int = 1,
    antithetic: bool = False,
    Z: Optional[np.ndarray] = None,
) -> TerminalSample:
    """Draw ``n`` terminal values of ``S`` under ``measure``.

    ``log S_T = log s0 + int_v + L Z`` with ``L L^T = int_a``.  Passing ``Z``
    overrides the Gaussian draw (shape (n, d)).
    """
    s0 = np.broadcast_to(np.asarray(s0, dtype=float), (model.d,))
    if np.any(s0 <= 0):
        raise ValidationError("initial asset values must be positive")
    measure = MeasureTag(measure)
    gen = aux.generator(measure.generator_kind)
    bound = aux.uniformization_bound(gen, T)
    paths = sample_regime_paths(gen, bound, i0, T, rng, n)
    ints = path_integrals(paths, model, measure, ell=aux.risk.ell)
    if Z is None:
        Z = rng.standard_normal(size=(n, model.d))
    F = gaussian_factor(ints.int_a)
    shock = np.einsum("nij,nj->ni", F, Z)
    base = np.log(s0) + ints.int_v
    S = np.exp(base + shock)
    anti = np.exp(base - shock) if antithetic else None
    return TerminalSample(S_T=S, integrals=ints, paths=paths, S_T_anti=anti)


def dump_paths(paths: RegimePaths, first_id: int = 0) -> Iterable[tuple]:
    """Rows ``(path_id, t_k, state)`` listing candidate times of each path."""
    for k in range(len(paths)):
        p = paths.path(k)
        pid = first_id + k
        yield (pid, 0.0, int(p.states[0]))
        for t, s in zip(p.times, p.states[1:]):
            yield (pid, float(t), int(s))
