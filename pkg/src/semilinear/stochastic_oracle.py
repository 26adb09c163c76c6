"""Monte Carlo oracle on the killed continuous-time Markov chain.

Paths are simulated by exact jump-hold dynamics: the holding time at ``i`` is
exponential with rate ``-L_ii``; the chain then jumps to ``j`` with
probability ``L_ij / -L_ii`` or is killed (sent to the cemetery) with the
remaining probability ``-(sum_j L_ij) / -L_ii``.

Random streams are keyed by ``(seed, index)`` through a counter-based
Philox generator, so results do not depend on evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NotSubMarkovian
from .extended import PLUS_INF, ExtendedReal
from .state_model import GeneratorModel

CEMETERY = -1
DEFAULT_BATCHES = 32


def stream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for ``(seed, index)``."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, index & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _require_sub_markovian(model: GeneratorModel) -> None:
    if not model.sub_markovian:
        raise NotSubMarkovian("path simulation needs nonpositive generator row sums")


def _jump_table(L: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exit rates and cumulative jump/kill probabilities (last column: kill)."""
    n = L.shape[0]
    q = -np.diag(L).copy()
    P = np.zeros((n, n + 1))
    for i in range(n):
        if q[i] <= 0:
            continue
        row = np.maximum(L[i], 0.0)
        row[i] = 0.0
        P[i, :n] = row / q[i]
        P[i, n] = max(0.0, 1.0 - P[i, :n].sum())
    cum = np.cumsum(P, axis=1)
    cum[:, -1] = 1.0
    return q, cum


@dataclass(frozen=True)
class PathSample:
    states: tuple
    jump_times: tuple
    killed: bool
    lifetime: ExtendedReal
    horizon: float


def sample_path(model: GeneratorModel, start: int, horizon: float, seed: int, path_index: int = 0) -> PathSample:
    """One killed-chain trajectory up to ``horizon``."""
    _require_sub_markovian(model)
    L = np.asarray(model.L)
    q, cum = _jump_table(L)
    rng = stream(seed, path_index)
    t, i = 0.0, int(start)
    states, times = [i], []
    while True:
        if q[i] <= 0:
            return PathSample(tuple(states), tuple(times), False, PLUS_INF, horizon)
        t += rng.exponential(1.0 / q[i])
        if t >= horizon:
            return PathSample(tuple(states), tuple(times), False, PLUS_INF, horizon)
        j = int(np.searchsorted(cum[i], rng.random(), side="right"))
        times.append(t)
        if j >= model.n:
            states.append(CEMETERY)
            return PathSample(tuple(states), tuple(times), True, ExtendedReal.finite(t), horizon)
        states.append(j)
        i = j


def _run_batch(L, q, cum, start, size, rng, horizon, segment_hook):
    """Vectorized jump-hold simulation calling ``segment_hook(idx, state, t0, t1)``.

    Returns per-path ``(final_state, killed)`` where ``final_state`` is the
    state occupied at the horizon (``CEMETERY`` when killed).
    """
    n = L.shape[0]
    state = np.full(size, int(start))
    t = np.zeros(size)
    active = np.ones(size, bool)
    killed = np.zeros(size, bool)
    while active.any():
        idx = np.flatnonzero(active)
        s = state[idx]
        rate = q[s]
        hold = np.full(idx.size, np.inf)
        moving = rate > 0
        hold[moving] = rng.exponential(1.0, moving.sum()) / rate[moving]
        t0 = t[idx]
        t1 = np.minimum(t0 + hold, horizon)
        segment_hook(idx, s, t0, t1)
        done = t0 + hold >= horizon
        active[idx[done]] = False
        go = idx[~done]
        if go.size == 0:
            break
        u = rng.random(go.size)
        nxt = (u[:, None] < cum[state[go]]).argmax(axis=1)
        t[go] = t0[~done] + hold[~done]
        dead = nxt >= n
        killed[go[dead]] = True
        active[go[dead]] = False
        state[go[dead]] = CEMETERY
        state[go[~dead]] = nxt[~dead]
    return state, killed


@dataclass(frozen=True)
class EstimatorResult:
    value: float | np.ndarray
    std_error: float | np.ndarray
    n_paths: int
    seed: int
    batches: int = DEFAULT_BATCHES
    truncation_bound: float = 0.0

    def within(self, exact, k: float = 3.0) -> bool:
        return bool(np.all(np.abs(np.asarray(self.value) - exact) <= k * np.asarray(self.std_error) + 1e-15))


def _batch_sizes(n_paths: int, batches: int) -> list[int]:
    batches = max(30, min(batches, n_paths))
    base, extra = divmod(n_paths, batches)
    return [base + (b < extra) for b in range(batches)]


def _summarize(means: np.ndarray, sizes: list[int], n_paths: int, seed: int, bound: float = 0.0) -> EstimatorResult:
    w = np.asarray(sizes, float) / n_paths
    value = np.tensordot(w, means, axes=1)
    se = np.sqrt(np.var(means, axis=0, ddof=1) / len(sizes)) + bound
    if np.ndim(value) == 0:
        value, se = float(value), float(se)
    return EstimatorResult(value, se, n_paths, seed, len(sizes), bound)


def estimate_resolvent_apply(
    model: GeneratorModel,
    g,
    alpha: float,
    start: int,
    n_paths: int,
    seed: int,
    horizon: float | None = None,
    batches: int = DEFAULT_BATCHES,
) -> EstimatorResult:
    """``E_start int_0^zeta e^{-alpha t} g(X_t) dt`` with exact per-hold integrals."""
    _require_sub_markovian(model)
    g = np.asarray(g, dtype=float)
    L = np.asarray(model.L)
    decay = alpha - model.spectral_bound
    if horizon is None:
        horizon = 50.0 / decay if decay > 0 else 1e6
    bound = float(np.abs(g).max(initial=0.0)) * math.exp(-decay * horizon) / decay if decay > 0 else 0.0
    if not np.any(g):
        return EstimatorResult(0.0, 0.0, n_paths, seed, len(_batch_sizes(n_paths, batches)))
    q, cum = _jump_table(L)
    sizes = _batch_sizes(n_paths, batches)
    means = np.empty(len(sizes))
    for b, size in enumerate(sizes):
        acc = np.zeros(size)

        def hook(idx, s, t0, t1, acc=acc):
            if alpha > 0:
                acc[idx] += g[s] * (np.exp(-alpha * t0) - np.exp(-alpha * t1)) / alpha
            else:
                acc[idx] += g[s] * (t1 - t0)

        _run_batch(L, q, cum, start, size, stream(seed, b), horizon, hook)
        means[b] = acc.mean()
    return _summarize(means, sizes, n_paths, seed, bound)


def estimate_feynman_kac(
    model: GeneratorModel,
    V,
    g,
    t: float,
    start: int,
    n_paths: int,
    seed: int,
    batches: int = DEFAULT_BATCHES,
) -> EstimatorResult:
    """``E_start[exp(-int_0^t V(X_s) ds) g(X_t); t < zeta]``."""
    _require_sub_markovian(model)
    V = np.asarray(V, dtype=float)
    g = np.asarray(g, dtype=float)
    L = np.asarray(model.L)
    q, cum = _jump_table(L)
    sizes = _batch_sizes(n_paths, batches)
    means = np.empty(len(sizes))
    for b, size in enumerate(sizes):
        acc = np.zeros(size)

        def hook(idx, s, t0, t1, acc=acc):
            acc[idx] += V[s] * (t1 - t0)

        final, killed = _run_batch(L, q, cum, start, size, stream(seed, b), t, hook)
        vals = np.zeros(size)
        alive = ~killed
        vals[alive] = np.exp(-acc[alive]) * g[final[alive]]
        means[b] = vals.mean()
    return _summarize(means, sizes, n_paths, seed)


@dataclass(frozen=True)
class ProbeResult:
    times: tuple
    estimates: np.ndarray
    std_errors: np.ndarray
    start_value: float
    bounded: bool
    nonincreasing: bool

    @property
    def passed(self) -> bool:
        return self.bounded and self.nonincreasing

    def as_list(self) -> list:
        return list(zip(self.times, self.estimates.tolist()))


def supermartingale_probe(
    model: GeneratorModel,
    v,
    t_grid,
    start: int,
    n_paths: int,
    seed: int,
    batches: int = DEFAULT_BATCHES,
) -> ProbeResult:
    """Estimate ``t -> E_start v(X_t)`` (zero at the cemetery) on ``t_grid``."""
    _require_sub_markovian(model)
    v = np.asarray(v, dtype=float)
    times = np.sort(np.asarray(t_grid, dtype=float))
    L = np.asarray(model.L)
    q, cum = _jump_table(L)
    sizes = _batch_sizes(n_paths, batches)
    horizon = float(times.max()) * (1 + 1e-12) + 1e-12
    means = np.empty((len(sizes), times.size))
    for b, size in enumerate(sizes):
        vals = np.zeros((times.size, size))

        def hook(idx, s, t0, t1, vals=vals):
            for j, tau in enumerate(times):
                hit = (tau >= t0) & (tau < t1)
                if hit.any():
                    vals[j, idx[hit]] = v[s[hit]]

        _run_batch(L, q, cum, start, size, stream(seed, b), horizon, hook)
        means[b] = vals.mean(axis=1)
    res = _summarize(means, sizes, n_paths, seed)
    est, se = np.asarray(res.value), np.asarray(res.std_error)
    v0 = float(v[start])
    bounded = bool(np.all(est <= v0 + 3 * se + 1e-12))
    slack = 3 * np.sqrt(se[1:] ** 2 + se[:-1] ** 2) + 1e-12
    nonincreasing = bool(np.all(np.diff(est) <= slack))
    return ProbeResult(tuple(times.tolist()), est, se, v0, bounded, nonincreasing)
