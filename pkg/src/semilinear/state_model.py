"""Finite state space, measure and generator matrix.

A :class:`GeneratorModel` is the finite-dimensional stand-in for a positive
semigroup ``e^{tL}`` on ``L^p(E; m)``: ``L`` has nonnegative off-diagonal
entries, ``m`` is a vector of positive weights.  All objects are immutable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.sparse.csgraph import connected_components

from ._perron import dense_spectral_bound, metzler_perron
from .errors import AlphaNotAboveSpectralBound, NegativeOffDiagonal, NotIrreducible

ZERO_TOL = 1e-14


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MeasureSpace:
    n: int
    weights: np.ndarray
    p: float = 2.0

    def __post_init__(self):
        w = _frozen(self.weights)
        if self.n < 1:
            raise ValueError("state space needs n >= 1")
        if w.shape != (self.n,):
            raise ValueError(f"weights must have shape ({self.n},), got {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("measure weights must be finite and strictly positive")
        if not self.p >= 1:
            raise ValueError("norm exponent p must be >= 1")
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, n: int, p: float = 2.0) -> "MeasureSpace":
        return cls(n, np.ones(n), p)

    def pairing(self, u, v) -> float:
        """Weighted pairing ``<u, v> = sum_i u_i v_i m_i``."""
        return float(np.sum(np.asarray(u) * np.asarray(v) * self.weights))

    def norm(self, u, p: float | None = None) -> float:
        p = self.p if p is None else p
        u = np.abs(np.asarray(u, dtype=float))
        if math.isinf(p):
            return float(u.max())
        return float(np.sum(self.weights * u**p) ** (1.0 / p))


@dataclass(frozen=True)
class GeneratorModel:
    space: MeasureSpace
    L: np.ndarray
    sub_markovian: bool
    irreducible: bool
    spectral_bound: float
    perron_vector: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.space.n

    @property
    def row_sums(self) -> np.ndarray:
        return self.L.sum(axis=1)

    @property
    def killing_rates(self) -> np.ndarray:
        return np.maximum(-self.row_sums, 0.0)


def is_irreducible(L: np.ndarray) -> bool:
    n = L.shape[0]
    if n == 1:
        return True
    adj = (np.abs(L) >= ZERO_TOL) & (L > 0)
    np.fill_diagonal(adj, False)
    ncomp, _ = connected_components(adj.astype(np.int8), directed=True, connection="strong")
    return ncomp == 1


def validate_generator(L, space: MeasureSpace | None = None, allow_reducible: bool = False) -> GeneratorModel:
    """Check the standing hypotheses on ``L`` and compute its structural flags.

    Raises :class:`NegativeOffDiagonal` for a negative off-diagonal entry and
    :class:`NotIrreducible` when the positive-entry digraph is not strongly
    connected, unless ``allow_reducible`` asks for the degraded mode.
    """
    L = np.array(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ValueError(f"generator must be square, got shape {L.shape}")
    n = L.shape[0]
    if space is None:
        space = MeasureSpace.uniform(n)
    if space.n != n:
        raise ValueError(f"generator has {n} states but the measure space has {space.n}")
    if not np.all(np.isfinite(L)):
        raise ValueError("generator entries must be finite")
    L[np.abs(L) < ZERO_TOL] = 0.0
    off = L - np.diag(np.diag(L))
    bad = np.argwhere(off < 0)
    if len(bad):
        i, j = (int(k) for k in bad[0])
        raise NegativeOffDiagonal(i, j, float(L[i, j]))
    irreducible = is_irreducible(L)
    if not irreducible and not allow_reducible:
        raise NotIrreducible("positive-entry digraph of L is not strongly connected")
    sub = bool(np.all(L.sum(axis=1) <= ZERO_TOL * max(1.0, float(np.abs(L).max()))))
    if irreducible:
        s, v, _ = metzler_perron(L)
        phi = _frozen(v)
    else:
        s, phi = dense_spectral_bound(L), None
    return GeneratorModel(space, _frozen(L), sub, irreducible, float(s), phi)


def _check_alpha(model: GeneratorModel, alpha: float) -> None:
    scale = max(1.0, float(np.abs(model.L).max()))
    if not alpha > model.spectral_bound + 1e-12 * scale:
        raise AlphaNotAboveSpectralBound(alpha, model.spectral_bound)


def resolvent(model: GeneratorModel, alpha: float = 0.0) -> np.ndarray:
    """``(alpha I - L)^{-1}`` for ``alpha`` above the spectral bound."""
    _check_alpha(model, alpha)
    R = np.linalg.inv(alpha * np.eye(model.n) - model.L)
    # the exact inverse is entrywise nonnegative; drop rounding noise only
    R[(R < 0) & (R > -1e-13 * np.abs(R).max())] = 0.0
    return R


def resolvent_apply(model: GeneratorModel, g, alpha: float = 0.0) -> np.ndarray:
    _check_alpha(model, alpha)
    return np.linalg.solve(alpha * np.eye(model.n) - model.L, np.asarray(g, dtype=float))


def _uniformized_expm(L: np.ndarray, t: float) -> np.ndarray:
    n = L.shape[0]
    q = float(max(-np.diag(L).min(), 0.0)) or 1.0
    P = np.eye(n) + L / q
    # split the horizon so each Poisson sum has a moderate mean
    pieces = max(1, int(math.ceil(q * t / 8.0)))
    qt = q * t / pieces
    term = np.eye(n)
    weight = math.exp(-qt)
    acc = weight * term
    k, mass = 0, weight
    while 1.0 - mass > 1e-17 and k < 10_000:
        k += 1
        weight *= qt / k
        term = term @ P
        acc = acc + weight * term
        mass += weight
    return np.linalg.matrix_power(acc, pieces)


def semigroup(model: GeneratorModel, t: float, method: str = "auto") -> np.ndarray:
    """``e^{tL}``: Pade scaling-and-squaring, or uniformization.

    ``method="auto"`` uses the Pade route for ``n <= 200`` and uniformization
    for larger sub-Markovian models.
    """
    if t < 0:
        raise ValueError("semigroup time must be nonnegative")
    if t == 0:
        return np.eye(model.n)
    if method == "auto":
        method = "uniformization" if (model.n > 200 and model.sub_markovian) else "pade"
    if method == "uniformization":
        return _uniformized_expm(np.asarray(model.L), t)
    if method == "pade":
        return scipy.linalg.expm(t * np.asarray(model.L))
    raise ValueError(f"unknown method {method!r}")


def adjoint_matrix(L, weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    return (np.asarray(L).T * w[None, :]) / w[:, None]


def adjoint(model: GeneratorModel) -> np.ndarray:
    """Adjoint of ``L`` for the pairing ``<u, v> = sum u_i v_i m_i``."""
    return adjoint_matrix(model.L, model.space.weights)


def with_matrix(model: GeneratorModel, L) -> GeneratorModel:
    """Revalidate ``L`` on the same measure space (same degraded-mode policy)."""
    return validate_generator(L, model.space, allow_reducible=not model.irreducible)


@dataclass(frozen=True)
class ShiftedProblem:
    base: GeneratorModel
    kappa: float
    shifted_L: np.ndarray

    @property
    def model(self) -> GeneratorModel:
        return with_matrix(self.base, self.shifted_L)


def shift_to_negative_bound(model: GeneratorModel, margin: float = 1.0) -> ShiftedProblem:
    """Shift ``L -> L - kappa I`` with ``kappa = max(0, s(L) + margin)``."""
    if not margin > 0:
        raise ValueError("margin must be positive")
    kappa = max(0.0, model.spectral_bound + margin)
    return ShiftedProblem(model, kappa, _frozen(model.L - kappa * np.eye(model.n)))
