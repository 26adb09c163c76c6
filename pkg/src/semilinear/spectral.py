"""Principal eigenpairs and the limit eigenvalues of truncated slopes.

Sign convention: ``lambda1(a) := -s(L + diag(a))``, the principal eigenvalue
of ``-L - diag(a)``.  With it ``k -> lambda1(a0 ^ k)`` is nonincreasing and
``k -> lambda1(ainf v (-k))`` is nondecreasing, so the limits are the
infimum and the supremum of the truncation sequences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._perron import dense_spectral_bound, metzler_perron
from .errors import NotIrreducible, NoConvergence
from .extended import MINUS_INF, PLUS_INF, ExtendedReal
from .state_model import GeneratorModel, adjoint_matrix

SIGN_MARGIN = 1e-6
STEP_TOL = 1e-9
K_MAX = 2.0**20


@dataclass(frozen=True)
class Potential:
    """Per-state real potential, possibly carrying +inf / -inf markers."""

    values: np.ndarray
    plus_inf: np.ndarray | None = None
    minus_inf: np.ndarray | None = None

    def __post_init__(self):
        raw = np.array(self.values, dtype=float).reshape(-1)
        n = raw.size
        pinf = np.zeros(n, bool) if self.plus_inf is None else np.array(self.plus_inf, bool)
        minf = np.zeros(n, bool) if self.minus_inf is None else np.array(self.minus_inf, bool)
        pinf = pinf | (raw == np.inf)
        minf = minf | (raw == -np.inf)
        if np.any(np.isnan(raw)):
            raise ValueError("potential values must not be NaN")
        if np.any(pinf & minf):
            raise ValueError("a state cannot be marked both +inf and -inf")
        vals = np.where(pinf | minf, 0.0, raw)
        for name, arr in (("values", vals), ("plus_inf", pinf), ("minus_inf", minf)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def of(cls, a) -> "Potential":
        return a if isinstance(a, Potential) else cls(np.asarray(a, dtype=float))

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def is_finite(self) -> bool:
        return not (self.plus_inf.any() or self.minus_inf.any())

    def as_array(self) -> np.ndarray:
        """Float view with ``np.inf`` at marked states (for display only)."""
        out = self.values.copy()
        out[self.plus_inf] = np.inf
        out[self.minus_inf] = -np.inf
        return out

    def finite_values(self) -> np.ndarray:
        if not self.is_finite:
            raise ValueError("potential carries infinite markers")
        return self.values

    def cap_above(self, k: float) -> np.ndarray:
        """``a ^ k`` (requires no -inf markers)."""
        if self.minus_inf.any():
            raise ValueError("a0 may not contain -inf")
        return np.where(self.plus_inf, k, np.minimum(self.values, k))

    def cap_below(self, k: float) -> np.ndarray:
        """``a v (-k)`` (requires no +inf markers)."""
        if self.plus_inf.any():
            raise ValueError("ainf may not contain +inf")
        return np.where(self.minus_inf, -k, np.maximum(self.values, -k))

    def shifted(self, c) -> "Potential":
        return Potential(self.values + np.asarray(c, dtype=float), self.plus_inf, self.minus_inf)


@dataclass(frozen=True)
class EigenPair:
    eigenvalue: float
    eigenvector: np.ndarray
    side: str
    p: float
    residual: float
    iterations: int = 0

    @property
    def spectral_bound(self) -> float:
        return -self.eigenvalue


def _operator(model: GeneratorModel, a, side: str) -> np.ndarray:
    a = Potential.of(a).finite_values() if a is not None else np.zeros(model.n)
    if a.shape != (model.n,):
        raise ValueError(f"potential must have shape ({model.n},)")
    if side == "primal":
        L = np.asarray(model.L)
    elif side == "dual":
        L = adjoint_matrix(model.L, model.space.weights)
    else:
        raise ValueError(f"side must be 'primal' or 'dual', got {side!r}")
    return L + np.diag(a)


def principal_eigenpair(
    model: GeneratorModel, a=None, side: str = "primal", tol: float = 1e-12
) -> EigenPair:
    """Principal eigenpair of ``-L - diag(a)`` (or of its weighted adjoint).

    The eigenvector is strictly positive and normalized to unit weighted
    ``p``-norm.
    """
    if not model.irreducible:
        raise NotIrreducible("principal eigenpair needs an irreducible generator")
    B = _operator(model, a, side)
    s, v, iters = metzler_perron(B, tol=tol)
    v = v / model.space.norm(v)
    lam = -s
    residual = float(np.abs(-B @ v - lam * v).max())
    scale = max(1.0, float(np.abs(B).max()))
    if residual > 1e-8 * scale or not np.all(v > 0):
        raise NoConvergence("principal eigenpair", iters, residual)
    return EigenPair(float(lam), v, side, model.space.p, residual, iters)


def lambda1(model: GeneratorModel, a=None) -> float:
    """``-s(L + diag(a))``."""
    if not model.irreducible:
        raise NotIrreducible("lambda1 needs an irreducible generator")
    s, _, _ = metzler_perron(_operator(model, a, "primal"))
    return float(-s)


@dataclass(frozen=True)
class LimitEigenvalue:
    value: ExtendedReal
    trace: tuple = field(default=())  # ((k, lambda1), ...)
    sign: int = 0
    certified_at: float | None = None
    monotone: bool = True

    def first_k_with_sign(self, sign: int) -> float | None:
        for k, lam in self.trace:
            if sign < 0 and lam < -SIGN_MARGIN:
                return k
            if sign > 0 and lam > SIGN_MARGIN:
                return k
        return None

    def to_json(self) -> dict:
        return {
            "value": self.value.to_json(),
            "sign": self.sign,
            "certified_at_k": self.certified_at,
            "trace": [[k, lam] for k, lam in self.trace],
        }


def _sign(x: float) -> int:
    return 1 if x > SIGN_MARGIN else (-1 if x < -SIGN_MARGIN else 0)


def lambda1_limit_zero(model: GeneratorModel, a0, k0: float = 1.0, k_max: float = K_MAX) -> LimitEigenvalue:
    """``lim_k lambda1(a0 ^ k)`` over the schedule ``k0 * 2^j``.

    Any ``+inf`` entry forces the limit to ``-inf`` (the spectral bound of a
    Metzler matrix dominates each diagonal entry); the loop then only runs
    until the sign is certified.
    """
    a0 = Potential.of(a0)
    diverging = bool(a0.plus_inf.any())
    top = float(a0.values.max()) if not diverging else np.inf
    trace, prev, monotone = [], None, True
    k = k0
    while True:
        lam = lambda1(model, a0.cap_above(k))
        trace.append((k, lam))
        if prev is not None and lam > prev + STEP_TOL * max(1.0, abs(prev)):
            monotone = False
        if diverging:
            if lam < -SIGN_MARGIN:
                return LimitEigenvalue(MINUS_INF, tuple(trace), -1, k, monotone)
        elif k >= top or (prev is not None and abs(lam - prev) < STEP_TOL):
            return LimitEigenvalue(ExtendedReal.finite(lam), tuple(trace), _sign(lam), None, monotone)
        if k * 2 > k_max:
            break
        prev, k = lam, k * 2
    # the diverging branch always certifies before k_max for bounded generators
    return LimitEigenvalue(MINUS_INF if diverging else ExtendedReal.finite(lam), tuple(trace), -1 if diverging else _sign(lam), None, monotone)


def _killed_limit(model: GeneratorModel, ainf: "Potential") -> ExtendedReal:
    """Exact ``lim_k lambda1(ainf v (-k))`` when some entries are ``-inf``.

    Sending a diagonal entry to ``-inf`` decouples that state; the limit is
    ``-s`` of the principal submatrix on the remaining states.
    """
    keep = ~ainf.minus_inf
    if not keep.any():
        return PLUS_INF
    B = np.asarray(model.L)[np.ix_(keep, keep)] + np.diag(ainf.values[keep])
    return ExtendedReal.finite(-dense_spectral_bound(B))


def lambda1_limit_infinity(model: GeneratorModel, ainf, k0: float = 1.0, k_max: float = K_MAX) -> LimitEigenvalue:
    """``lim_k lambda1(ainf v (-k))`` over the schedule ``k0 * 2^j``."""
    ainf = Potential.of(ainf)
    killed = bool(ainf.minus_inf.any())
    bottom = float(-ainf.values.min()) if not killed else np.inf
    limit = _killed_limit(model, ainf) if killed else None
    trace, prev, monotone = [], None, True
    k = k0
    while True:
        lam = lambda1(model, ainf.cap_below(k))
        trace.append((k, lam))
        if prev is not None and lam < prev - STEP_TOL * max(1.0, abs(prev)):
            monotone = False
        if killed:
            if lam > SIGN_MARGIN:
                return LimitEigenvalue(limit, tuple(trace), 1, k, monotone)
            if prev is not None and abs(lam - prev) < STEP_TOL:
                break
        elif k >= bottom or (prev is not None and abs(lam - prev) < STEP_TOL):
            return LimitEigenvalue(ExtendedReal.finite(lam), tuple(trace), _sign(lam), None, monotone)
        if k * 2 > k_max:
            break
        prev, k = lam, k * 2
    value = limit if killed else ExtendedReal.finite(lam)
    return LimitEigenvalue(value, tuple(trace), value.sign() if not value.is_finite else _sign(float(value)), None, monotone)
