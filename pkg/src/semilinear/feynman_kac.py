"""Potential-perturbed generators ``L - V`` and the uniqueness test.

``e^{t(L - diag V)}`` is the Feynman-Kac semigroup of the chain killed at
rate ``V``; its resolvent ``(alpha I - L + diag V)^{-1}`` has spectral radius
``1 / (alpha - s(L - V))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from ._perron import metzler_perron
from .errors import (
    AlphaNotAboveSpectralBound,
    MonotonicityNotStrict,
    NoConvergence,
    NotIrreducible,
    PreconditionUnverified,
)
from .nonlinearity import Nonlinearity
from .spectral import Potential, principal_eigenpair
from .state_model import GeneratorModel, resolvent_apply


@dataclass(frozen=True)
class PerturbedOperator:
    base: GeneratorModel
    V: np.ndarray
    operator: np.ndarray
    spectral_bound: float


def perturb(model: GeneratorModel, V) -> PerturbedOperator:
    if not model.irreducible:
        raise NotIrreducible("perturbed operator needs an irreducible generator")
    V = np.array(Potential.of(V).finite_values(), dtype=float)
    op = np.asarray(model.L) - np.diag(V)
    s, _, _ = metzler_perron(op)
    V.setflags(write=False)
    op.setflags(write=False)
    return PerturbedOperator(model, V, op, float(s))


def perturbed_resolvent(op: PerturbedOperator, alpha: float) -> np.ndarray:
    """``(alpha I - L + diag V)^{-1}``."""
    scale = max(1.0, float(np.abs(op.operator).max()))
    if not alpha > op.spectral_bound + 1e-12 * scale:
        raise AlphaNotAboveSpectralBound(alpha, op.spectral_bound)
    G = np.linalg.inv(alpha * np.eye(op.base.n) - op.operator)
    G[(G < 0) & (G > -1e-13 * np.abs(G).max())] = 0.0
    return G


def perturbed_semigroup(op: PerturbedOperator, t: float) -> np.ndarray:
    if t < 0:
        raise ValueError("t must be nonnegative")
    return scipy.linalg.expm(t * np.asarray(op.operator))


def spectral_radius_identity_check(op: PerturbedOperator, alpha: float) -> dict:
    """Perron radius of the perturbed resolvent against ``1/(alpha - s(L - V))``."""
    G = perturbed_resolvent(op, alpha)
    lhs, _, _ = metzler_perron(G)
    rhs = 1.0 / (alpha - op.spectral_bound)
    return {"lhs": float(lhs), "rhs": float(rhs), "gap": abs(float(lhs) - rhs)}


def potential_monotonicity_check(model: GeneratorModel, V1, V2) -> bool:
    """``s(L - V1) > s(L - V2)`` for ``V1 <= V2``, ``V1 != V2``."""
    V1 = np.asarray(V1, dtype=float)
    V2 = np.asarray(V2, dtype=float)
    if np.any(V1 > V2):
        raise PreconditionUnverified("V1 <= V2")
    if np.array_equal(V1, V2):
        raise PreconditionUnverified("V1 != V2")
    s1 = perturb(model, V1).spectral_bound
    s2 = perturb(model, V2).spectral_bound
    scale = max(1.0, float(np.abs(model.L).max()), float(np.abs(V2).max()))
    return bool(s1 - s2 > 1e-12 * scale)


def quotient(f: Nonlinearity, u) -> np.ndarray:
    """``h(i, u_i) = f(i, u_i) / u_i``."""
    u = np.asarray(u, dtype=float)
    return f(u) / u


@dataclass(frozen=True)
class ZeroMode:
    value: float  # |s(L + diag(f(u)/u))|
    fixed_point_gaps: tuple  # ((alpha, gap), ...)

    def __float__(self) -> float:
        return self.value


def zero_mode_check(model: GeneratorModel, u, f: Nonlinearity, alphas=(1.0, 10.0)) -> ZeroMode:
    """``|s(L + diag h(u))|`` and the gaps in ``u = alpha (alpha - L - diag h)^{-1} u``."""
    u = np.asarray(u, dtype=float)
    if not u.min() > 0:
        raise PreconditionUnverified("strictly_positive")
    h = quotient(f, u)
    B = np.asarray(model.L) + np.diag(h)
    s, _, _ = metzler_perron(B)
    gaps = []
    for a in alphas:
        if a <= s:
            continue
        fp = a * np.linalg.solve(a * np.eye(model.n) - B, u)
        gaps.append((float(a), float(np.abs(fp - u).max() / max(1.0, float(u.max())))))
    return ZeroMode(abs(float(s)), tuple(gaps))


def check_strict_decrease(f: Nonlinearity, lo: float, hi: float, num: int = 64) -> None:
    """Raise :class:`MonotonicityNotStrict` unless ``y -> f(i,y)/y`` strictly decreases."""
    ys = np.geomspace(lo, hi, num)
    Y = np.broadcast_to(ys, (f.n, num))
    H = f(Y) / Y
    scale = 1.0 + np.abs(H).max(axis=1, keepdims=True)
    D = np.diff(H, axis=1)
    bad = D >= -1e-12 * scale
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise MonotonicityNotStrict(int(i), float(ys[j]), float(ys[j + 1]), float(D[i, j]))


@dataclass
class UniquenessVerdict:
    unique: bool
    zero_mode_check: float
    branch_gap: float
    potential_V: np.ndarray | None = None
    broken: str | None = None
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "unique": self.unique,
            "zero_mode_check": self.zero_mode_check,
            "branch_gap": self.branch_gap,
            "potential_V": None if self.potential_V is None else self.potential_V.tolist(),
            "broken": self.broken,
            "details": self.details,
        }


def comparison_potential(f: Nonlinearity, u1, u2, zero_tol: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """``V = -(h(u1) - h(u2)) / w * u2`` (0 where ``w = 0``) and ``V0 = -h(u1) + V``."""
    u1, u2 = np.asarray(u1, float), np.asarray(u2, float)
    w = u1 - u2
    h1, h2 = quotient(f, u1), quotient(f, u2)
    nz = np.abs(w) > zero_tol
    V = np.zeros_like(w)
    V[nz] = -(h1[nz] - h2[nz]) / w[nz] * u2[nz]
    return V, -h1 + V


def uniqueness_check(
    model: GeneratorModel,
    f: Nonlinearity,
    u_candidates,
    tol: float = 1e-8,
    zero_mode_tol: float = 1e-7,
    options=None,
) -> UniquenessVerdict:
    """Uniqueness evidence under a strictly decreasing quotient ``f(i,y)/y``.

    Two candidates: builds the comparison potential and checks the chain
    ``0 <= s(L - V0) < s(L + h(u1)) = 0``, naming the inequality that breaks.
    One candidate: solves again by ascending iteration from a small
    subsolution and reports the gap to the given (maximal) solution.
    """
    cands = [np.asarray(u, dtype=float) for u in u_candidates]
    if not 1 <= len(cands) <= 2:
        raise ValueError("uniqueness_check takes one or two candidates")
    for u in cands:
        if not u.min() > 0:
            raise PreconditionUnverified("strictly_positive")
    lo = 0.5 * min(float(u.min()) for u in cands)
    hi = 2.0 * max(float(u.max()) for u in cands)
    check_strict_decrease(f, lo, hi)
    u1 = cands[0]
    zm = zero_mode_check(model, u1, f)
    scale = max(1.0, float(np.abs(u1).max()))
    if len(cands) == 2:
        u2 = cands[1]
        w = u1 - u2
        V, V0 = comparison_potential(f, u1, u2)
        gap = float(np.abs(w).max())
        details = {"zero_mode_u2": zero_mode_check(model, u2, f).value}
        if gap <= tol * scale:
            return UniquenessVerdict(zm.value <= zero_mode_tol, zm.value, gap, V, None, details)
        identity = float(np.abs(np.asarray(model.L) @ w - V0 * w).max())
        s_V0 = perturb(model, V0).spectral_bound
        s_h = -zm.value if zm.value else 0.0
        details.update({"necp1_gap": identity, "s_L_minus_V0": s_V0, "s_L_plus_h": s_h})
        if identity > 1e-8 * max(scale, float(np.abs(model.L).max())):
            broken = "w = -R(V0 w)"
        elif s_V0 < -1e-10:
            broken = "0 <= s(L - V0)"
        elif zm.value > zero_mode_tol:
            broken = "s(L + h(u1)) = 0"
        else:
            broken = "s(L - V0) < s(L + h(u1))"
        return UniquenessVerdict(False, zm.value, gap, V, broken, details)
    u_min = minimal_branch(model, f, u1, options)
    gap = float(np.abs(u_min - u1).max())
    unique = gap <= tol * scale and zm.value <= zero_mode_tol
    return UniquenessVerdict(unique, zm.value, gap, None, None, {"u_min": u_min.tolist()})


def minimal_branch(model: GeneratorModel, f: Nonlinearity, u_max, options=None, max_halvings: int = 200) -> np.ndarray:
    """Minimal solution below ``u_max`` by ascending iteration from ``eps * psi``.

    ``psi`` is the principal eigenvector of ``-L - (a0 ^ l)`` in the working
    picture with ``l`` chosen so its eigenvalue is negative; ``eps`` is halved
    until ``eps * psi`` is a verified subsolution.
    """
    from .solver import SolverOptions, _working_problem, monotone_iterate

    opts = options or SolverOptions()
    work = _working_problem(model, f, opts)
    W = work.model
    L = np.asarray(W.L)
    g = work.g
    v_max = np.asarray(u_max, float) / work.pull
    a0, _ = g.slopes()
    l = 1.0
    while True:
        pair = principal_eigenpair(W, a0.cap_above(l))
        if pair.eigenvalue < -1e-9 or l > 2.0**40:
            break
        l *= 2.0
    if pair.eigenvalue >= 0:
        raise PreconditionUnverified("lambda1(a0) < 0", "no truncation level with negative eigenvalue")
    psi = pair.eigenvector / pair.eigenvector.max()
    eps = 0.5 * float(v_max.min())
    for _ in range(max_halvings):
        seed = eps * psi
        if np.all(g(seed) + L @ seed >= 0) and np.all(seed <= v_max):
            break
        eps *= 0.5
    else:
        raise NoConvergence("subsolution search", max_halvings)
    res = monotone_iterate(L, g, np.zeros(W.n), seed, v_max, "up", opts.inner_tol)
    return work.pull * res.u
