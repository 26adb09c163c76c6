"""Finite-dimensional supermedian calculus.

On a finite state space a nonnegative vector ``v`` is supermedian
(``e^{tL} v <= v`` for all ``t``) exactly when ``Lv <= 0``, because
``d/dt e^{tL} v = e^{tL} L v``.  The checks here certify that condition and
exercise the identities built on it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import PreconditionUnverified
from .state_model import GeneratorModel, resolvent_apply

SAMPLED_ALPHAS = (0.1, 1.0, 10.0, 100.0)


def _tol(v) -> float:
    return 1e-10 * (1.0 + float(np.abs(v).max(initial=0.0)))


@dataclass(frozen=True)
class SupermedianCertificate:
    vector: np.ndarray
    generator_sign: float  # max_i (Lv)_i
    resolvent_gaps: tuple  # ((alpha, max_i (alpha R_alpha v - v)_i), ...)
    verdict: bool
    resolvent_verdict: bool
    notes: tuple = ()

    @property
    def agree(self) -> bool:
        return self.verdict == self.resolvent_verdict


def is_supermedian(model: GeneratorModel, v, alphas=SAMPLED_ALPHAS, tol: float | None = None) -> SupermedianCertificate:
    """Certify ``v >= 0`` and ``Lv <= tol``; also sample ``alpha R_alpha v <= v``.

    The resolvent samples add one large ``alpha`` proportional to ``||L||``
    so that both tests are sharp characterizations.
    """
    v = np.asarray(v, dtype=float)
    tol = _tol(v) if tol is None else tol
    L = np.asarray(model.L)
    nonneg = bool(v.min() >= -tol)
    gen = float((L @ v).max())
    verdict = nonneg and gen <= tol
    big = 1e3 * max(1.0, float(np.abs(L).max()))
    gaps = []
    for a in tuple(alphas) + (big,):
        if a <= model.spectral_bound:
            continue
        gaps.append((float(a), float((a * resolvent_apply(model, v, a) - v).max())))
    res_verdict = nonneg and all(gap <= tol for _, gap in gaps)
    return SupermedianCertificate(v, gen, tuple(gaps), verdict, res_verdict)


def concave_image_check(model: GeneratorModel, v, phi: Callable) -> bool:
    """Supermedian verdict for ``phi(v)`` with ``phi`` concave, ``phi(0) >= 0``."""
    if not model.sub_markovian:
        raise PreconditionUnverified("sub_markovian")
    if not is_supermedian(model, v).verdict:
        raise PreconditionUnverified("supermedian", "input vector")
    return is_supermedian(model, np.asarray(phi(np.asarray(v, dtype=float)), dtype=float)).verdict


@dataclass(frozen=True)
class KatoResult:
    holds: bool
    slack: np.ndarray
    u: np.ndarray
    ties: int = 0


def _require_transient(model: GeneratorModel) -> None:
    if not model.sub_markovian:
        raise PreconditionUnverified("sub_markovian")
    if not model.spectral_bound < 0:
        raise PreconditionUnverified("spectral_bound", "s(L) < 0 required")


def kato_check(model: GeneratorModel, v, w, f, tol: float = 1e-12, check_inputs: bool = True) -> KatoResult:
    """``(u - v)+ <= R(1_{u > v} f)`` for ``u = R f - w``."""
    _require_transient(model)
    v, w, f = (np.asarray(x, dtype=float) for x in (v, w, f))
    if check_inputs:
        for name, x in (("v", v), ("w", w)):
            if not is_supermedian(model, x).verdict:
                raise PreconditionUnverified("supermedian", name)
    u = resolvent_apply(model, f) - w
    above = u > v
    left = np.maximum(u - v, 0.0)
    right = resolvent_apply(model, np.where(above, f, 0.0))
    slack = right - left
    return KatoResult(bool(slack.min() >= -tol), slack, u, int(np.sum(u == v)))


@dataclass(frozen=True)
class ConvexFunction:
    """C^1 convex map on ``[0, inf)`` given as value and derivative."""

    value: Callable
    derivative: Callable
    name: str = "phi"

    def __call__(self, y):
        return self.value(np.asarray(y, dtype=float))

    def validate(self, upper: float, num: int = 257) -> bool:
        """Secant slopes over a knot grid on ``[0, upper]`` are nondecreasing."""
        y = np.linspace(0.0, max(upper, 1e-12), num)
        vals = self.value(y)
        dy = np.diff(y)
        sec = np.diff(vals) / dy
        # rounding in the differences scales like eps |phi| / dy
        noise = 8 * np.finfo(float).eps * float(np.abs(vals).max()) / dy[1:]
        return bool(np.all(np.diff(sec) >= -1e-10 * (1.0 + np.abs(sec[1:])) - noise))


def affine(a: float, b: float) -> ConvexFunction:
    return ConvexFunction(lambda y: a + b * y, lambda y: np.full_like(y, b), f"{a}+{b}y")


def hinge_square(c: float) -> ConvexFunction:
    """``(1 - y/c)_+^2``: bounded, nonincreasing, convex and C^1."""
    return ConvexFunction(
        lambda y: np.maximum(1.0 - y / c, 0.0) ** 2,
        lambda y: -2.0 / c * np.maximum(1.0 - y / c, 0.0),
        f"(1-y/{c})_+^2",
    )


def exp_decay(rate: float = 1.0) -> ConvexFunction:
    return ConvexFunction(lambda y: np.exp(-rate * y), lambda y: -rate * np.exp(-rate * y), f"exp(-{rate}y)")


def softplus(scale: float = 1.0) -> ConvexFunction:
    return ConvexFunction(
        lambda y: scale * np.logaddexp(0.0, y / scale - 1.0),
        lambda y: 1.0 / (1.0 + np.exp(-(y / scale - 1.0))),
        f"softplus({scale})",
    )


def convexity_identity_defect(model: GeneratorModel, g, phi: ConvexFunction) -> SupermedianCertificate:
    """Certificate for ``v = phi(0) + R(phi'(u) g) - phi(u)`` with ``u = R g``."""
    _require_transient(model)
    g = np.asarray(g, dtype=float)
    if np.any(g < 0):
        raise PreconditionUnverified("g_nonnegative")
    u = resolvent_apply(model, g)
    if not phi.validate(float(u.max())):
        raise PreconditionUnverified("convexity", phi.name)
    phi0 = float(phi(np.zeros(1))[0])
    v = phi0 + resolvent_apply(model, phi.derivative(u) * g) - phi(u)
    return is_supermedian(model, v)


@dataclass(frozen=True)
class SubSupSolutionRecord:
    """Defect of ``w`` against ``u = gamma + R g(u)``."""

    w: np.ndarray
    gamma: np.ndarray
    g: Callable = field(repr=False)
    defect: np.ndarray
    side: str
    verified: bool


def make_record(model: GeneratorModel, w, gamma, g: Callable, side: str) -> SubSupSolutionRecord:
    """Build the record and verify the requested side.

    ``side="sub"`` needs ``gamma + R g(w) - w`` supermedian; ``side="super"``
    needs ``w - gamma - R g(w)`` supermedian.
    """
    _require_transient(model)
    w = np.asarray(w, dtype=float)
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), w.shape).copy()
    defect = gamma + resolvent_apply(model, np.asarray(g(np.maximum(w, 0.0)), dtype=float)) - w
    if side == "sub":
        ok = is_supermedian(model, defect).verdict
    elif side == "super":
        ok = is_supermedian(model, -defect).verdict
    else:
        raise ValueError("side must be 'sub' or 'super'")
    return SubSupSolutionRecord(w, gamma, g, defect, side, ok)


def max_subsolution_check(model: GeneratorModel, rec1: SubSupSolutionRecord, rec2: SubSupSolutionRecord) -> bool:
    """Sub-side verdict for ``w1 v w2`` given two verified subsolutions."""
    for name, rec in (("rec1", rec1), ("rec2", rec2)):
        if rec.side != "sub" or not rec.verified:
            raise PreconditionUnverified("subsolution", name)
        if rec.w.min() < 0:
            raise PreconditionUnverified("nonnegative", name)
    if not np.array_equal(rec1.gamma, rec2.gamma):
        raise PreconditionUnverified("same_gamma")
    return make_record(model, np.maximum(rec1.w, rec2.w), rec1.gamma, rec1.g, "sub").verified


def comparison_check(model: GeneratorModel, outer: tuple, inner: tuple, tol: float = 1e-10) -> bool:
    """``u_ <= u_max`` under the hypotheses of the comparison principle.

    ``outer = (gamma, g, psi, u_max)`` with ``u_max`` the maximal solution
    below ``psi``; ``inner = (gamma_, g_, u_)`` with ``u_`` a positive
    solution of ``w = gamma_ + R g_(w)``.
    """
    _require_transient(model)
    gamma, g, psi, u_max = outer
    gamma_, g_, u_ = inner
    n = model.n
    gamma = np.broadcast_to(np.asarray(gamma, float), (n,))
    gamma_ = np.broadcast_to(np.asarray(gamma_, float), (n,))
    u_ = np.asarray(u_, float)
    u_max = np.asarray(u_max, float)
    scale = max(1.0, float(np.abs(u_max).max()))
    if not is_supermedian(model, gamma - gamma_).verdict:
        raise PreconditionUnverified("gamma_difference_supermedian")
    if np.any(np.asarray(g_(u_)) > np.asarray(g(u_)) + tol * scale):
        raise PreconditionUnverified("g_order", "g_(u_) <= g(u_) fails")
    if np.any(u_ > np.asarray(psi) + tol * scale):
        raise PreconditionUnverified("below_psi")
    if u_.min() < 0:
        raise PreconditionUnverified("inner_positive")
    r = gamma_ + resolvent_apply(model, np.asarray(g_(u_), float)) - u_
    if np.abs(r).max() > 1e-8 * scale:
        raise PreconditionUnverified("inner_solution", f"residual {np.abs(r).max():.3e}")
    return bool(np.all(u_ <= u_max + tol * scale))
