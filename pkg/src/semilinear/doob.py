"""Doob transform by the principal eigenfunction.

Conjugating ``L`` by ``phi1`` gives ``L^phi u = L(phi1 u) / phi1`` whose row
sums all equal ``s(L)``, so the transformed generator is sub-Markovian as
soon as ``s(L) <= 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConditioningError, NotIrreducible, PositiveSpectralBound, ResidualTooLarge
from .nonlinearity import Nonlinearity
from .spectral import EigenPair, principal_eigenpair
from .state_model import GeneratorModel, MeasureSpace, validate_generator

CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class DoobTransformed:
    original: GeneratorModel
    phi1: EigenPair
    transformed: GeneratorModel

    @property
    def transformed_measure(self) -> np.ndarray:
        return self.transformed.space.weights


def conjugate(L, phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    return np.asarray(L) * phi[None, :] / phi[:, None]


def doob_transform(model: GeneratorModel, phi1: EigenPair | None = None) -> DoobTransformed:
    if not model.irreducible:
        raise NotIrreducible("the Doob transform needs an irreducible generator")
    scale = max(1.0, float(np.abs(model.L).max()))
    if model.spectral_bound > 1e-12 * scale:
        raise PositiveSpectralBound(
            f"s(L) = {model.spectral_bound:.6g} > 0; shift the generator first"
        )
    phi1 = phi1 or principal_eigenpair(model)
    phi = phi1.eigenvector
    if phi.max() / phi.min() > CONDITION_LIMIT:
        raise ConditioningError(
            f"eigenfunction ratio {phi.max() / phi.min():.3e} exceeds {CONDITION_LIMIT:.0e}"
        )
    Lphi = conjugate(model.L, phi)
    space = MeasureSpace(model.n, model.space.weights * phi**model.space.p, model.space.p)
    transformed = validate_generator(Lphi, space)
    return DoobTransformed(model, phi1, transformed)


@dataclass(frozen=True, eq=False)
class Rescaled(Nonlinearity):
    """``f^phi(i, y) = f(i, phi_i y) / phi_i``; slopes are unchanged."""

    inner: Nonlinearity
    phi: np.ndarray
    kind = "rescaled"

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float)
        if phi.shape != (self.inner.n,) or np.any(phi <= 0):
            raise ValueError("phi must be a strictly positive per-state vector")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    @property
    def n(self) -> int:
        return self.inner.n

    def _phi(self, y):
        return self.phi if y.ndim == 1 else self.phi[:, None]

    def _eval(self, y):
        p = self._phi(y)
        return self.inner._eval(p * y) / p

    def _deriv(self, y):
        return self.inner._deriv(self._phi(y) * y)

    def slopes(self):
        return self.inner.slopes()

    def to_spec(self):
        return {"kind": self.kind, "phi": self.phi.tolist(), "inner": self.inner.to_spec()}


def transform_nonlinearity(f: Nonlinearity, phi1: EigenPair | np.ndarray) -> Rescaled:
    phi = phi1.eigenvector if isinstance(phi1, EigenPair) else phi1
    return Rescaled(f, phi)


def pull_back_solution(
    v,
    phi1: EigenPair | np.ndarray,
    model: GeneratorModel | None = None,
    f: Nonlinearity | None = None,
    tol: float = 1e-8,
) -> np.ndarray:
    """``u = phi1 * v``; checks the residual in the original problem when given."""
    phi = phi1.eigenvector if isinstance(phi1, EigenPair) else np.asarray(phi1)
    u = phi * np.asarray(v, dtype=float)
    if model is not None and f is not None:
        from .solver import solution_residual

        r = solution_residual(model, f, u)
        if r > tol:
            raise ResidualTooLarge(r, tol)
    return u
