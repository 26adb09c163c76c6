"""Positive solutions of semilinear equations ``-Lu = f(., u)`` on finite state spaces.

The generator ``L`` is a Metzler matrix (nonnegative off-diagonal entries)
with irreducible sparsity pattern.  Existence of a strictly positive solution
is decided by the signs of the principal eigenvalues of the linearizations
at zero and at infinity; solutions are built by monotone iteration on
truncated problems and checked against independent linear-algebra and
Monte Carlo oracles.
"""

from .errors import *  # noqa: F401,F403
from .extended import MINUS_INF, PLUS_INF, ExtendedReal
from .nonlinearity import (
    Logistic,
    PowerMinusLinear,
    Saturating,
    SamplingGrid,
    Shifted,
    Tabulated,
    from_spec,
    linear,
    validate_hypotheses,
)
from .solver import SolutionReport, SolverOptions, criterion, solve
from .spectral import Potential, lambda1, lambda1_limit_infinity, lambda1_limit_zero, principal_eigenpair
from .state_model import GeneratorModel, MeasureSpace, resolvent, semigroup, validate_generator

__version__ = "0.1.0"
