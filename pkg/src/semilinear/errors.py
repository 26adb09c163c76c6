"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class SemilinearError(Exception):
    """Base class for all errors raised by :mod:`semilinear`."""


class NegativeOffDiagonal(SemilinearError):
    def __init__(self, i: int, j: int, value: float):
        self.i, self.j, self.value = i, j, value
        super().__init__(f"off-diagonal entry L[{i},{j}] = {value!r} is negative")


class NotIrreducible(SemilinearError):
    pass


class AlphaNotAboveSpectralBound(SemilinearError):
    def __init__(self, alpha: float, bound: float):
        self.alpha, self.bound = alpha, bound
        super().__init__(f"alpha={alpha!r} must exceed the spectral bound {bound!r}")


class NoConvergence(SemilinearError):
    def __init__(self, what: str, iterations: int, error: float | None = None):
        self.iterations = iterations
        self.error = error
        msg = f"{what} did not converge after {iterations} iterations"
        if error is not None:
            msg += f" (last error {error:.3e})"
        super().__init__(msg)


class NegativeArgument(SemilinearError):
    pass


class MissingF3Certificate(SemilinearError):
    pass


class SpectralBoundNotNegative(SemilinearError):
    pass


class BracketInvalid(SemilinearError):
    pass


class CriterionFailed(SemilinearError):
    def __init__(self, report):
        self.report = report
        super().__init__(
            "spectral criterion lambda1(a0) < 0 < lambda1(ainf) fails: "
            f"lambda1(a0)={report.criterion.lambda1_a0}, "
            f"lambda1(ainf)={report.criterion.lambda1_ainf}"
        )


class DivergingBranch(SemilinearError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class PositiveSpectralBound(SemilinearError):
    pass


class ConditioningError(SemilinearError):
    pass


class ResidualTooLarge(SemilinearError):
    def __init__(self, residual: float, tol: float):
        self.residual, self.tol = residual, tol
        super().__init__(f"residual {residual:.3e} exceeds tolerance {tol:.1e}")


class PreconditionUnverified(SemilinearError):
    def __init__(self, which: str, detail: str = ""):
        self.which = which
        super().__init__(f"precondition '{which}' not verified" + (f": {detail}" if detail else ""))


class MonotonicityNotStrict(SemilinearError):
    def __init__(self, state: int, y_lo: float, y_hi: float, diff: float):
        self.witness = (state, y_lo, y_hi, diff)
        super().__init__(
            f"f(i,y)/y is not strictly decreasing at state {state}: "
            f"h({y_hi:.6g}) - h({y_lo:.6g}) = {diff:.3e}"
        )


class NotSubMarkovian(SemilinearError):
    pass


class ConfigError(SemilinearError):
    pass
