"""Positive solutions of ``-Lu = f(x, u)`` by truncation and monotone iteration.

The construction mirrors the existence proof: the nonlinearity is truncated
to ``f_{k,n}``, the truncated problem ``u = 1/n + R f_{k,n}(u)`` is solved
between the subsolution ``h_n(phi1)`` and the supersolution ``1 + R k``, and
the limits are taken in ``n`` and then in ``k``.  The maximal fixed point in
each bracket is reached by descending monotone iteration.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .doob import doob_transform, transform_nonlinearity
from .errors import (
    BracketInvalid,
    CriterionFailed,
    DivergingBranch,
    NoConvergence,
    SemilinearError,
    SpectralBoundNotNegative,
)
from .extended import ExtendedReal
from .nonlinearity import (
    Nonlinearity,
    SamplingGrid,
    Shifted,
    shift_delta,
    validate_hypotheses,
)
from .spectral import (
    EigenPair,
    LimitEigenvalue,
    lambda1,
    lambda1_limit_infinity,
    lambda1_limit_zero,
    principal_eigenpair,
)
from .state_model import GeneratorModel, shift_to_negative_bound, with_matrix

log = logging.getLogger(__name__)


class HypothesisFailed(SemilinearError):
    def __init__(self, certificate):
        self.certificate = certificate
        super().__init__(f"hypothesis {certificate.failed} fails, witness {certificate.witness}")


# --------------------------------------------------------------------------
# truncation and seeds


@dataclass(frozen=True, eq=False)
class Truncated(Nonlinearity):
    """``f_{k,n}(i, y) = min{f+(i,y) ^ k, k y} - f-(i,y) ^ n`` (``n = inf`` allowed)."""

    inner: Nonlinearity
    k: float
    n_level: float
    kind = "truncated"

    def __post_init__(self):
        if not (self.k > 0 and self.n_level > 0):
            raise ValueError("truncation levels k, n must be positive")

    @property
    def n(self) -> int:
        return self.inner.n

    def _eval(self, y):
        v = self.inner._eval(y)
        pos = np.minimum(np.minimum(np.maximum(v, 0.0), self.k), self.k * y)
        neg = np.minimum(np.maximum(-v, 0.0), self.n_level)
        return pos - neg

    def _deriv(self, y):
        v = self.inner._eval(y)
        d = self.inner._deriv(y)
        capped = np.minimum(v, self.k)
        linear_active = (v > 0) & (self.k * y < capped)
        f_active = (v > 0) & (v < self.k) & ~linear_active
        neg_active = (v < 0) & (-v < self.n_level)
        out = np.zeros_like(v)
        out = np.where(linear_active, self.k, out)
        out = np.where(f_active | neg_active, d, out)
        return out

    def slopes(self):
        a0, ainf = self.inner.slopes()
        return a0, ainf

    def to_spec(self):
        return {"kind": self.kind, "k": self.k, "n": self.n_level, "inner": self.inner.to_spec()}


def truncate(f: Nonlinearity, k: float, n: float) -> Truncated:
    return Truncated(f, float(k), float(n))


@dataclass(frozen=True)
class TruncationParams:
    k: float
    n: float
    mu: float | None = None  # None: adaptive per-state monotonization


def subsolution_seed(model: GeneratorModel, phi1: EigenPair | np.ndarray, n: float) -> np.ndarray:
    """``h_n(phi1) = 1 / (n (1 + phi1))``."""
    phi = phi1.eigenvector if isinstance(phi1, EigenPair) else np.asarray(phi1, dtype=float)
    return 1.0 / (n * (1.0 + phi))


def supersolution_seed(model: GeneratorModel, k: float) -> np.ndarray:
    """``1 + R(k 1)``."""
    if not model.spectral_bound < 0:
        raise SpectralBoundNotNegative(f"s(L) = {model.spectral_bound:.6g} must be negative")
    if k == 0:
        return np.ones(model.n)
    return 1.0 + np.linalg.solve(-np.asarray(model.L), np.full(model.n, float(k)))


# --------------------------------------------------------------------------
# monotone iteration


def _defect(L: np.ndarray, g: Nonlinearity, b: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``g(w) + b - (-L w)``: >= 0 for subsolutions, <= 0 for supersolutions."""
    return g(np.maximum(w, 0.0)) + b + L @ w


def _decrease_rate(g: Nonlinearity, lo: np.ndarray, hi: np.ndarray, samples: int = 33) -> np.ndarray:
    """Per-state bound on ``max(0, -dg/dy)`` over ``[lo_i, hi_i]``."""
    t = np.linspace(0.0, 1.0, samples)
    Y = lo[:, None] + (hi - lo)[:, None] * t[None, :]
    Y = np.maximum(Y, 0.0)
    with np.errstate(invalid="ignore"):
        d = g.derivative(Y)
        G = g(Y)
        dy = np.diff(Y, axis=1)
        sec = np.where(dy > 0, np.diff(G, axis=1) / np.where(dy > 0, dy, 1.0), 0.0)
    d = np.where(np.isfinite(d), d, 0.0)
    rate = np.maximum(-d.min(axis=1), -sec.min(axis=1))
    return np.maximum(rate, 0.0) * 1.25


@dataclass
class IterationResult:
    u: np.ndarray
    iterations: int
    newton_steps: int
    step: float
    history: list = field(default_factory=list)


def monotone_iterate(
    L: np.ndarray,
    g: Nonlinearity,
    gamma: np.ndarray,
    start: np.ndarray,
    bound: np.ndarray,
    direction: str = "down",
    tol: float = 1e-12,
    maxiter: int = 200_000,
    mu: float | None = None,
    newton: bool = True,
    record: bool = False,
) -> IterationResult:
    """Monotone iteration for ``u = gamma + R g(u)`` with ``R = (-L)^{-1}``.

    Each step solves ``(M - L) u_{j+1} = g(u_j) + M u_j - L gamma`` with a
    diagonal ``M`` dominating the decrease rate of ``g`` on the current order
    interval, so iterates are monotone (nonincreasing from a supersolution
    when ``direction="down"``, nondecreasing from a subsolution otherwise)
    and stay on the far side of ``bound``.  ``mu`` fixes ``M = mu I``.

    Once the steps contract geometrically, safeguarded Newton steps are tried;
    a Newton iterate is kept only if it lies in the current order interval and
    within twice the extrapolated distance to the monotone limit.
    """
    L = np.asarray(L, dtype=float)
    n = L.shape[0]
    eye = np.eye(n)
    down = direction == "down"
    b = -L @ gamma
    u = np.array(start, dtype=float)
    history = [u.copy()] if record else []
    prev_step = None
    newton_steps = 0
    safety = 1.0
    step = np.inf
    for it in range(1, maxiter + 1):
        lo, hi = (bound, u) if down else (u, bound)
        M = np.full(n, float(mu)) if mu is not None else safety * _decrease_rate(g, np.minimum(lo, hi), np.maximum(lo, hi))
        rhs = g(np.maximum(u, 0.0)) + M * u + b
        new = np.linalg.solve(np.diag(M) - L, rhs)
        scale = max(1.0, float(np.abs(u).max()))
        if down:
            overshoot = max(float((new - u).max()), float((bound - new).max()))
        else:
            overshoot = max(float((u - new).max()), float((new - bound).max()))
        if overshoot > 1e-12 * scale and mu is None and safety < 1e6:
            safety *= 4.0
            continue
        new = np.minimum(new, u) if down else np.maximum(new, u)
        step = float(np.abs(new - u).max())
        u = new
        if record:
            history.append(u.copy())
        if step <= tol * scale:
            return IterationResult(u, it, newton_steps, step, history)
        if newton and prev_step and step < 0.9 * prev_step and it > 3:
            rho = step / prev_step
            reach = 2.0 * step * rho / (1.0 - rho) + tol * scale
            polished = _newton_polish(L, g, b, u, bound, down, reach, tol)
            if polished is not None:
                u, k = polished
                newton_steps += k
                if record:
                    history.append(u.copy())
                return IterationResult(u, it, newton_steps, 0.0, history)
        prev_step = step
    raise NoConvergence("monotone iteration", maxiter, step)


def _newton_polish(L, g, b, u, bound, down, reach, tol, max_steps=30):
    lo, hi = (bound, u) if down else (u, bound)
    v = u.copy()
    scale = max(1.0, float(np.abs(u).max()))
    for k in range(1, max_steps + 1):
        r = g(np.maximum(v, 0.0)) + b + L @ v
        J = L + np.diag(g.derivative(np.maximum(v, 0.0)))
        try:
            dv = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            return None
        if not np.all(np.isfinite(dv)):
            return None
        v = v + dv
        if np.any(v < lo - 1e-12 * scale) or np.any(v > hi + 1e-12 * scale):
            return None
        if float(np.abs(v - u).max()) > reach:
            return None
        if float(np.abs(dv).max()) <= tol * scale:
            res = g(np.maximum(v, 0.0)) + b + L @ v
            if float(np.abs(res).max()) <= 1e-9 * max(scale, float(np.abs(b).max(initial=0.0))):
                return np.clip(v, lo, hi), k
            return None
    return None


def _check_bracket(L, g, b, under, over, tol=1e-10):
    under, over = np.asarray(under, float), np.asarray(over, float)
    if np.any(under > over + tol * max(1.0, float(np.abs(over).max()))):
        raise BracketInvalid("lower seed is not below the upper seed")
    dl = _defect(L, g, b, under)
    du = _defect(L, g, b, over)
    sl = tol * max(1.0, float(np.abs(L @ under).max()), float(np.abs(b).max()))
    su = tol * max(1.0, float(np.abs(L @ over).max()), float(np.abs(b).max()))
    if dl.min() < -sl:
        raise BracketInvalid(f"lower seed is not a subsolution (defect {dl.min():.3e})")
    if du.max() > su:
        raise BracketInvalid(f"upper seed is not a supersolution (defect {du.max():.3e})")


def solve_truncated(
    model: GeneratorModel,
    f_kn: Nonlinearity,
    params: TruncationParams,
    bracket: tuple,
    tol: float = 1e-12,
    record: bool = False,
) -> IterationResult:
    """Maximal solution of ``u = 1/n + R f_{k,n}(u)`` inside ``bracket``.

    ``model`` must have ``s(L) < 0``; both seeds are verified first.
    """
    if not model.spectral_bound < 0:
        raise SpectralBoundNotNegative("truncated problem needs s(L) < 0")
    L = np.asarray(model.L)
    gamma = np.full(model.n, 0.0 if math.isinf(params.n) else 1.0 / params.n)
    under, over = bracket
    _check_bracket(L, f_kn, -L @ gamma, under, over)
    return monotone_iterate(L, f_kn, gamma, over, np.asarray(under, float), "down", tol, mu=params.mu, record=record)


# --------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class Criterion:
    lambda1_a0: LimitEigenvalue
    lambda1_ainf: LimitEigenvalue

    @property
    def satisfied(self) -> bool:
        return self.lambda1_a0.value < 0 < self.lambda1_ainf.value

    def to_json(self) -> dict:
        return {
            "lambda1_a0": self.lambda1_a0.to_json(),
            "lambda1_ainf": self.lambda1_ainf.to_json(),
            "satisfied": self.satisfied,
        }


def criterion(model: GeneratorModel, f: Nonlinearity) -> Criterion:
    """The spectral pair ``(lambda1(a0), lambda1(ainf))``."""
    a0, ainf = f.slopes()
    return Criterion(lambda1_limit_zero(model, a0), lambda1_limit_infinity(model, ainf))


@dataclass
class SolutionReport:
    criterion: Criterion
    u: np.ndarray | None = None
    residual: float | None = None
    generator_residual: float | None = None
    bracket: tuple | None = None
    trace: list = field(default_factory=list)  # (k, n, inner_iterations, norm)
    uniqueness: object = "not_checked"
    shifts: dict = field(default_factory=dict)
    doob: bool = False
    warnings: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    truncations: dict = field(default_factory=dict, repr=False)  # (k, n) -> u_{k,n}

    @property
    def solved(self) -> bool:
        return self.u is not None

    def to_json(self) -> dict:
        uniq = self.uniqueness
        return {
            "criterion": self.criterion.to_json(),
            "u": None if self.u is None else self.u.tolist(),
            "residual": self.residual,
            "generator_residual": self.generator_residual,
            "bracket": None if self.bracket is None else [b.tolist() for b in self.bracket],
            "trace": [list(t) for t in self.trace],
            "uniqueness": uniq.to_json() if hasattr(uniq, "to_json") else uniq,
            "shifts": self.shifts,
            "doob": self.doob,
            "warnings": self.warnings,
            "diagnostics": self.diagnostics,
        }


@dataclass(frozen=True)
class SolverOptions:
    delta: float = 1.0
    margin: float = 1.0
    k0: float | None = None
    n0: float | None = None
    k_doublings: int = 30
    n_doublings: int = 6
    n_tol: float = 1e-6
    inner_tol: float = 1e-12
    outer_tol: float = 1e-9
    residual_tol: float = 1e-8
    ceiling: float = 1e12
    strict: bool = False
    uniqueness: bool = False
    keep_truncations: bool = False
    doob: str = "auto"  # "auto": whenever the input generator is not sub-Markovian
    grid: SamplingGrid = field(default_factory=SamplingGrid)

    def __post_init__(self):
        if self.doob not in ("auto", "always", "never"):
            raise ValueError("doob must be 'auto', 'always' or 'never'")
        for name in ("delta", "margin", "n_tol", "inner_tol", "outer_tol", "residual_tol", "ceiling"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def solution_residual(model: GeneratorModel, f: Nonlinearity, u, p: float | None = None, margin: float = 1.0) -> float:
    """``|| u + R f-(u) - R f+(u) ||_p`` in the shifted picture with ``s(L) < 0``."""
    u = np.asarray(u, dtype=float)
    shift = shift_to_negative_bound(model, margin)
    c = shift.kappa
    fu = f(np.maximum(u, 0.0)) + c * u
    A = -np.asarray(shift.shifted_L)
    r = u + np.linalg.solve(A, np.maximum(-fu, 0.0)) - np.linalg.solve(A, np.maximum(fu, 0.0))
    return model.space.norm(r, p)


def generator_residual(model: GeneratorModel, f: Nonlinearity, u) -> float:
    u = np.asarray(u, dtype=float)
    return float(np.abs(np.asarray(model.L) @ u + f(np.maximum(u, 0.0))).max())


@dataclass
class _Working:
    """Sub-Markovian working picture after shift and (optionally) Doob transform."""

    model: GeneratorModel
    g: Nonlinearity
    pull: np.ndarray
    delta: float
    shift: float
    C_delta: float
    doob: bool
    phi1: EigenPair


def _working_problem(model: GeneratorModel, f: Nonlinearity, opts: SolverOptions, shift: float | None = None) -> _Working:
    cert = validate_hypotheses(f, replace(opts.grid, deltas=(float(opts.delta),)))
    if not cert.passed:
        raise HypothesisFailed(cert)
    f_delta = shift_delta(f, opts.delta, cert)
    C = float(f_delta.C.max())
    c = max(C, model.spectral_bound + opts.margin) if shift is None else float(shift)
    Lw = with_matrix(model, np.asarray(model.L) - c * np.eye(model.n))
    gw = Shifted(f, c)
    if opts.doob == "never" or (opts.doob == "auto" and model.sub_markovian and Lw.sub_markovian):
        phi1 = principal_eigenpair(Lw)
        return _Working(Lw, gw, np.ones(model.n), opts.delta, c, C, False, phi1)
    dt = doob_transform(Lw)
    phi = dt.phi1.eigenvector
    W = dt.transformed
    return _Working(W, transform_nonlinearity(gw, phi), phi, opts.delta / float(phi.max()), c, C, True, principal_eigenpair(W))


def _k_start(crit: Criterion, c: float) -> float:
    k_cert = crit.lambda1_a0.first_k_with_sign(-1) or 1.0
    return float(2.0 ** math.ceil(math.log2(max(1.0, k_cert + c))))


def truncation_solution(work: _Working, k: float, n: float, start=None, tol: float = 1e-12, record: bool = False) -> IterationResult:
    """``u_{k,n}`` in the working picture (``n = inf`` gives ``u_k``)."""
    W = work.model
    g = truncate(work.g, k, n)
    over = supersolution_seed(W, k) if start is None else np.asarray(start, float)
    if math.isinf(n):
        under = np.zeros(W.n)
        gamma = np.zeros(W.n)
        return monotone_iterate(W.L, g, gamma, over, under, "down", tol, record=record)
    under = subsolution_seed(W, work.phi1, n)
    return solve_truncated(W, g, TruncationParams(k, n), (under, over), tol, record)


def solve(model: GeneratorModel, f: Nonlinearity, options: SolverOptions | None = None, **overrides) -> SolutionReport:
    """Strictly positive solution of ``-Lu = f(., u)`` when the criterion holds.

    Returns a :class:`SolutionReport`; ``u`` is ``None`` when the criterion
    fails (raised as :class:`CriterionFailed` in strict mode).
    """
    opts = replace(options or SolverOptions(), **overrides)
    crit = criterion(model, f)
    report = SolutionReport(crit)
    if not crit.satisfied:
        report.warnings.append("criterion not satisfied; no solution constructed")
        if opts.strict:
            raise CriterionFailed(report)
        return report
    work = _working_problem(model, f, opts)
    report.shifts = {"kappa": work.shift - work.C_delta, "C_delta": work.C_delta, "total": work.shift}
    report.doob = work.doob
    k0 = opts.k0 or _k_start(crit, work.shift)
    n0 = opts.n0 or float(max(1, math.ceil(1.0 / work.delta)))
    v, k = _truncation_loop(work, model, f, opts, k0, n0, report)
    u = work.pull * v
    report.u = u
    report.bracket = (work.pull * subsolution_seed(work.model, work.phi1, n0), work.pull * supersolution_seed(work.model, k))
    report.residual = solution_residual(model, f, u)
    report.generator_residual = generator_residual(model, f, u)
    if not (u.min() > 0):
        raise NoConvergence("solve (solution not strictly positive)", len(report.trace), float(u.min()))
    if report.residual > opts.residual_tol:
        raise NoConvergence("solve (residual check)", len(report.trace), report.residual)
    if opts.uniqueness:
        from .feynman_kac import uniqueness_check

        report.uniqueness = uniqueness_check(model, f, [u])
    return report


def _truncation_loop(work: _Working, model, f, opts: SolverOptions, k0: float, n0: float, report: SolutionReport):
    """Outer doubling of ``k`` with inner doubling of ``n``; returns ``(v, k)``."""
    v_prev = None
    norms = []
    for i in range(opts.k_doublings):
        k = k0 * 2.0**i
        v = None
        for j in range(opts.n_doublings):
            n = n0 * 2.0**j
            res = truncation_solution(work, k, n, start=v, tol=opts.inner_tol)
            report.trace.append((k, n, res.iterations, work.model.space.norm(res.u)))
            if opts.keep_truncations:
                report.truncations[(k, n)] = res.u
            done = v is not None and work.model.space.norm(res.u - v) < opts.n_tol
            v = res.u
            if done:
                break
        # polish at gamma = 0 from the last u_{k,n}
        res = truncation_solution(work, k, math.inf, start=v, tol=opts.inner_tol)
        v = res.u
        nv = work.model.space.norm(v)
        report.trace.append((k, math.inf, res.iterations, nv))
        if opts.keep_truncations:
            report.truncations[(k, math.inf)] = v
        norms.append(nv)
        if nv > opts.ceiling or (len(norms) >= 4 and all(norms[-m] > 10 * norms[-m - 1] for m in (1, 2, 3))):
            report.diagnostics = _divergence_diagnostics(work, model, f, v)
            if nv > opts.ceiling:
                raise DivergingBranch(f"||u_k|| = {nv:.3e} exceeds ceiling {opts.ceiling:.1e}", report.diagnostics)
            report.warnings.append("||u_k|| grew tenfold over three consecutive k")
        if v_prev is not None and work.model.space.norm(v - v_prev) < opts.outer_tol and v.min() > 0:
            return v, k
        v_prev = v
    report.warnings.append(f"truncation limit reached after {opts.k_doublings} doublings of k")
    return v, k


def _divergence_diagnostics(work: _Working, model: GeneratorModel, f: Nonlinearity, v) -> dict:
    """Normalized ``w_k = u_k/||u_k||`` and the sign test against ``lambda1(ainf)``."""
    w = v / work.model.space.norm(v)
    _, ainf = f.slopes()
    lam = lambda1_limit_infinity(model, ainf)
    l, lam_l = lam.trace[-1]
    dual = principal_eigenpair(model, ainf.cap_below(l), side="dual")
    u = work.pull * w
    return {
        "w_k": u.tolist(),
        "lambda1_ainf_l": lam_l,
        "l": l,
        "pairing": lam_l * model.space.pairing(u, dual.eigenvector),
    }


def solve_bracketed(work: _Working, k: float, direction: str, start, bound, tol: float = 1e-12) -> IterationResult:
    """Untruncated-in-``n`` problem ``u = R f_k(u)`` from an explicit seed."""
    g = truncate(work.g, k, math.inf)
    gamma = np.zeros(work.model.n)
    return monotone_iterate(work.model.L, g, gamma, start, bound, direction, tol)


def solution_map_monotonicity_check(
    model: GeneratorModel,
    f1: Nonlinearity,
    f2: Nonlinearity,
    options: SolverOptions | None = None,
    grid=None,
    tol: float = 1e-9,
) -> bool:
    """``S(f1) <= S(f2)`` entrywise for ``f1 <= f2``, using identical schedules."""
    opts = options or SolverOptions()
    ys = np.geomspace(1e-6, 1e6, 200) if grid is None else np.asarray(grid, float)
    Y = np.broadcast_to(ys, (model.n, ys.size))
    if np.any(f1(Y) > f2(Y) + 1e-14 * np.abs(f2(Y))):
        raise ValueError("f1 <= f2 does not hold on the verification grid")
    c1, c2 = criterion(model, f1), criterion(model, f2)
    if not (c1.satisfied and c2.satisfied):
        raise CriterionFailed(SolutionReport(c1 if not c1.satisfied else c2))
    w1 = _working_problem(model, f1, opts)
    w2 = _working_problem(model, f2, opts)
    shift = max(w1.shift, w2.shift)
    delta = opts.delta
    w1 = _working_problem(model, f1, opts, shift)
    w2 = _working_problem(model, f2, opts, shift)
    k0 = max(_k_start(c1, shift), _k_start(c2, shift))
    n0 = float(max(1, math.ceil(1.0 / min(w1.delta, w2.delta, delta))))
    common = replace(opts, k0=k0, n0=n0)
    u1 = _solve_fixed(model, f1, common, shift)
    u2 = _solve_fixed(model, f2, common, shift)
    return bool(np.all(u1 <= u2 + tol * max(1.0, float(np.abs(u2).max()))))


def _solve_fixed(model, f, opts: SolverOptions, shift: float) -> np.ndarray:
    work = _working_problem(model, f, opts, shift)
    report = SolutionReport(criterion(model, f))
    v, _ = _truncation_loop(work, model, f, opts, opts.k0, opts.n0, report)
    return work.pull * v
