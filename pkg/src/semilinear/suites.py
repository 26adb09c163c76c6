"""Randomized model generators and the property suites run by ``verify``.

Every suite takes a ``numpy`` generator and an instance count and returns a
:class:`SuiteResult`; a suite passes when no instance violates its property.
The same suites back the acceptance tests, so the CLI and the test run
exercise identical code.
"""

from __future__ import annotations

import contextlib
import math
import time
from dataclasses import dataclass, field
from unittest import mock

import numpy as np

from . import calculus
from .calculus import (
    concave_image_check,
    convexity_identity_defect,
    affine,
    exp_decay,
    hinge_square,
    is_supermedian,
    kato_check,
    softplus,
)
from .doob import doob_transform
from .errors import MonotonicityNotStrict, SemilinearError
from .feynman_kac import (
    perturb,
    perturbed_semigroup,
    potential_monotonicity_check,
    spectral_radius_identity_check,
    uniqueness_check,
)
from .nonlinearity import Logistic, Nonlinearity, PowerMinusLinear, Saturating, linear
from .spectral import principal_eigenpair
from .solver import SolverOptions, _k_start, _working_problem, criterion, solve, truncation_solution
from .state_model import GeneratorModel, MeasureSpace, resolvent_apply, shift_to_negative_bound, validate_generator
from .stochastic_oracle import estimate_feynman_kac, estimate_resolvent_apply

KINDS = ("sub", "conservative", "general", "non_sub")


# --------------------------------------------------------------------------
# random instances


def random_generator_matrix(rng: np.random.Generator, n: int, kind: str = "sub", density: float = 0.5) -> np.ndarray:
    """Irreducible Metzler matrix.

    ``kind`` fixes the row sums: ``"sub"`` has nonpositive row sums with at
    least one strictly negative, ``"conservative"`` has zero row sums,
    ``"non_sub"`` has at least one positive row sum and ``"general"`` mixes.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    L = rng.uniform(0.0, 1.0, (n, n)) * (rng.random((n, n)) < density)
    if n > 1:
        ring = rng.uniform(0.2, 1.0, n)
        L[np.arange(n), (np.arange(n) + 1) % n] += ring
    np.fill_diagonal(L, 0.0)
    off = L.sum(axis=1)
    if kind == "sub":
        kill = rng.uniform(0.0, 0.5, n)
        kill[rng.integers(n)] += 0.1
    elif kind == "conservative":
        kill = np.zeros(n)
    elif kind == "non_sub":
        kill = rng.uniform(-0.5, 0.5, n)
        kill[rng.integers(n)] = -rng.uniform(0.1, 0.5)
    else:
        kill = rng.uniform(-0.5, 0.5, n)
    L[np.diag_indices(n)] = -off - kill
    return L


def random_model(rng: np.random.Generator, n: int, kind: str = "sub", weights: bool = False, p: float = 2.0) -> GeneratorModel:
    w = rng.uniform(0.5, 2.0, n) if weights else np.ones(n)
    return validate_generator(random_generator_matrix(rng, n, kind), MeasureSpace(n, w, p))


def random_logistic(rng: np.random.Generator, model: GeneratorModel) -> Logistic:
    """Logistic ``mu y - beta y^2`` with ``lambda1(mu) < 0``."""
    n = model.n
    mu = max(0.0, -model.spectral_bound) + rng.uniform(0.5, 3.0, n)
    return Logistic(mu, rng.uniform(0.5, 2.0, n), n)


def random_decreasing_quotient(rng: np.random.Generator, model: GeneratorModel) -> Nonlinearity:
    """A family with ``f(i, y)/y`` strictly decreasing that meets the criterion."""
    n = model.n
    s = model.spectral_bound
    choice = rng.integers(3)
    if choice == 0:
        return random_logistic(rng, model)
    if choice == 1:
        # y**q - c y: a0 = +inf, ainf = -c; needs s(L - c) < 0
        c = np.maximum(0.0, s) + rng.uniform(0.2, 2.0, n)
        return PowerMinusLinear(float(rng.uniform(0.3, 0.8)), c, n)
    # a y/(1+y): a0 = a, ainf = 0; needs s(L) < 0 < s(L + a)
    if s >= 0:
        return random_logistic(rng, model)
    return Saturating(-s + rng.uniform(0.5, 3.0, n), n)


def dense_fixed_point(model: GeneratorModel, f: Nonlinearity, u0=None, tol: float = 1e-13, maxiter: int = 2_000_000) -> np.ndarray:
    """Brute-force positive solution of ``Lu + f(u) = 0``.

    Damped Picard iteration ``u <- u + theta (Lu + f(u))`` on the full
    system from a large constant, with ``theta`` below the local stability
    limit.  Independent of the truncation machinery.
    """
    L = np.asarray(model.L)
    u = np.full(model.n, 1.0) if u0 is None else np.array(u0, float)
    diag = float(np.abs(np.diag(L)).max())
    for it in range(maxiter):
        if it % 200 == 0:
            lip = float(np.abs(f.derivative(np.maximum(u, 1e-300))).max())
            theta = 0.5 / (diag + lip + 1e-300)
        r = L @ u + f(np.maximum(u, 0.0))
        u = u + theta * r
        if float(np.abs(r).max()) * theta <= tol * max(1.0, float(np.abs(u).max())):
            return u
    raise RuntimeError("dense fixed point did not converge")


# --------------------------------------------------------------------------
# suite plumbing


@dataclass
class SuiteResult:
    name: str
    instances: int
    failures: list = field(default_factory=list)
    worst: float = 0.0
    elapsed: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "instances": self.instances,
            "failures": self.failures[:10],
            "n_failures": len(self.failures),
            "worst": self.worst,
            "extra": self.extra,
        }


class _Timer:
    def __init__(self, result: SuiteResult):
        self.result = result

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self.result

    def __exit__(self, *exc):
        self.result.elapsed = time.perf_counter() - self.t0
        return False


@contextlib.contextmanager
def injected_fault(name: str | None):
    """Self-test harness: deliberately break a primitive for the duration."""
    if name is None:
        yield
        return
    if name != "resolvent-sign":
        raise ValueError(f"unknown fault {name!r}")
    original = calculus.resolvent_apply

    def flipped(*args, **kwargs):
        return -original(*args, **kwargs)

    with mock.patch.object(calculus, "resolvent_apply", flipped):
        yield


# --------------------------------------------------------------------------
# suites


def kato_suite(rng, instances: int = 1000, n_max: int = 20) -> SuiteResult:
    """``(u - v)+ <= R(1_{u>v} f)`` for ``u = Rf - w``, ``v, w`` supermedian."""
    res = SuiteResult("kato_inequality", instances)
    with _Timer(res):
        for k in range(instances):
            n = int(rng.integers(1, n_max + 1))
            m = random_model(rng, n, "sub")
            v = resolvent_apply(m, rng.uniform(0, 1, n)) + rng.uniform(0, 0.5)
            w = resolvent_apply(m, rng.uniform(0, 1, n) * (rng.random(n) < 0.7)) + rng.uniform(0, 0.5)
            f = rng.normal(0.0, 1.0, n) * rng.choice([0.1, 1.0, 10.0])
            try:
                out = kato_check(m, v, w, f)
            except SemilinearError as exc:
                res.failures.append(f"instance {k}: {type(exc).__name__}: {exc}")
                continue
            res.worst = min(res.worst, float(out.slack.min()))
            if not out.holds:
                res.failures.append(f"instance {k}: slack {out.slack.min():.3e}")
    return res


def spectral_radius_suite(rng, instances: int = 500, n_max: int = 12, tol: float = 1e-9) -> SuiteResult:
    """``r(G^V_alpha) (alpha - s(L - V)) = 1``."""
    res = SuiteResult("spectral_radius_identity", instances)
    with _Timer(res):
        for k in range(instances):
            n = int(rng.integers(1, n_max + 1))
            m = random_model(rng, n, str(rng.choice(KINDS)))
            op = perturb(m, rng.uniform(-2.0, 2.0, n))
            alpha = op.spectral_bound + float(rng.uniform(0.05, 5.0))
            out = spectral_radius_identity_check(op, alpha)
            err = abs(out["lhs"] * (alpha - op.spectral_bound) - 1.0)
            res.worst = max(res.worst, err)
            if not err <= tol:
                res.failures.append(f"instance {k}: |r (alpha - s) - 1| = {err:.3e}")
    return res


def potential_monotonicity_suite(rng, instances: int = 500, n_max: int = 12) -> SuiteResult:
    """``s(L - V1) > s(L - V2)`` for ``V1 <= V2``, ``V1 != V2``."""
    res = SuiteResult("potential_strict_monotonicity", instances)
    res.worst = math.inf
    with _Timer(res):
        for k in range(instances):
            n = int(rng.integers(1, n_max + 1))
            m = random_model(rng, n, str(rng.choice(KINDS)))
            V1 = rng.uniform(-2.0, 2.0, n)
            bump = rng.uniform(0.0, 1.0, n) * (rng.random(n) < 0.5)
            bump[rng.integers(n)] = rng.uniform(1e-3, 1.0)
            V2 = V1 + bump
            ok = potential_monotonicity_check(m, V1, V2)
            gap = perturb(m, V1).spectral_bound - perturb(m, V2).spectral_bound
            res.worst = min(res.worst, gap)
            if not ok:
                res.failures.append(f"instance {k}: s(L-V1) - s(L-V2) = {gap:.3e}")
    return res


def truncation_order_suite(rng, instances: int = 20, n_max: int = 8, levels: int = 3, tol: float = 1e-9) -> SuiteResult:
    """``u_{k,n}`` nonincreasing in ``n`` and nondecreasing in ``k``."""
    res = SuiteResult("truncation_orderings", instances)
    with _Timer(res):
        for inst in range(instances):
            n_states = int(rng.integers(1, n_max + 1))
            m = random_model(rng, n_states, str(rng.choice(["sub", "general"])))
            f = random_logistic(rng, m)
            opts = SolverOptions()
            work = _working_problem(m, f, opts)
            k0 = _k_start(criterion(m, f), work.shift)
            n0 = float(max(1, math.ceil(1.0 / work.delta)))
            ks = [k0 * 2.0**i for i in range(levels + 1)]
            ns = [n0 * 2.0**j for j in range(levels + 1)]
            U = {(k, n): truncation_solution(work, k, n).u for k in ks for n in ns}
            for k in ks:
                for a, b in zip(ns, ns[1:]):
                    viol = float((U[(k, b)] - U[(k, a)]).max())
                    res.worst = max(res.worst, viol)
                    if viol > tol:
                        res.failures.append(f"instance {inst}: u_(k={k:g},n={b:g}) exceeds u_(k,n={a:g}) by {viol:.3e}")
            for n in ns:
                for a, b in zip(ks, ks[1:]):
                    viol = float((U[(a, n)] - U[(b, n)]).max())
                    res.worst = max(res.worst, viol)
                    if viol > tol:
                        res.failures.append(f"instance {inst}: u_(k={a:g},n={n:g}) exceeds u_(k={b:g},n) by {viol:.3e}")
    return res


def doob_roundtrip_suite(rng, instances: int = 100, n_max: int = 6, tol: float = 1e-7, row_tol: float = 1e-10) -> SuiteResult:
    """Doob-route solution against the dense brute force, and transformed row sums."""
    res = SuiteResult("doob_round_trip", instances)
    rows_worst = 0.0
    with _Timer(res):
        for inst in range(instances):
            n = int(rng.integers(2, n_max + 1))
            m = random_model(rng, n, "non_sub")
            f = random_logistic(rng, m)
            shifted = shift_to_negative_bound(m).model
            dt = doob_transform(shifted)
            rows = float(np.abs(dt.transformed.row_sums - shifted.spectral_bound).max())
            rows_worst = max(rows_worst, rows)
            if rows > row_tol:
                res.failures.append(f"instance {inst}: transformed row sums off by {rows:.3e}")
            try:
                rep = solve(m, f, doob="always")
            except SemilinearError as exc:
                res.failures.append(f"instance {inst}: {type(exc).__name__}: {exc}")
                continue
            ref = dense_fixed_point(m, f, u0=np.full(n, float(rep.u.max()) * 2.0))
            err = float(np.abs(rep.u - ref).max()) / max(1.0, float(np.abs(ref).max()))
            res.worst = max(res.worst, err)
            if not rep.doob:
                res.failures.append(f"instance {inst}: pipeline skipped the Doob transform")
            if err > tol:
                res.failures.append(f"instance {inst}: |u_doob - u_dense| = {err:.3e}")
    res.extra["row_sum_worst"] = rows_worst
    return res


def uniqueness_suite(rng, instances: int = 100, n_max: int = 8, tol: float = 1e-8, zero_mode_tol: float = 1e-7) -> SuiteResult:
    """Minimal and maximal branches agree; the linear family is rejected."""
    res = SuiteResult("uniqueness", instances)
    zero_worst = 0.0
    with _Timer(res):
        for inst in range(instances):
            n = int(rng.integers(1, n_max + 1))
            m = random_model(rng, n, str(rng.choice(["sub", "general"])))
            f = random_decreasing_quotient(rng, m)
            try:
                rep = solve(m, f)
                verdict = uniqueness_check(m, f, [rep.u], tol=tol, zero_mode_tol=zero_mode_tol)
            except SemilinearError as exc:
                res.failures.append(f"instance {inst}: {type(exc).__name__}: {exc}")
                continue
            rel = verdict.branch_gap / max(1.0, float(np.abs(rep.u).max()))
            res.worst = max(res.worst, rel)
            zero_worst = max(zero_worst, verdict.zero_mode_check)
            if not verdict.unique:
                res.failures.append(f"instance {inst}: gap {verdict.branch_gap:.3e}, zero mode {verdict.zero_mode_check:.3e}")
            # degenerate linear family f = lambda1 y on the same model
            phi1 = principal_eigenpair(m)
            try:
                uniqueness_check(m, linear(phi1.eigenvalue, n), [phi1.eigenvector])
                res.failures.append(f"instance {inst}: linear family not rejected")
            except MonotonicityNotStrict:
                pass
    res.extra["zero_mode_worst"] = zero_worst
    return res


def oracle_suite(rng, runs: int = 100, n_paths: int = 100_000, n_max: int = 10, seed: int = 0, k: float = 3.0) -> SuiteResult:
    """Monte Carlo resolvent and Feynman-Kac estimates within ``k`` standard errors."""
    res = SuiteResult("stochastic_oracle", runs)
    misses = {"resolvent": 0, "feynman_kac": 0}
    with _Timer(res):
        for r in range(runs):
            n = int(rng.integers(1, n_max + 1))
            m = random_model(rng, n, "sub")
            start = int(rng.integers(n))
            g = rng.uniform(0.0, 2.0, n)
            alpha = 0.0 if rng.random() < 0.5 else float(rng.uniform(0.1, 2.0))
            est = estimate_resolvent_apply(m, g, alpha, start, n_paths, seed=seed * 1_000_003 + 2 * r)
            exact = resolvent_apply(m, g, alpha)[start]
            z = abs(est.value - exact) / est.std_error
            res.worst = max(res.worst, z)
            if z > k:
                misses["resolvent"] += 1
            V = rng.uniform(-0.5, 1.0, n)
            t = float(rng.uniform(0.2, 2.0))
            est = estimate_feynman_kac(m, V, g, t, start, n_paths, seed=seed * 1_000_003 + 2 * r + 1)
            exact = (perturbed_semigroup(perturb(m, V), t) @ g)[start]
            z = abs(est.value - exact) / est.std_error
            res.worst = max(res.worst, z)
            if z > k:
                misses["feynman_kac"] += 1
    allowed = runs - math.ceil(0.99 * runs)
    for name, miss in misses.items():
        if miss > allowed:
            res.failures.append(f"{name}: {miss} of {runs} runs outside {k:g} standard errors")
    res.extra["misses"] = misses
    return res


CONCAVE_MAPS = (
    ("sqrt", np.sqrt),
    ("log1p", np.log1p),
    ("one_minus_exp", lambda y: 1.0 - np.exp(-y)),
    ("min_cap", lambda y: np.minimum(y, 0.5)),
    ("affine", lambda y: 0.3 + 0.7 * y),
)


def concave_image_suite(rng, instances: int = 500, n_max: int = 12) -> SuiteResult:
    """Concave images ``phi(v)`` of supermedian ``v`` remain supermedian."""
    res = SuiteResult("concave_image", instances)
    with _Timer(res):
        for k in range(instances):
            n = int(rng.integers(1, n_max + 1))
            kind = str(rng.choice(["sub", "conservative"]))
            m = random_model(rng, n, kind)
            g = rng.uniform(0, 1, n) * (rng.random(n) < 0.7)
            v = np.full(n, rng.uniform(0, 2.0)) + (resolvent_apply(m, g) if kind == "sub" else 0.0)
            name, phi = CONCAVE_MAPS[int(rng.integers(len(CONCAVE_MAPS)))]
            try:
                ok = concave_image_check(m, v, phi)
            except SemilinearError as exc:
                res.failures.append(f"instance {k}: {type(exc).__name__}: {exc}")
                continue
            if not ok:
                res.failures.append(f"instance {k}: {name}(v) not supermedian")
    return res


def convexity_defect_suite(rng, instances: int = 500, n_max: int = 12) -> SuiteResult:
    """``phi(0) + R(phi'(u) g) - phi(u)`` is supermedian for ``u = Rg``."""
    res = SuiteResult("convexity_defect", instances)
    with _Timer(res):
        for k in range(instances):
            n = int(rng.integers(1, n_max + 1))
            m = random_model(rng, n, "sub")
            g = rng.uniform(0, 1, n) * (rng.random(n) < 0.8)
            u_max = float(resolvent_apply(m, g).max())
            choice = int(rng.integers(4))
            if choice == 0:
                phi = affine(float(rng.uniform(0, 1)), float(rng.uniform(-1, 1)))
            elif choice == 1:
                phi = hinge_square(float(rng.uniform(0.2, 2.0)) * max(u_max, 1e-3))
            elif choice == 2:
                phi = exp_decay(float(rng.uniform(0.1, 3.0)))
            else:
                phi = softplus(float(rng.uniform(0.2, 3.0)))
            try:
                cert = convexity_identity_defect(m, g, phi)
            except SemilinearError as exc:
                res.failures.append(f"instance {k}: {type(exc).__name__}: {exc}")
                continue
            if not cert.verdict:
                res.failures.append(f"instance {k}: defect for {phi.name} has max Lv = {cert.generator_sign:.3e}")
    return res


def supermedian_agreement_suite(rng, instances: int = 500, n_max: int = 12) -> SuiteResult:
    """Generator-sign and sampled-resolvent tests give the same verdict."""
    res = SuiteResult("supermedian_test_agreement", instances)
    positives = 0
    with _Timer(res):
        for k in range(instances):
            n = int(rng.integers(1, n_max + 1))
            kind = str(rng.choice(["sub", "conservative"]))
            m = random_model(rng, n, kind)
            mode = int(rng.integers(3))
            if mode == 0 and kind == "sub":
                v = resolvent_apply(m, rng.uniform(0, 1, n))
            elif mode == 1:
                v = rng.uniform(0, 2, n)
            else:
                v = np.full(n, rng.uniform(0, 2)) + rng.normal(0, 1e-3, n)
            try:
                cert = is_supermedian(m, v)
            except SemilinearError as exc:
                res.failures.append(f"instance {k}: {type(exc).__name__}: {exc}")
                continue
            positives += cert.verdict
            if not cert.agree:
                res.failures.append(f"instance {k}: generator {cert.verdict} vs resolvent {cert.resolvent_verdict}")
    res.extra["supermedian_instances"] = positives
    return res


SUITES = {
    "kato_inequality": kato_suite,
    "spectral_radius_identity": spectral_radius_suite,
    "potential_strict_monotonicity": potential_monotonicity_suite,
    "truncation_orderings": truncation_order_suite,
    "doob_round_trip": doob_roundtrip_suite,
    "uniqueness": uniqueness_suite,
    "concave_image": concave_image_suite,
    "convexity_defect": convexity_defect_suite,
    "supermedian_test_agreement": supermedian_agreement_suite,
    "stochastic_oracle": oracle_suite,
}


def run_suites(names, seed: int, sizes: dict | None = None, fault: str | None = None) -> list[SuiteResult]:
    """Run the named suites, each from its own stream derived from ``seed``."""
    sizes = sizes or {}
    out = []
    with injected_fault(fault):
        for name in names:
            fn = SUITES[name]
            rng = np.random.default_rng([seed, list(SUITES).index(name)])
            kwargs = {}
            if name in sizes:
                key = "runs" if name == "stochastic_oracle" else "instances"
                kwargs[key] = int(sizes[name])
            if name == "stochastic_oracle":
                kwargs["seed"] = seed
                if "oracle_paths" in sizes:
                    kwargs["n_paths"] = int(sizes["oracle_paths"])
            try:
                out.append(fn(rng, **kwargs))
            except SemilinearError as exc:
                out.append(SuiteResult(name, 0, [f"{type(exc).__name__}: {exc}"]))
    return out
