"""The ten acceptance criteria at their stated sizes and tolerances."""

import math
import time

import numpy as np
import pytest

from semilinear.nonlinearity import Logistic, PowerMinusLinear, linear
from semilinear.solver import solve
from semilinear.spectral import lambda1
from semilinear.state_model import validate_generator
from semilinear.suites import random_model, run_suites

from conftest import record_criterion

SEED = 2024


def _suite(name):
    (res,) = run_suites([name], SEED)
    return res


def test_1_scalar_closed_forms():
    cases = [("logistic 3y-y^2, L=[[-1]]", validate_generator([[-1.0]]), Logistic(3.0, 1.0), 2.0)]
    for lam in (1.0, 2.0, 5.0):
        cases.append((f"sqrt(y), L=[[-{lam:g}]]", validate_generator([[-lam]]), PowerMinusLinear(0.5, 0.0), lam**-2))
    worst_err, worst_time = 0.0, 0.0
    for _, model, f, exact in cases:
        t0 = time.perf_counter()
        u = solve(model, f).u
        worst_time = max(worst_time, time.perf_counter() - t0)
        worst_err = max(worst_err, abs(u[0] - exact))
    ok = worst_err <= 1e-8 and worst_time < 1.0
    assert record_criterion(1, "scalar closed forms", ok, f"max error {worst_err:.2e}, max time {worst_time:.3f}s")


def dirichlet_path(n=50):
    h = 1.0 / (n + 1)
    L = (np.diag(np.full(n - 1, 1.0), 1) + np.diag(np.full(n - 1, 1.0), -1) - 2 * np.eye(n)) / h**2
    return validate_generator(L), h


def test_2_criterion_gating():
    rng = np.random.default_rng(SEED)
    linear_ok = True
    for _ in range(20):
        n = int(rng.integers(1, 12))
        model = random_model(rng, n, "sub")
        lam = lambda1(model)
        for c in (0.0, 0.5 * lam, lam - 1e-3, lam, lam + 1e-3, 2 * lam + 1, rng.uniform(0, 10)):
            rep = solve(model, linear(c, n))
            linear_ok &= (not rep.criterion.satisfied) and rep.u is None
            linear_ok &= float(rep.criterion.lambda1_a0.value) == pytest.approx(float(rep.criterion.lambda1_ainf.value), abs=1e-8)

    model, h = dirichlet_path(50)
    exact = 2 * (1 - math.cos(math.pi / 51)) / h**2
    eig_err = abs(lambda1(model) - exact)
    step = 0.2
    mus = exact + step * (np.arange(-5, 5) + 0.5)
    flips, gating_ok = [], True
    for mu in mus:
        rep = solve(model, Logistic(mu, 1.0, 50))
        sat = rep.criterion.satisfied
        flips.append(sat)
        gating_ok &= sat == (mu > exact)
        gating_ok &= (rep.u is not None and rep.u.min() > 0) if sat else rep.u is None
    first = mus[flips.index(True)] if True in flips else math.inf
    flip_ok = abs(first - exact) <= step and all(flips[flips.index(True):])
    ok = linear_ok and gating_ok and flip_ok and eig_err <= 1e-8
    detail = f"lambda1 error {eig_err:.1e}, flip at mu={first:.4f} vs {exact:.4f}, linear gating {'ok' if linear_ok else 'broken'}"
    assert record_criterion(2, "criterion gating", ok, detail)


def test_3_kato_inequality():
    res = _suite("kato_inequality")
    ok = res.passed and res.instances == 1000 and res.worst >= -1e-12 and res.elapsed < 30
    assert record_criterion(3, "Kato inequality", ok, f"{res.instances} instances, min slack {res.worst:.2e}, {res.elapsed:.1f}s")


def test_4_spectral_radius_identity():
    res = _suite("spectral_radius_identity")
    ok = res.passed and res.instances == 500 and res.worst <= 1e-9
    assert record_criterion(4, "spectral-radius identity", ok, f"{res.instances} instances, worst gap {res.worst:.2e}")


def test_5_potential_monotonicity():
    res = _suite("potential_strict_monotonicity")
    ok = res.passed and res.instances == 500
    assert record_criterion(5, "potential strict monotonicity", ok, f"{res.instances} pairs, worst margin {res.worst:.2e}")


def test_6_truncation_orderings():
    res = _suite("truncation_orderings")
    ok = res.passed and res.instances == 20
    assert record_criterion(6, "truncation orderings", ok, f"{res.instances} problems, worst violation {res.worst:.2e}")


def test_7_doob_round_trip():
    res = _suite("doob_round_trip")
    ok = res.passed and res.instances == 100
    detail = f"{res.instances} models, worst error {res.worst:.2e}, worst row-sum gap {res.extra['row_sum_worst']:.2e}"
    assert record_criterion(7, "Doob round trip", ok, detail)


def test_8_uniqueness():
    res = _suite("uniqueness")
    ok = res.passed and res.instances == 100
    assert record_criterion(8, "uniqueness", ok, f"{res.instances} instances, worst gap {res.worst:.2e}, {res.extra}")


def test_9_stochastic_oracle():
    res = _suite("stochastic_oracle")
    ok = res.passed and res.instances == 100 and res.elapsed < 120
    assert record_criterion(9, "stochastic oracle", ok, f"{res.extra}, {res.elapsed:.1f}s")


def test_10_supermedian_calculus():
    results = [_suite(n) for n in ("concave_image", "convexity_defect", "supermedian_test_agreement")]
    ok = all(r.passed and r.instances == 500 for r in results)
    detail = ", ".join(f"{r.name}: {r.instances - len(r.failures)}/{r.instances}" for r in results)
    assert record_criterion(10, "supermedian calculus", ok, detail)
