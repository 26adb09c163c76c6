import numpy as np
import pytest
from hypothesis import given, strategies as st

from semilinear import calculus
from semilinear.nonlinearity import Logistic
from semilinear.solver import solve
from semilinear.state_model import resolvent_apply
from semilinear.suites import (
    KINDS,
    SUITES,
    SuiteResult,
    dense_fixed_point,
    injected_fault,
    random_decreasing_quotient,
    random_generator_matrix,
    random_logistic,
    random_model,
    run_suites,
)

from conftest import seeds, sizes

SMALL = {
    "kato_inequality": 30,
    "spectral_radius_identity": 20,
    "potential_strict_monotonicity": 20,
    "truncation_orderings": 2,
    "doob_round_trip": 3,
    "uniqueness": 3,
    "concave_image": 20,
    "convexity_defect": 20,
    "supermedian_test_agreement": 20,
    "stochastic_oracle": 2,
    "oracle_paths": 5000,
}


@given(seeds, sizes, st.sampled_from(KINDS))
def test_generator_kinds(seed, n, kind):
    L = random_generator_matrix(np.random.default_rng(seed), n, kind)
    off = L - np.diag(np.diag(L))
    assert np.all(off >= 0)
    rows = L.sum(axis=1)
    scale = np.abs(L).max()
    if kind == "sub":
        assert np.all(rows <= 1e-12 * scale) and rows.min() < 0
    elif kind == "conservative":
        np.testing.assert_allclose(rows, 0.0, atol=1e-12 * scale)
    elif kind == "non_sub":
        assert rows.max() > 0
    assert random_model(np.random.default_rng(seed), n, kind).irreducible


def test_unknown_kind():
    with pytest.raises(ValueError):
        random_generator_matrix(np.random.default_rng(0), 3, "weird")


@given(seeds, st.integers(1, 6))
def test_random_families_solvable(seed, n):
    rng = np.random.default_rng(seed)
    m = random_model(rng, n, "general")
    for f in (random_logistic(rng, m), random_decreasing_quotient(rng, m)):
        rep = solve(m, f)
        assert rep.criterion.satisfied and rep.u.min() > 0


def test_dense_fixed_point_scalar(scalar, sym2):
    assert dense_fixed_point(scalar, Logistic(3.0, 1.0), np.array([5.0]))[0] == pytest.approx(2.0, abs=1e-12)
    u = dense_fixed_point(sym2, Logistic(2.0, 1.0, 2), np.full(2, 3.0))
    np.testing.assert_allclose(u, 1.0, atol=1e-12)


@pytest.mark.parametrize("name", list(SUITES))
def test_suite_small(name):
    (res,) = run_suites([name], seed=11, sizes=SMALL)
    assert res.passed, res.failures[:3]
    assert res.instances >= 1
    doc = res.to_json()
    assert doc["name"] == name and doc["passed"]


def test_runs_are_reproducible():
    a = run_suites(["kato_inequality"], seed=5, sizes=SMALL)[0]
    b = run_suites(["kato_inequality"], seed=5, sizes=SMALL)[0]
    assert a.worst == b.worst


def test_fault_injection_is_scoped(sym2):
    v = resolvent_apply(sym2, [1.0, 1.0])
    with injected_fault("resolvent-sign"):
        assert np.all(calculus.resolvent_apply(sym2, [1.0, 1.0]) < 0)
        res = run_suites(["supermedian_test_agreement"], seed=1, sizes=SMALL)[0]
        assert not res.passed
    np.testing.assert_allclose(calculus.resolvent_apply(sym2, [1.0, 1.0]), v)
    with pytest.raises(ValueError):
        with injected_fault("nonsense"):
            pass


def test_suite_result_json():
    res = SuiteResult("x", 3, ["a"] * 12, 1.5)
    doc = res.to_json()
    assert not doc["passed"] and doc["n_failures"] == 12 and len(doc["failures"]) == 10
