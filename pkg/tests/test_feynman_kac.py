import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from semilinear.errors import AlphaNotAboveSpectralBound, MonotonicityNotStrict, PreconditionUnverified
from semilinear.feynman_kac import (
    check_strict_decrease,
    comparison_potential,
    minimal_branch,
    perturb,
    perturbed_resolvent,
    perturbed_semigroup,
    potential_monotonicity_check,
    spectral_radius_identity_check,
    uniqueness_check,
    zero_mode_check,
)
from semilinear.nonlinearity import Logistic, PowerMinusLinear, linear
from semilinear.solver import solve
from semilinear.spectral import principal_eigenpair
from semilinear.state_model import resolvent, semigroup
from semilinear.suites import random_decreasing_quotient

from conftest import model_from, seeds, sizes


def test_perturbed_resolvent_examples(scalar, sym2):
    np.testing.assert_allclose(perturbed_resolvent(perturb(scalar, [2.0]), 0.0), [[1 / 3]])
    np.testing.assert_allclose(perturbed_resolvent(perturb(sym2, [0.0, 0.0]), 0.5), resolvent(sym2, 0.5), atol=1e-14)
    with pytest.raises(AlphaNotAboveSpectralBound):
        perturbed_resolvent(perturb(sym2, [0.0, 0.0]), -2.0)


def test_perturbed_semigroup(sym2):
    np.testing.assert_allclose(perturbed_semigroup(perturb(sym2, [0.0, 0.0]), 0.7), semigroup(sym2, 0.7), atol=1e-13)
    # constant potential c multiplies the semigroup by e^{-ct}
    np.testing.assert_allclose(
        perturbed_semigroup(perturb(sym2, [1.5, 1.5]), 0.7), math.exp(-1.05) * semigroup(sym2, 0.7), atol=1e-13
    )


def test_spectral_radius_examples(scalar, sym2):
    out = spectral_radius_identity_check(perturb(scalar, [2.0]), 1.0)
    assert out["lhs"] == pytest.approx(0.25) and out["rhs"] == pytest.approx(0.25)
    out = spectral_radius_identity_check(perturb(sym2, [0.0, 0.0]), 1.0)
    assert out["rhs"] == pytest.approx(1 / (1.0 - sym2.spectral_bound))


@given(seeds, sizes, st.floats(0.0, 10.0))
def test_spectral_radius_property(seed, n, alpha):
    m = model_from(seed, n, "general")
    V = np.random.default_rng(seed).uniform(-1, 3, n)
    op = perturb(m, V)
    a = max(alpha, op.spectral_bound + 0.1)
    out = spectral_radius_identity_check(op, a)
    assert abs(out["lhs"] * (a - op.spectral_bound) - 1) <= 1e-9
    dense = np.max(np.abs(np.linalg.eigvals(perturbed_resolvent(op, a))))
    assert out["lhs"] == pytest.approx(dense, rel=1e-9)


def test_potential_monotonicity_examples(sym2):
    assert potential_monotonicity_check(sym2, [0.0, 0.0], [0.0, 1.0])
    s2 = perturb(sym2, [0.0, 1.0]).spectral_bound
    assert s2 == pytest.approx((-5 + math.sqrt(5)) / 2)
    gap = perturb(sym2, [0.2, 0.3]).spectral_bound - perturb(sym2, [0.7, 0.8]).spectral_bound
    assert gap == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(PreconditionUnverified):
        potential_monotonicity_check(sym2, [0.0, 1.0], [0.0, 1.0])
    with pytest.raises(PreconditionUnverified):
        potential_monotonicity_check(sym2, [0.0, 1.0], [0.0, 0.5])


@given(seeds, sizes)
def test_potential_monotonicity_property(seed, n):
    rng = np.random.default_rng(seed)
    m = model_from(seed, n, "general")
    V1 = rng.uniform(-1, 1, n)
    V2 = V1 + rng.uniform(0, 1, n) * (rng.random(n) < 0.5)
    V2[rng.integers(n)] += 0.1
    assert potential_monotonicity_check(m, V1, V2)


def test_zero_mode_examples(scalar, sym2):
    assert zero_mode_check(scalar, [2.0], Logistic(3.0, 1.0)).value == pytest.approx(0.0, abs=1e-12)
    pair = principal_eigenpair(sym2)
    assert zero_mode_check(sym2, pair.eigenvector, linear(pair.eigenvalue, 2)).value <= 1e-12
    f = Logistic([3.0, 2.0], [1.0, 1.0], 2)
    u = solve(sym2, f).u
    zm = zero_mode_check(sym2, u, f)
    assert zm.value <= 1e-8
    assert all(g <= 1e-8 for _, g in zm.fixed_point_gaps)


def test_uniqueness_scalar(scalar):
    v = uniqueness_check(scalar, Logistic(3.0, 1.0), [[2.0]])
    assert v.unique and v.branch_gap <= 1e-8
    v = uniqueness_check(scalar, PowerMinusLinear(0.5, 0.0), [[1.0]])
    assert v.unique and v.branch_gap <= 1e-8
    v = uniqueness_check(scalar, Logistic(3.0, 1.0), [[2.0], [2.0]])
    assert v.unique and v.potential_V is not None


def test_uniqueness_rejects_eigenline(sym2):
    pair = principal_eigenpair(sym2)
    f = linear(pair.eigenvalue, 2)
    with pytest.raises(MonotonicityNotStrict):
        uniqueness_check(sym2, f, [pair.eigenvector, 2 * pair.eigenvector])


def test_uniqueness_names_broken_inequality(sym2):
    f = Logistic([3.0, 2.0], [1.0, 1.0], 2)
    u = solve(sym2, f).u
    v = uniqueness_check(sym2, f, [u, 1.5 * u])
    assert not v.unique and v.broken is not None
    assert v.to_json()["broken"] == v.broken


@given(seeds, st.integers(1, 6))
def test_minimal_branch_matches(seed, n):
    m = model_from(seed, n, "general")
    f = random_decreasing_quotient(np.random.default_rng(seed + 1), m)
    u = solve(m, f).u
    u_min = minimal_branch(m, f, u)
    np.testing.assert_allclose(u_min, u, atol=1e-8 * max(1.0, u.max()))


def test_comparison_potential_identity(sym2):
    f = Logistic([3.0, 2.0], [1.0, 1.0], 2)
    u1 = solve(sym2, f).u
    u2 = 0.5 * u1
    V, V0 = comparison_potential(f, u1, u2)
    h1 = f(u1) / u1
    np.testing.assert_allclose(V0, -h1 + V)
    # f(u1) - f(u2) = -V0 (u1 - u2) for a logistic quotient
    np.testing.assert_allclose(f(u1) - f(u2), -V0 * (u1 - u2), atol=1e-12)


def test_strict_decrease():
    check_strict_decrease(Logistic(3.0, 1.0), 0.1, 10)
    with pytest.raises(MonotonicityNotStrict):
        check_strict_decrease(linear(2.0), 0.1, 10)
