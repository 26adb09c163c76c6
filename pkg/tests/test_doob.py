import dataclasses
import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, strategies as st

from semilinear.doob import conjugate, doob_transform, pull_back_solution, transform_nonlinearity
from semilinear.errors import PositiveSpectralBound, ResidualTooLarge
from semilinear.nonlinearity import Logistic, PowerMinusLinear
from semilinear.solver import solve
from semilinear.state_model import MeasureSpace, shift_to_negative_bound, validate_generator

from conftest import model_from, seeds, sizes


def test_constant_eigenfunction(sym2):
    dt = doob_transform(sym2)
    np.testing.assert_allclose(dt.transformed.L, sym2.L, atol=1e-12)


def test_two_state_example():
    m = validate_generator([[-3.0, 1.0], [2.0, -3.0]])
    dt = doob_transform(m)
    phi = dt.phi1.eigenvector / dt.phi1.eigenvector[0]
    np.testing.assert_allclose(phi, [1.0, math.sqrt(2)], atol=1e-12)
    r2 = math.sqrt(2)
    np.testing.assert_allclose(dt.transformed.L, [[-3.0, r2], [r2, -3.0]], atol=1e-12)
    np.testing.assert_allclose(dt.transformed.row_sums, -3 + r2, atol=1e-12)
    # measure phi^p m with phi normalized to phi_0 = 1
    dt1 = doob_transform(m, dataclasses.replace(dt.phi1, eigenvector=phi))
    np.testing.assert_allclose(dt1.transformed_measure, [1.0, 2.0], atol=1e-12)


def test_positive_bound_rejected():
    with pytest.raises(PositiveSpectralBound):
        doob_transform(validate_generator([[-1.0, 2.0], [2.0, -1.0]]))


def test_transform_nonlinearity_examples():
    f = PowerMinusLinear(2.0, 0.0)  # y^2
    g = transform_nonlinearity(f, np.array([2.0]))
    assert float(g(np.array([3.0]))[0]) == pytest.approx(18.0)
    same = transform_nonlinearity(Logistic(3.0, 1.0), np.array([1.0]))
    y = np.linspace(0, 5, 11)
    np.testing.assert_allclose(same(y[None, :]), Logistic(3.0, 1.0)(y[None, :]))
    np.testing.assert_allclose(pull_back_solution([1.0, 2.0], np.ones(2)), [1.0, 2.0])


@given(seeds, sizes, st.sampled_from(["sub", "general", "non_sub"]))
def test_row_sums_and_spectrum(seed, n, kind):
    m = shift_to_negative_bound(model_from(seed, n, kind, weights=True)).model
    dt = doob_transform(m)
    s = m.spectral_bound
    np.testing.assert_allclose(dt.transformed.row_sums, s, atol=1e-10 * max(1, np.abs(m.L).max()))
    assert dt.transformed.irreducible
    assert dt.transformed.spectral_bound == pytest.approx(s, abs=1e-9 * max(1, abs(s)))
    ev_a = np.sort(np.linalg.eigvals(m.L).real)
    ev_b = np.sort(np.linalg.eigvals(dt.transformed.L).real)
    np.testing.assert_allclose(ev_a, ev_b, atol=1e-8 * max(1, np.abs(m.L).max()))
    np.testing.assert_allclose(dt.transformed_measure, m.space.weights * dt.phi1.eigenvector**m.space.p)


@given(seeds, st.integers(1, 6), st.floats(0.01, 3.0))
def test_semigroup_conjugation(seed, n, t):
    m = shift_to_negative_bound(model_from(seed, n, "general")).model
    dt = doob_transform(m)
    phi = dt.phi1.eigenvector
    lhs = scipy.linalg.expm(t * np.asarray(dt.transformed.L))
    rhs = scipy.linalg.expm(t * np.asarray(m.L)) * phi[None, :] / phi[:, None]
    np.testing.assert_allclose(lhs, rhs, atol=1e-10, rtol=1e-8)
    np.testing.assert_allclose(conjugate(m.L, phi), dt.transformed.L)


@given(seeds, st.integers(1, 5))
def test_pull_back_checks_residual(seed, n):
    m = model_from(seed, n, "non_sub")
    f = Logistic(np.full(n, 1.0 + max(0.0, -m.spectral_bound)), np.ones(n), n)
    rep = solve(m, f, doob="always")
    assert rep.doob
    pull_back_solution(rep.u / rep.u, rep.u, m, f)
    with pytest.raises(ResidualTooLarge):
        pull_back_solution(2 * rep.u / rep.u, rep.u, m, f)
