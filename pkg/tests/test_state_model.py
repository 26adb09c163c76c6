import numpy as np
import pytest
from hypothesis import given, strategies as st

from semilinear.errors import AlphaNotAboveSpectralBound, NegativeOffDiagonal, NotIrreducible
from semilinear.state_model import (
    MeasureSpace,
    adjoint,
    adjoint_matrix,
    resolvent,
    resolvent_apply,
    semigroup,
    shift_to_negative_bound,
    validate_generator,
)

from conftest import model_from, seeds, sizes


def test_symmetric_two_state_flags(sym2):
    assert sym2.sub_markovian and sym2.irreducible
    assert sym2.spectral_bound == pytest.approx(-1.0, abs=1e-12)


def test_single_absorbing_state():
    m = validate_generator([[0.0]])
    assert m.sub_markovian and m.irreducible
    assert m.spectral_bound == 0.0


def test_disconnected_is_rejected():
    with pytest.raises(NotIrreducible):
        validate_generator([[-1.0, 0.0], [0.0, -1.0]])


def test_disconnected_degraded_mode():
    m = validate_generator([[-1.0, 0.0], [0.0, -1.0]], allow_reducible=True)
    assert not m.irreducible


def test_negative_off_diagonal_location():
    with pytest.raises(NegativeOffDiagonal) as exc:
        validate_generator([[-1.0, 0.5], [-0.25, -1.0]])
    assert (exc.value.i, exc.value.j) == (1, 0)


def test_tiny_entries_do_not_connect():
    with pytest.raises(NotIrreducible):
        validate_generator([[-1.0, 1e-15], [1e-15, -1.0]])


def test_measure_space_validation():
    with pytest.raises(ValueError):
        MeasureSpace(2, np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        MeasureSpace(0, np.array([]))
    with pytest.raises(ValueError):
        MeasureSpace(1, np.array([1.0]), p=0.5)


def test_resolvent_examples(sym2, scalar):
    np.testing.assert_allclose(resolvent(sym2, 0.0), np.array([[2, 1], [1, 2]]) / 3, atol=1e-14)
    np.testing.assert_allclose(resolvent(scalar, 0.0), [[1.0]])
    with pytest.raises(AlphaNotAboveSpectralBound):
        resolvent(sym2, -1.0)


def test_semigroup_examples(sym2, scalar):
    np.testing.assert_allclose(semigroup(sym2, 0.0), np.eye(2), atol=1e-15)
    np.testing.assert_allclose(semigroup(scalar, 1.0), [[np.exp(-1)]], rtol=1e-14)
    a, b = np.exp(-1), np.exp(-3)
    expected = 0.5 * np.array([[a + b, a - b], [a - b, a + b]])
    for method in ("pade", "uniformization"):
        np.testing.assert_allclose(semigroup(sym2, 1.0, method=method), expected, rtol=1e-12)
    with pytest.raises(ValueError):
        semigroup(sym2, -1.0)


def test_adjoint_examples():
    L = [[-3.0, 1.0], [2.0, -3.0]]
    np.testing.assert_allclose(adjoint_matrix(L, [1, 1]), [[-3, 2], [1, -3]])
    np.testing.assert_allclose(adjoint_matrix(L, [1, 2]), [[-3, 4], [0.5, -3]])
    sym = validate_generator([[-2.0, 1.0], [1.0, -2.0]])
    np.testing.assert_allclose(adjoint(sym), sym.L)


def test_shift_examples(sym2):
    assert shift_to_negative_bound(sym2, 0.5).kappa == 0.0
    absorbing = shift_to_negative_bound(validate_generator([[0.0]]), 1.0)
    assert absorbing.kappa == 1.0
    np.testing.assert_allclose(absorbing.shifted_L, [[-1.0]])
    m = validate_generator([[-0.2]])
    sh = shift_to_negative_bound(m, 0.5)
    assert sh.kappa == pytest.approx(0.3)
    assert sh.model.spectral_bound == pytest.approx(-0.5)


@given(seeds, sizes, st.sampled_from(["sub", "general", "conservative"]))
def test_spectral_bound_matches_dense_eigensolver(seed, n, kind):
    m = model_from(seed, n, kind)
    dense = float(np.max(np.linalg.eigvals(np.asarray(m.L)).real))
    assert m.spectral_bound == pytest.approx(dense, abs=1e-9 * max(1.0, abs(dense)))
    assert m.perron_vector.min() > 0


@given(seeds, sizes)
def test_positivity_improving(seed, n):
    m = model_from(seed, n, "general")
    rng = np.random.default_rng(seed)
    g = np.zeros(n)
    g[rng.integers(n)] = rng.uniform(0.1, 1.0)
    alpha = m.spectral_bound + rng.uniform(0.01, 3.0)
    assert resolvent_apply(m, g, alpha).min() > 0


@given(seeds, sizes)
def test_resolvent_identity(seed, n):
    m = model_from(seed, n, "general")
    rng = np.random.default_rng(seed)
    a, b = m.spectral_bound + rng.uniform(0.1, 3.0, 2)
    Ra, Rb = resolvent(m, a), resolvent(m, b)
    scale = max(np.abs(Ra).max(), np.abs(Rb).max())
    np.testing.assert_allclose(Ra - Rb, (b - a) * Ra @ Rb, atol=1e-10 * scale)


def test_laplace_transform_consistency():
    from scipy.integrate import quad_vec

    m = model_from(3, 5, "sub")
    g = np.linspace(0.5, 1.5, 5)
    alpha = 2.0
    T = 30.0 / (alpha - m.spectral_bound)
    integral, _ = quad_vec(lambda t: np.exp(-alpha * t) * (semigroup(m, t) @ g), 0.0, T, epsabs=1e-12)
    np.testing.assert_allclose(integral, resolvent_apply(m, g, alpha), rtol=1e-4)


@given(seeds, sizes)
def test_adjoint_pairing(seed, n):
    m = model_from(seed, n, "general", weights=True)
    rng = np.random.default_rng(seed + 1)
    u, v = rng.normal(size=n), rng.normal(size=n)
    Ls = adjoint(m)
    lhs = m.space.pairing(np.asarray(m.L) @ u, v)
    rhs = m.space.pairing(u, Ls @ v)
    assert lhs == pytest.approx(rhs, abs=1e-12 * max(1.0, abs(lhs)))
    np.testing.assert_allclose(adjoint_matrix(Ls, m.space.weights), m.L, atol=1e-14)


@given(seeds, sizes, st.floats(0.0, 5.0))
def test_semigroup_sub_markovian_and_law(seed, n, t):
    m = model_from(seed, n, "sub")
    P = semigroup(m, t)
    assert P.min() >= 0
    assert P.sum(axis=1).max() <= 1 + 1e-12
    np.testing.assert_allclose(semigroup(m, 2 * t), P @ P, atol=1e-10)
    np.testing.assert_allclose(semigroup(m, t, "uniformization"), semigroup(m, t, "pade"), atol=1e-10)
