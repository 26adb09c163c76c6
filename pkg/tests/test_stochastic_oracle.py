import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings, strategies as st

from semilinear.errors import NotSubMarkovian
from semilinear.extended import PLUS_INF
from semilinear.feynman_kac import perturb, perturbed_semigroup
from semilinear.state_model import resolvent_apply, semigroup, validate_generator
from semilinear.stochastic_oracle import (
    CEMETERY,
    estimate_feynman_kac,
    estimate_resolvent_apply,
    sample_path,
    stream,
    supermartingale_probe,
)

from conftest import model_from, seeds


def test_lifetime_exponential(scalar):
    n = 100_000
    life = np.array([float(sample_path(scalar, 0, 1e9, 11, i).lifetime) for i in range(n)])
    se = life.std(ddof=1) / math.sqrt(n)
    assert abs(life.mean() - 1.0) <= 3 * se
    assert scipy.stats.kstest(life[:5000], "expon").pvalue > 1e-3


def test_conservative_never_killed():
    m = validate_generator([[-1.0, 1.0], [2.0, -2.0]])
    for i in range(200):
        path = sample_path(m, 0, 5.0, 3, i)
        assert not path.killed and path.lifetime == PLUS_INF


def test_absorbing_state():
    m = validate_generator([[0.0]])
    path = sample_path(m, 0, 10.0, 0)
    assert path.states == (0,) and path.jump_times == () and path.lifetime == PLUS_INF


@settings(max_examples=10)
@given(seeds, st.integers(1, 6))
def test_path_invariants(seed, n):
    m = model_from(seed, n, "sub")
    for i in range(20):
        path = sample_path(m, 0, 10.0, seed, i)
        assert len(path.states) == len(path.jump_times) + 1
        assert np.all(np.diff(path.jump_times) > 0)
        assert all(t < path.horizon for t in path.jump_times)
        if path.killed:
            assert path.states[-1] == CEMETERY
            assert float(path.lifetime) == path.jump_times[-1]
        else:
            assert CEMETERY not in path.states


def test_path_determinism(sym2):
    assert sample_path(sym2, 0, 5.0, 9, 4) == sample_path(sym2, 0, 5.0, 9, 4)
    assert stream(1, 2).random() == stream(1, 2).random()
    assert stream(1, 2).random() != stream(1, 3).random()


def test_resolvent_examples(scalar, sym2):
    est = estimate_resolvent_apply(scalar, [1.0], 0.0, 0, 100_000, 5)
    assert est.within(1.0) and est.batches >= 30
    zero = estimate_resolvent_apply(sym2, [0.0, 0.0], 0.0, 0, 1000, 5)
    assert zero.value == 0.0 and zero.std_error == 0.0
    est = estimate_resolvent_apply(sym2, [3.0, 3.0], 0.0, 1, 100_000, 6)
    assert est.within(3.0)
    est = estimate_resolvent_apply(sym2, [1.0, 2.0], 2.0, 0, 100_000, 7)
    assert est.within(resolvent_apply(sym2, [1.0, 2.0], 2.0)[0])


def test_estimator_determinism(sym2):
    a = estimate_resolvent_apply(sym2, [1.0, 2.0], 0.5, 0, 4000, 21)
    b = estimate_resolvent_apply(sym2, [1.0, 2.0], 0.5, 0, 4000, 21)
    c = estimate_resolvent_apply(sym2, [1.0, 2.0], 0.5, 0, 4000, 22)
    assert a == b and a.value != c.value


def test_feynman_kac_examples(scalar, sym2):
    est = estimate_feynman_kac(scalar, [1.0], [1.0], 1.0, 0, 100_000, 8)
    assert est.within(math.exp(-2.0))
    est = estimate_feynman_kac(sym2, [0.0, 0.0], [1.0, 2.0], 0.8, 0, 100_000, 9)
    assert est.within((semigroup(sym2, 0.8) @ [1.0, 2.0])[0])


def test_feynman_kac_random():
    rng = np.random.default_rng(4)
    m = model_from(4, 5, "sub")
    V, g = rng.uniform(0, 2, 5), rng.uniform(0, 1, 5)
    est = estimate_feynman_kac(m, V, g, 0.7, 2, 100_000, 10)
    assert est.within((perturbed_semigroup(perturb(m, V), 0.7) @ g)[2])


def test_requires_sub_markovian():
    m = validate_generator([[-1.0, 2.0], [1.0, -0.5]])
    for call in (
        lambda: sample_path(m, 0, 1.0, 0),
        lambda: estimate_resolvent_apply(m, [1, 1], 5.0, 0, 100, 0),
        lambda: estimate_feynman_kac(m, [0, 0], [1, 1], 1.0, 0, 100, 0),
        lambda: supermartingale_probe(m, [1, 1], [0, 1], 0, 100, 0),
    ):
        with pytest.raises(NotSubMarkovian):
            call()


def test_probe_flat_on_conservative():
    m = validate_generator([[-1.0, 1.0], [2.0, -2.0]])
    probe = supermartingale_probe(m, [1.0, 1.0], [0.0, 1.0, 2.0], 0, 5000, 1)
    np.testing.assert_allclose(probe.estimates, 1.0)
    assert probe.passed


def test_probe_decays(sym2):
    ts = [0.0, 0.5, 1.0, 2.0]
    probe = supermartingale_probe(sym2, [1.0, 1.0], ts, 0, 50_000, 2)
    assert probe.passed
    assert np.all(np.abs(probe.estimates - np.exp(-np.array(ts))) <= 3 * probe.std_errors + 1e-12)
    probe = supermartingale_probe(sym2, [3.0, 3.0], ts, 1, 50_000, 3)
    assert probe.passed and probe.estimates[-1] < probe.estimates[0]
    assert probe.as_list()[0] == (0.0, pytest.approx(3.0))


def test_probe_detects_growth():
    # v not supermedian: mass flows towards the larger value
    m = validate_generator([[-1.0, 1.0], [0.0, -0.01]], allow_reducible=True)
    probe = supermartingale_probe(m, [0.0, 5.0], [0.0, 1.0, 2.0], 0, 20_000, 4)
    assert not probe.passed
