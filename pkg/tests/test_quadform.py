import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from convoylab.quadform import CombinedQuadratic, QuadFormError, QuadraticTerm, combine
from oracles import random_psd, random_triple


def test_zero_references():
    c = combine([QuadraticTerm(np.eye(2), np.zeros(2))] * 3)
    np.testing.assert_array_equal(c.Q_T, 3 * np.eye(2))
    np.testing.assert_array_equal(c.y_T, np.zeros(2))
    assert c.Z_T == 0.0


def test_single_term_identity():
    Q = np.array([[2.0, 0.5], [0.5, 1.0]])
    x = np.array([1.5, -2.0])
    c = combine([QuadraticTerm(Q, x)])
    np.testing.assert_allclose(c.y_T, Q @ x)
    assert c.Z_T == pytest.approx(x @ Q @ x)
    np.testing.assert_allclose(c.center, x, atol=1e-12)


def test_midpoint_center():
    c = combine([QuadraticTerm(np.eye(2), [0.0, 0.0]), QuadraticTerm(np.eye(2), [2.0, 0.0])])
    np.testing.assert_allclose(c.center, [1.0, 0.0], atol=1e-15)


def test_evaluate_at_center_and_origin():
    rng = np.random.default_rng(1)
    c = combine(random_triple(rng))
    expected = c.Z_T - c.y_T @ np.linalg.solve(c.Q_T, c.y_T)
    assert c.evaluate(c.center) == pytest.approx(expected, rel=1e-9, abs=1e-9)
    assert c.remainder == pytest.approx(expected, rel=1e-9, abs=1e-9)
    assert c.evaluate(np.zeros(4)) == c.Z_T


def test_random_triples_match_direct_sum():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        terms = random_triple(rng)
        c = combine(terms)
        for x in rng.normal(scale=10.0, size=(20, 4)):
            direct = sum(t.evaluate(x) for t in terms)
            assert c.evaluate(x) == pytest.approx(direct, rel=1e-9)
        grad = 2 * c.Q_T @ c.center - 2 * c.y_T
        assert np.max(np.abs(grad)) < 1e-9 * max(1.0, np.max(np.abs(c.y_T)))


def test_order_invariance():
    rng = np.random.default_rng(5)
    terms = random_triple(rng)
    ref = combine(terms)
    for perm in itertools.permutations(terms):
        c = combine(perm)
        np.testing.assert_allclose(c.Q_T, ref.Q_T, atol=1e-12)
        np.testing.assert_allclose(c.y_T, ref.y_T, atol=1e-12)
        assert c.Z_T == pytest.approx(ref.Z_T, abs=1e-12 * abs(ref.Z_T) + 1e-12)


def test_combined_is_symmetric_pd():
    rng = np.random.default_rng(9)
    c = combine(random_triple(rng))
    assert np.max(np.abs(c.Q_T - c.Q_T.T)) <= 1e-12
    np.linalg.cholesky(c.Q_T)


def test_dimension_mismatch():
    with pytest.raises(QuadFormError):
        combine([QuadraticTerm(np.eye(2), [0, 0]), QuadraticTerm(np.eye(3), [0, 0, 0])])
    with pytest.raises(QuadFormError):
        QuadraticTerm(np.eye(2), [0, 0, 0])
    c = combine([QuadraticTerm(np.eye(2), [0, 0])])
    with pytest.raises(QuadFormError):
        c.evaluate([1.0, 2.0, 3.0])


def test_singular_sum_named():
    terms = [QuadraticTerm(np.diag([1.0, 0.0]), [0, 0]), QuadraticTerm(np.diag([2.0, 0.0]), [1, 1])]
    with pytest.raises(QuadFormError, match="not positive definite"):
        combine(terms)


def test_asymmetric_and_indefinite_rejected():
    with pytest.raises(QuadFormError):
        QuadraticTerm(np.array([[1.0, 2.0], [0.0, 1.0]]), [0, 0])
    with pytest.raises(QuadFormError):
        combine([QuadraticTerm(np.diag([1.0, -1.0]), [0, 0]), QuadraticTerm(np.eye(2) * 5, [0, 0])])


def test_addition_matches_combining_all():
    rng = np.random.default_rng(11)
    t = random_triple(rng)
    a = combine(t[:2]) + combine(t[2:])
    b = combine(t)
    np.testing.assert_allclose(a.Q_T, b.Q_T)
    np.testing.assert_allclose(a.center, b.center)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
def test_center_minimizes(seed, n_terms):
    rng = np.random.default_rng(seed)
    terms = [QuadraticTerm(random_psd(rng, 3), rng.normal(size=3)) for _ in range(n_terms)]
    c = combine(terms)
    base = c.evaluate(c.center)
    for d in rng.normal(size=(5, 3)):
        assert c.evaluate(c.center + 1e-3 * d) >= base - 1e-9 * max(1.0, abs(base))
