from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slipball import polynomial as P


def test_arithmetic_and_evaluation():
    p = P.X * P.X + 2 * P.Y * P.Z - 3
    pts = np.array([[1.0, 2.0, 3.0], [0.5, -1.0, 0.25]])
    np.testing.assert_allclose(p(pts), pts[:, 0] ** 2 + 2 * pts[:, 1] * pts[:, 2] - 3)
    assert (p - p).is_zero()
    assert (P.X**3).degree == 3
    assert Polynomial_terms(P.X.diff(0)) == {(0, 0, 0): Fraction(1)}


def Polynomial_terms(p):
    return p.terms


def test_vector_identities():
    f = P.X * P.Y * P.Z + P.Z**3
    assert P.divergence(P.curl(P.gradient(f))).is_zero()
    assert all(c.is_zero() for c in P.curl(P.gradient(f)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 6).flatmap(lambda l: st.tuples(st.just(l), st.integers(-l, l))))
def test_solid_harmonics_are_harmonic_and_homogeneous(lm):
    l, m = lm
    h = P.solid_harmonic(l, m)
    assert h.laplacian().is_zero()
    assert all(sum(e) == l for e in h.terms)
    assert not h.is_zero()


def test_low_harmonics_closed_form():
    assert P.solid_harmonic(1, 1).terms == P.X.terms
    assert P.solid_harmonic(1, -1).terms == P.Y.terms
    assert P.solid_harmonic(1, 0).terms == P.Z.terms
    # 2 z^2 - x^2 - y^2 up to the normalization (1/2)
    h20 = P.solid_harmonic(2, 0)
    ref = Fraction(1, 2) * (2 * P.Z * P.Z - P.X * P.X - P.Y * P.Y)
    assert (h20 - ref).is_zero()


def test_invalid_harmonic_index():
    with pytest.raises(ValueError):
        P.solid_harmonic(2, 3)


def test_monomial_table_matches_direct_evaluation(rng):
    polys = [P.solid_harmonic(3, 2), P.X * P.Y**2 - P.Z, P.radius_squared() ** 2]
    table = P.MonomialTable(4)
    pts = rng.standard_normal((50, 3))
    got = table.coefficients(polys) @ table.evaluate(pts)
    want = np.array([p(pts) for p in polys])
    np.testing.assert_allclose(got, want, rtol=1e-13, atol=1e-12)
