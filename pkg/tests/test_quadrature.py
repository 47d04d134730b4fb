import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vvflow.quadrature import tetrahedron_rule, triangle_rule


def tet_monomial(a, b, c):
    # integral of x^a y^b z^c over the unit tetrahedron
    return math.factorial(a) * math.factorial(b) * math.factorial(c) / math.factorial(a + b + c + 3)


def tri_monomial(a, b):
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


@pytest.mark.parametrize("degree", [0, 1, 2, 4, 6, 8])
def test_weights_positive_and_sum_to_volume(degree):
    r = tetrahedron_rule(degree)
    assert np.all(r.weights > 0)
    assert r.weights.sum() == pytest.approx(1 / 6, rel=1e-14)
    assert np.allclose(r.points.sum(axis=1), 1.0)
    assert np.all(r.points >= 0)
    assert r.degree >= degree


@given(st.sampled_from([2, 4, 6]), st.integers(0, 6), st.integers(0, 6), st.integers(0, 6))
def test_tetrahedron_exact_on_monomials(degree, a, b, c):
    if a + b + c > degree:
        return
    r = tetrahedron_rule(degree)
    x, y, z = r.points[:, 1], r.points[:, 2], r.points[:, 3]
    assert r.weights @ (x**a * y**b * z**c) == pytest.approx(tet_monomial(a, b, c), rel=1e-12)


@given(st.sampled_from([2, 4, 6]), st.integers(0, 6), st.integers(0, 6))
def test_triangle_exact_on_monomials(degree, a, b):
    if a + b > degree:
        return
    r = triangle_rule(degree)
    x, y = r.points[:, 1], r.points[:, 2]
    assert r.weights @ (x**a * y**b) == pytest.approx(tri_monomial(a, b), rel=1e-12)


def test_negative_degree_rejected():
    with pytest.raises(ValueError):
        tetrahedron_rule(-1)
