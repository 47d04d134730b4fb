import numpy as np
import pytest
from hypothesis import given, strategies as st

from vvflow.fespaces import (AnalyticField, CompositeField, Field, Spaces, State, build_space,
                             interpolate)
from vvflow.mesh import build_box_mesh
from vvflow.quadrature import tetrahedron_rule

M2 = build_box_mesh(2, 2, 2)
coef = st.floats(-2, 2)


def quadratic(c):
    def f(x):
        return (c[0] + c[1] * x[:, 0] + c[2] * x[:, 1] + c[3] * x[:, 2] + c[4] * x[:, 0] * x[:, 1]
                + c[5] * x[:, 2] ** 2 + c[6] * x[:, 1] * x[:, 2])
    return f


@given(st.lists(coef, min_size=7, max_size=7),
       st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=10))
def test_p2_reproduces_quadratics(c, pts):
    f = quadratic(c)
    u = interpolate(build_space(M2, 2, 1), f)
    p = np.array(pts)
    assert np.allclose(u.evaluate(p), f(p), atol=1e-12)


@given(st.lists(coef, min_size=4, max_size=4))
def test_p1_reproduces_linears_and_gradients(c):
    f = lambda x: c[0] + c[1] * x[:, 0] + c[2] * x[:, 1] + c[3] * x[:, 2]
    u = interpolate(build_space(M2, 1, 1), f)
    g = u.gradients(tetrahedron_rule(2))[:, :, 0, :]
    assert np.allclose(g, np.array(c[1:]), atol=1e-12)


def test_dof_counts_and_constraints():
    m = build_box_mesh(2, 2, 2)
    nn = 5**3
    assert build_space(m, 2, 1).n_nodes == nn
    assert build_space(m, 1, 1).n_nodes == 27
    X = build_space(m, 2, 3, "zero-trace")
    assert X.n_dofs == 3 * 27  # interior nodes of the 5^3 lattice
    W = build_space(m, 2, 3, "zero-normal-trace")
    # each component is free except on the two faces orthogonal to it
    assert W.n_dofs == 3 * 3 * 5 * 5
    T = build_space(m, 2, 3, "zero-tangential-trace")
    assert T.n_dofs == 3 * 5 * 3 * 3
    B = build_space(m, 2, 1, "boundary-supported")
    assert B.n_dofs == nn - 27
    with pytest.raises(ValueError):
        build_space(m, 3, 1)
    with pytest.raises(ValueError):
        build_space(m, 2, 1, "zero-normal-trace")


def test_zero_normal_trace_on_faces():
    W = build_space(M2, 2, 3, "zero-normal-trace")
    f = interpolate(W, lambda x: np.ones((len(x), 3)))
    x = W.node_coords
    vals = f.nodal()
    for axis in range(3):
        on = np.isclose(x[:, axis], 0) | np.isclose(x[:, axis], 1)
        assert np.all(vals[on, axis] == 0)


def test_field_arithmetic_and_state():
    X = build_space(M2, 2, 3, "zero-trace")
    a = Field(X, np.arange(X.size, dtype=float))
    b = a * 2.0
    assert np.allclose((b - a).coefficients, a.coefficients)
    assert np.allclose((-a + a).coefficients, 0)
    with pytest.raises(ValueError):
        Field(X, np.zeros(3))
    s = Spaces.build(M2).zero_state()
    t = s.combine(s, 0.5)
    assert isinstance(t, State) and t.mesh is M2


def test_composite_field_values_match_pieces():
    V = build_space(M2, 2, 3)
    S = build_space(M2, 2, 1)
    v = interpolate(V, lambda x: np.stack([x[:, 1], x[:, 2] ** 2, x[:, 0]], 1))
    s = interpolate(S, lambda x: x[:, 0] * x[:, 1])
    c = CompositeField(M2, [(v, "value", 1.0), (s, "grad", -2.0)])
    p = np.array([[0.3, 0.4, 0.7], [0.9, 0.1, 0.2]])
    expect = v.evaluate(p) - 2 * np.stack([p[:, 1], p[:, 0], 0 * p[:, 0]], 1)
    assert np.allclose(c.evaluate(p), expect)
    r = tetrahedron_rule(4)
    assert np.allclose(c.values(r), v.values(r) - 2 * s.gradients(r)[:, :, 0, :])
    with pytest.raises(ValueError):
        CompositeField(M2, [(v, "grad", 1.0)])


def test_analytic_field_call():
    f = AnalyticField(lambda x: x * 2, None, 3)
    assert f(np.array([1.0, 2.0, 3.0])).shape == (1, 3)
