import numpy as np
import pytest
import scipy.sparse as sp

from vvflow import assembly as asm
from vvflow.fespaces import build_space, interpolate
from vvflow.linalg import read_matrix
from vvflow.mesh import build_box_mesh
from vvflow.quadrature import tetrahedron_rule

M1 = build_box_mesh(1, 1, 1)
M2 = build_box_mesh(2, 2, 2)
R4 = tetrahedron_rule(4)


def dense_p1(m):
    """Hand-assembled P1 mass and stiffness: M_ij = V (1 + d_ij) / 20, K_ij = V grad l_i . grad l_j."""
    n = m.n_vertices
    M, K = np.zeros((n, n)), np.zeros((n, n))
    for c in m.cells:
        X = m.vertices[c]
        J = (X[1:] - X[0]).T
        V = abs(np.linalg.det(J)) / 6
        G = np.linalg.inv(J).T @ np.array([[-1, 1, 0, 0], [-1, 0, 1, 0], [-1, 0, 0, 1]])
        M[np.ix_(c, c)] += V * (np.ones((4, 4)) + np.eye(4)) / 20
        K[np.ix_(c, c)] += V * G.T @ G
    return M, K


@pytest.mark.parametrize("m", [M1, M2], ids=["n1", "n2"])
def test_p1_matrices_match_dense_oracle(m):
    S = build_space(m, 1, 1)
    Md, Kd = dense_p1(m)
    # P1 nodes are the mesh vertices in the same order
    assert np.allclose(S.node_coords, m.vertices)
    assert np.allclose(asm.assemble_mass(S, R4).toarray(), Md, atol=1e-15)
    assert np.allclose(asm.assemble_gradgrad(S, R4).toarray(), Kd, atol=1e-14)


def test_p2_forms_on_polynomials():
    S = build_space(M2, 2, 1)
    u = interpolate(S, lambda x: x[:, 0] ** 2).coefficients
    v = interpolate(S, lambda x: x[:, 0] * x[:, 1]).coefficients
    one = np.ones(S.size)
    M = asm.assemble_mass(S, R4)
    K = asm.assemble_gradgrad(S, R4)
    assert one @ M @ one == pytest.approx(1.0)
    assert u @ M @ v == pytest.approx(1 / 8)  # int x^3 y
    assert u @ K @ v == pytest.approx(1 / 2)  # int 2x * y
    assert np.allclose(K @ one, 0, atol=1e-13)
    for A in (M, K):
        assert abs(A - A.T).max() < 1e-14


def test_vector_identity_rotrot_divdiv_equals_gradgrad_for_zero_trace():
    X = build_space(M2, 2, 3, "zero-trace")
    f = X.free
    A = asm.assemble_rotrot(X, R4) + asm.assemble_divdiv(X, R4)
    G = asm.assemble_gradgrad(X, R4)
    assert abs((A - G)[f][:, f]).max() < 1e-12


def test_cross_matrix_skew_and_rhs_consistent(rng):
    X = build_space(M2, 2, 3, "zero-trace")
    W = build_space(M2, 2, 3, "zero-normal-trace")
    w = interpolate(W, lambda x: np.stack([np.sin(x[:, 1]), x[:, 0] * x[:, 2], np.cos(x[:, 0])], 1))
    C = asm.assemble_cross(w, X, R4)
    u = rng.standard_normal(X.size)
    assert abs(u @ C @ u) < 1e-12 * np.linalg.norm(u) ** 2
    uf = interpolate(X, lambda x: np.stack([x[:, 1] * x[:, 2], x[:, 0], x[:, 2] ** 2], 1))
    assert np.allclose(C @ uf.coefficients, asm.cross_rhs(w, uf, X, R4), atol=1e-13)


def test_rhs_of_constant_and_div_pressure():
    S = build_space(M2, 2, 3)
    b = asm.assemble_rhs(S, lambda x: np.tile([1.0, 2.0, 3.0], (len(x), 1)), R4)
    nn = S.n_nodes
    assert np.allclose([b[:nn].sum(), b[nn:2 * nn].sum(), b[2 * nn:].sum()], [1, 2, 3])
    X = build_space(M2, 2, 3, "zero-trace")
    Q = build_space(M2, 1, 1, "zero-mean-multiplier")
    B = asm.assemble_div_pressure(X, Q, R4)
    # (div u, 1) = 0 for u with zero trace
    u = interpolate(X, lambda x: np.stack([x[:, 0] * (1 - x[:, 0]), x[:, 1], x[:, 2]], 1))
    assert np.ones(Q.size) @ (B @ u.coefficients) == pytest.approx(0, abs=1e-14)


def test_export_matrix_roundtrip(tmp_path):
    A = asm.assemble_mass(build_space(M1, 2, 1), R4)
    p = tmp_path / "m.mtx"
    asm.export_matrix(p, A)
    B = read_matrix(p)
    assert abs(A - B).max() < 1e-15
    assert sp.issparse(B)
