import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vvflow import assembly as asm
from vvflow.fespaces import Field, Spaces, build_space, interpolate
from vvflow.fieldcalc import error_norms
from vvflow.manufactured import make_manufactured_case, make_nonstd_case
from vvflow.mesh import build_box_mesh
from vvflow.quadrature import tetrahedron_rule
from vvflow.stokes import (NonstdParams, NonstdStokesOperator, StokesOperator, TInput,
                           discrete_divergence, saddle_ordering)

M2 = build_box_mesh(2, 2, 2)
SP2 = Spaces.build(M2)
OP2 = StokesOperator(SP2)
NS2 = NonstdStokesOperator(M2)


def test_tinput_validation():
    with pytest.raises(ValueError, match="nu"):
        TInput(None, None, 0.0, 1.0)
    with pytest.raises(ValueError, match="alpha"):
        TInput(None, None, 1.0, -1.0)


@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 100))
def test_T_is_linear(a, b, seed):
    rng = np.random.default_rng(seed)
    X, W = SP2.X, SP2.W
    g1, g2 = rng.standard_normal(X.size), rng.standard_normal(X.size)
    l1, l2 = rng.standard_normal(W.size), rng.standard_normal(W.size)
    s1 = OP2.solve_T(TInput(g1, l1, 0.5, 1.0))
    s2 = OP2.solve_T(TInput(g2, l2, 0.5, 1.0))
    s = OP2.solve_T(TInput(a * g1 + b * g2, a * l1 + b * l2, 0.5, 1.0))
    for name in ("u", "P", "w", "eta"):
        lhs = getattr(s, name).coefficients
        rhs = a * getattr(s1, name).coefficients + b * getattr(s2, name).coefficients
        assert np.allclose(lhs, rhs, atol=1e-10 * (1 + np.abs(rhs).max()))


def test_velocity_solve_is_discretely_divergence_free_with_zero_mean_pressure(rng):
    g = rng.standard_normal(SP2.X.size)
    u, P = OP2.solve_velocity(g, 1.0, 1.0)
    assert np.abs(OP2.B_X @ u.free_values).max() < 1e-12
    assert abs(SP2.Q.mean_vector() @ P.coefficients) < 1e-12
    assert OP2.reports == [] or OP2.reports[-1].residual < 1e-10


def test_stokes_velocity_converges_on_manufactured_solution():
    case = make_manufactured_case(0.5, 1.0)
    # the Stokes part: g = alpha u - nu Lap u + grad P
    g = lambda x: case.alpha * case.u(x) - case.nu * case.lap_u(x) + case.P.grad(x)
    errs = []
    for n in (2, 4):
        m = build_box_mesh(n, n, n)
        u, P = StokesOperator(Spaces.build(m)).solve_velocity(g, case.nu, case.alpha)
        errs.append(error_norms(u, case.u).h1_semi)
    assert math.log(errs[0] / errs[1], 2) > 1.8


def test_saddle_ordering_is_permutation():
    K = NS2.matrix(NonstdParams(None, 1.0, 1.0))
    p = NS2.ordering(K)
    assert sorted(p.tolist()) == list(range(K.shape[0]))
    X = SP2.X
    q = saddle_ordering(None, [(X, X.free)], [], 2)
    assert sorted(q.tolist()) == list(range(X.n_dofs + 2))


def test_nonstd_energy_identity_and_constraints():
    case = make_nonstd_case(0.5, 1.0)
    sol = NS2.solve(NonstdParams(None, 0.5, 1.0), case.g)
    r = NS2.rule
    wq = asm.quadrature_weights(M2, r)
    uq, ru = sol.u.values(r), sol.u.rot(r)
    gq = asm.values_at_quadrature(case.g, M2, r, 3)
    lhs = 1.0 * np.einsum("cq,cqm,cqm->", wq, uq, uq) + 0.5 * np.einsum("cq,cqm,cqm->", wq, ru, ru)
    rhs = np.einsum("cq,cqm,cqm->", wq, gq, uq)
    assert lhs == pytest.approx(rhs, rel=1e-10)
    # (u, grad r) = 0 for every scalar P2 r
    Gr = asm.gradient_operator(NS2.R, r)
    assert np.abs(Gr.T @ (NS2.Wd @ uq.ravel())).max() < 1e-12
    assert sol.report.residual < 1e-10
    assert abs(NS2.Q.mean_vector() @ sol.p.coefficients) < 1e-12


def test_nonstd_converges():
    case = make_nonstd_case(1.0, 1.0)
    errs = []
    for n in (2, 4):
        m = build_box_mesh(n, n, n)
        errs.append(error_norms(NonstdStokesOperator(m).solve(NonstdParams(None, 1.0, 1.0), case.g).u,
                                case.u).l2)
    assert errs[1] < errs[0] / 3


def test_nonstd_smallness_warning_and_divergence_check():
    a = interpolate(build_space(M2, 2, 3, "zero-normal-trace"),
                    lambda x: np.stack([np.sin(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 1]),
                                        -np.cos(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]),
                                        0 * x[:, 0]], 1))
    assert discrete_divergence(a, NS2.Q) < 0.5
    bad = interpolate(build_space(M2, 2, 3), lambda x: x.copy())
    with pytest.raises(ValueError, match="divergence"):
        NS2.check_a(bad)
    with pytest.warns(RuntimeWarning, match="smallness"):
        rep = NS2.smallness(NonstdParams(a, 1.0, 1.0, c_star=1e-9))
    assert not rep["satisfied"] and rep["grad_a"] > rep["threshold"]
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert NS2.smallness(NonstdParams(None, 1.0, 1.0))["satisfied"]


def test_nonstd_params_validation():
    with pytest.raises(ValueError):
        NonstdParams(None, -1.0, 0.0)
    with pytest.raises(ValueError):
        NonstdParams(None, 1.0, -0.5)
