"""Manufactured fields checked against independent symbolic derivations."""
import numpy as np
import pytest
import sympy as sy

from vvflow.manufactured import make_manufactured_case, make_nonstd_case, solenoidal_probe

x, y, z = sy.symbols("x y z")
X = (x, y, z)


def curl(F):
    return [sy.diff(F[2], y) - sy.diff(F[1], z), sy.diff(F[0], z) - sy.diff(F[2], x),
            sy.diff(F[1], x) - sy.diff(F[0], y)]


def grad(s):
    return [sy.diff(s, v) for v in X]


def lam(expr):
    """Numpy callable of a scalar or a list of three sympy expressions."""
    if isinstance(expr, list):
        comps = [lam(e) for e in expr]
        return lambda p: np.stack([c(p) for c in comps], axis=1)
    fn = sy.lambdify(X, expr, "numpy")
    return lambda p: np.broadcast_to(np.asarray(fn(p[:, 0], p[:, 1], p[:, 2]), dtype=float), (len(p),))


@pytest.fixture(scope="module")
def pts():
    return np.random.default_rng(5).uniform(size=(25, 3))


def test_coupled_case_matches_symbolic(pts):
    nu, alpha = 0.3, 1.7
    phi = (x * (1 - x)) ** 2 * (y * (1 - y)) ** 2 * (z * (1 - z)) ** 2
    u = [sy.diff(phi, y), -sy.diff(phi, x), sy.Integer(0)]
    w = curl(u)
    lap = [sum(sy.diff(c, v, 2) for v in X) for c in u]
    P = sy.sin(sy.pi * x) * sy.cos(sy.pi * y)
    wxu = [w[1] * u[2] - w[2] * u[1], w[2] * u[0] - w[0] * u[2], w[0] * u[1] - w[1] * u[0]]
    f = [alpha * u[i] - nu * lap[i] + wxu[i] + grad(P)[i] for i in range(3)]
    case = make_manufactured_case(nu, alpha)
    assert np.allclose(case.u(pts), lam(u)(pts), atol=1e-14)
    assert np.allclose(case.w(pts), lam(w)(pts), atol=1e-13)
    assert np.allclose(case.P(pts), lam(P)(pts), atol=1e-14)
    assert np.allclose(case.f(pts), lam(f)(pts), atol=1e-12)
    assert np.allclose(case.lap_u(pts), lam(lap)(pts), atol=1e-12)
    J = np.stack([lam([sy.diff(c, v) for c in u])(pts) for v in X], axis=2)
    assert np.allclose(case.u.grad(pts), J, atol=1e-13)
    assert sy.simplify(sum(sy.diff(u[i], X[i]) for i in range(3))) == 0


def test_nonstd_case_matches_symbolic(pts):
    nu, alpha = 0.5, 2.0
    phi = sy.sin(sy.pi * x) ** 3 * sy.sin(sy.pi * y) ** 3 * sy.sin(sy.pi * z)
    u = [sy.diff(phi, y), -sy.diff(phi, x), sy.Integer(0)]
    ru = curl(u)
    rru = curl(ru)
    p = sy.cos(sy.pi * x) * sy.cos(sy.pi * y) * sy.cos(sy.pi * z)
    a = [y, -x, sy.Integer(0)]
    axr = [a[1] * ru[2] - a[2] * ru[1], a[2] * ru[0] - a[0] * ru[2], a[0] * ru[1] - a[1] * ru[0]]
    g = [alpha * u[i] + nu * rru[i] + grad(p)[i] + axr[i] for i in range(3)]
    case = make_nonstd_case(nu, alpha, lambda q: np.stack([q[:, 1], -q[:, 0], 0 * q[:, 0]], 1))
    assert np.allclose(case.u(pts), lam(u)(pts), atol=1e-13)
    assert np.allclose(case.rot_u(pts), lam(ru)(pts), atol=1e-12)
    assert np.allclose(case.g(pts), lam(g)(pts), atol=1e-11)


@pytest.mark.parametrize("axis", [0, 1, 2])
@pytest.mark.parametrize("side", [0.0, 1.0])
def test_nonstd_case_boundary_conditions(axis, side):
    case = make_nonstd_case(1.0, 1.0)
    rng = np.random.default_rng(axis)
    p = rng.uniform(size=(40, 3))
    p[:, axis] = side
    assert np.allclose(case.u(p)[:, axis], 0, atol=1e-12)
    assert np.allclose(case.rot_u(p)[:, axis], 0, atol=1e-12)


def test_solenoidal_probe_vanishes_on_boundary():
    f = solenoidal_probe()
    p = np.random.default_rng(0).uniform(size=(30, 3))
    p[:, 1] = 1.0
    assert np.allclose(f(p), 0)
    with pytest.raises(ValueError):
        make_manufactured_case(nu=0.0)
