"""Closed-form manufactured fields built from separable stream functions.

A scalar ``phi(x, y, z) = X(x) Y(y) Z(z)`` with 1D factors whose
derivatives of every order are known exactly. Vector fields are linear
combinations of partial derivatives of ``phi``, so differentiation is exact
index bookkeeping and no symbolic algebra runs at solve time.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial

from .fespaces import AnalyticField


class Poly1D:
    """Polynomial factor."""

    def __init__(self, coef):
        self.p = Polynomial(coef)

    def __call__(self, t, order: int = 0):
        return self.p.deriv(order)(t) if order else self.p(t)

    @classmethod
    def bubble_squared(cls) -> "Poly1D":
        """``(t (1 - t))^2``: vanishes with its first derivative at 0 and 1."""
        return cls((Polynomial([0.0, 1.0, -1.0]) ** 2).coef)


class TrigSeries1D:
    """Factor ``sum_k a_k sin(w_k t + p_k)``."""

    def __init__(self, terms):
        self.terms = [(float(a), float(w), float(p)) for a, w, p in terms]

    def __call__(self, t, order: int = 0):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for a, w, p in self.terms:
            out = out + a * w**order * np.sin(w * t + p + order * np.pi / 2)
        return out

    @classmethod
    def sin_pi(cls, power: int = 1) -> "TrigSeries1D":
        """``sin(pi t)**power`` for power 1 or 3."""
        if power == 1:
            return cls([(1.0, np.pi, 0.0)])
        if power == 3:  # sin^3 = (3 sin t - sin 3t) / 4
            return cls([(0.75, np.pi, 0.0), (-0.25, 3 * np.pi, 0.0)])
        raise ValueError("supported powers: 1, 3")

    @classmethod
    def cos_pi(cls) -> "TrigSeries1D":
        return cls([(1.0, np.pi, np.pi / 2)])


class Separable:
    """``phi = X(x) Y(y) Z(z)``; ``d(alpha)`` evaluates a partial derivative."""

    def __init__(self, X, Y, Z):
        self.factors = (X, Y, Z)

    def d(self, alpha, x):
        x = np.atleast_2d(x)
        out = np.ones(len(x))
        for k, fac in enumerate(self.factors):
            out = out * fac(x[:, k], alpha[k])
        return out


# A component is a list of (coefficient, multi-index); a field is three components.
def _shift(comp, axis):
    return [(c, tuple(a + (1 if k == axis else 0) for k, a in enumerate(mi))) for c, mi in comp]


def _scale(comp, s):
    return [(s * c, mi) for c, mi in comp]


class StreamField:
    """Vector field whose components are combinations of derivatives of ``phi``."""

    def __init__(self, phi: Separable, comps):
        self.phi = phi
        self.comps = [list(c) for c in comps]

    @classmethod
    def rot_of_z_stream(cls, phi: Separable) -> "StreamField":
        """``rot(0, 0, phi) = (phi_y, -phi_x, 0)``, divergence free."""
        return cls(phi, [[(1.0, (0, 1, 0))], [(-1.0, (1, 0, 0))], []])

    def _eval(self, comp, x):
        out = np.zeros(len(np.atleast_2d(x)))
        for c, mi in comp:
            out = out + c * self.phi.d(mi, x)
        return out

    def __call__(self, x):
        x = np.atleast_2d(x)
        return np.stack([self._eval(c, x) for c in self.comps], axis=1)

    def grad(self, x):
        """``[:, i, j] = d f_i / d x_j``."""
        x = np.atleast_2d(x)
        return np.stack([np.stack([self._eval(_shift(c, j), x) for j in range(3)], axis=1)
                         for c in self.comps], axis=1)

    def d(self, comp: int, axis: int) -> list:
        return _shift(self.comps[comp], axis)

    def rot(self) -> "StreamField":
        c = [
            self.d(2, 1) + _scale(self.d(1, 2), -1.0),
            self.d(0, 2) + _scale(self.d(2, 0), -1.0),
            self.d(1, 0) + _scale(self.d(0, 1), -1.0),
        ]
        return StreamField(self.phi, c)

    def laplacian(self) -> "StreamField":
        return StreamField(self.phi, [sum((_shift(_shift(c, a), a) for a in range(3)), [])
                                      for c in self.comps])

    def div(self, x):
        return sum(self._eval(self.d(i, i), x) for i in range(3))

    def analytic(self) -> AnalyticField:
        return AnalyticField(self.__call__, self.grad, 3)


class ScalarSeparable:
    """Scalar ``c * A(x) B(y) C(z)`` with gradient."""

    def __init__(self, phi: Separable, scale: float = 1.0):
        self.phi = phi
        self.scale = scale

    def __call__(self, x):
        return self.scale * self.phi.d((0, 0, 0), x)

    def grad(self, x):
        return self.scale * np.stack([self.phi.d(tuple(int(k == j) for k in range(3)), x)
                                      for j in range(3)], axis=1)

    def analytic(self) -> AnalyticField:
        return AnalyticField(self.__call__, self.grad, 1)


@dataclass
class ManufacturedCase:
    """Exact solution and forcing of the stationary velocity-vorticity system.

    ``f = alpha u - nu Lap u + w x u + grad P`` with ``w = rot u`` and
    ``eta = 0``.
    """

    nu: float
    alpha: float
    u: AnalyticField
    w: AnalyticField
    P: AnalyticField
    f: AnalyticField
    lap_u: AnalyticField
    boundary_conditions: tuple = ("u = 0", "w.n = 0", "div u = 0")


def make_manufactured_case(nu: float = 0.1, alpha: float = 1.0) -> ManufacturedCase:
    """Default case: ``u = rot(0, 0, phi)``, ``phi = (x(1-x) y(1-y))^2 (z(1-z))^2``,
    ``P = sin(pi x) cos(pi y)``."""
    if nu <= 0 or alpha < 0:
        raise ValueError("need nu > 0 and alpha >= 0")
    b = Poly1D.bubble_squared()
    phi = Separable(b, b, b)
    u = StreamField.rot_of_z_stream(phi)
    w = u.rot()
    lap = u.laplacian()
    Pfac = Separable(TrigSeries1D.sin_pi(), TrigSeries1D.cos_pi(), Poly1D([1.0]))
    P = ScalarSeparable(Pfac)

    def f(x):
        uu, ww = u(x), w(x)
        return alpha * uu - nu * lap(x) + np.cross(ww, uu) + P.grad(x)

    return ManufacturedCase(nu, alpha, u.analytic(), w.analytic(), P.analytic(),
                            AnalyticField(f, None, 3), lap.analytic())


@dataclass
class NonstdCase:
    """Exact solution of ``alpha u + nu rot rot u + a x rot u + grad p = g``.

    ``u = rot(0, 0, phi)``, ``phi = sin^3(pi x) sin^3(pi y) sin(pi z)``
    satisfies ``div u = 0``, ``u.n = 0``, ``n.rot u = 0`` and
    ``n.rot rot u = 0`` on every face of the unit cube.
    """

    nu: float
    alpha: float
    u: AnalyticField
    rot_u: AnalyticField
    p: AnalyticField
    a: object
    g: AnalyticField


def make_nonstd_case(nu: float = 0.5, alpha: float = 1.0, a=None) -> NonstdCase:
    """``a`` is any vector field usable at quadrature points (or None)."""
    s3, s1 = TrigSeries1D.sin_pi(3), TrigSeries1D.sin_pi(1)
    phi = Separable(s3, s3, s1)
    u = StreamField.rot_of_z_stream(phi)
    ru = u.rot()
    rru = ru.rot()
    c = TrigSeries1D.cos_pi()
    p = ScalarSeparable(Separable(c, c, c))

    def g_values(x, a_values=None):
        out = alpha * u(x) + nu * rru(x) + p.grad(x)
        if a_values is not None:
            out = out + np.cross(a_values, ru(x))
        return out

    if a is None:
        g = AnalyticField(lambda x: g_values(x), None, 3)
    else:
        g = AnalyticField(lambda x: g_values(x, a(x)), None, 3)
    return NonstdCase(nu, alpha, u.analytic(), ru.analytic(), p.analytic(), a, g)


def solenoidal_probe():
    """Smooth divergence-free field with ``u = 0`` on the boundary of the unit cube."""
    b = Poly1D.bubble_squared()
    return StreamField.rot_of_z_stream(Separable(b, b, b)).analytic()
