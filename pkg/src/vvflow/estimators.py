"""Thin scikit-learn style wrappers around the solvers.

``fit`` takes a forcing field (a callable on ``(N, 3)`` points, an
AnalyticField or a finite element Field; ``None`` means zero) and solves on
the configured box mesh. ``predict``/``transform`` evaluate the fitted
velocity or solenoidal part at points. Hyper-parameters follow the
``get_params``/``set_params`` contract of ``BaseEstimator``.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .fespaces import AnalyticField, Field, CompositeField, Spaces
from .fieldcalc import helmholtz_decompose
from .mesh import build_box_mesh
from .picard import PicardConfig, VVSProblem, solve_vvs
from .stokes import NonstdParams, NonstdStokesOperator


def _as_field(f):
    if f is None or isinstance(f, (AnalyticField, Field, CompositeField)):
        return f
    if callable(f):
        return AnalyticField(f, None, 3)
    raise TypeError(f"forcing must be None, a field or a callable on points, got {type(f).__name__}")


def _points(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != 3:
        raise ValueError(f"points must have shape (n, 3), got {X.shape}")
    return X


class VVSSolver(BaseEstimator):
    """Coupled velocity-vorticity solve; ``predict`` returns the velocity."""

    def __init__(self, nu=0.1, alpha=1.0, mesh=(4, 4, 4), tol=1e-10, max_iter=50,
                 lambda_steps=1, quad_degree=4):
        self.nu = nu
        self.alpha = alpha
        self.mesh = mesh
        self.tol = tol
        self.max_iter = max_iter
        self.lambda_steps = lambda_steps
        self.quad_degree = quad_degree

    def fit(self, X=None, y=None):
        cfg = PicardConfig.with_steps(self.lambda_steps, tol=self.tol, max_iter=self.max_iter,
                                      quad_degree=self.quad_degree)
        spaces = Spaces.build(build_box_mesh(*self.mesh))
        self.problem_ = VVSProblem(spaces, _as_field(X), self.nu, self.alpha, cfg)
        res = solve_vvs(self.problem_)
        self.state_, self.trace_, self.n_iter_ = res.state, res.trace, res.iterations
        return self

    def predict(self, X):
        check_is_fitted(self, "state_")
        return self.state_.u.evaluate(_points(X))

    def vorticity(self, X):
        check_is_fitted(self, "state_")
        return self.state_.w.evaluate(_points(X))


class NonstdStokesSolver(BaseEstimator):
    """Nonstandard Stokes solve with coefficient ``a``; ``predict`` returns ``u``."""

    def __init__(self, nu=1.0, alpha=0.0, a=None, mesh=(4, 4, 4), quad_degree=4):
        self.nu = nu
        self.alpha = alpha
        self.a = a
        self.mesh = mesh
        self.quad_degree = quad_degree

    def fit(self, X=None, y=None):
        op = NonstdStokesOperator(build_box_mesh(*self.mesh), self.quad_degree)
        self.solution_ = op.solve(NonstdParams(_as_field(self.a), self.nu, self.alpha), _as_field(X))
        return self

    def predict(self, X):
        check_is_fitted(self, "solution_")
        return self.solution_.u.evaluate(_points(X))


class HelmholtzDecomposer(BaseEstimator):
    """``g = psi + grad q``; ``transform`` returns ``psi`` at points."""

    def __init__(self, mesh=(4, 4, 4), q_degree=2):
        self.mesh = mesh
        self.q_degree = q_degree

    def fit(self, X, y=None):
        g = _as_field(X)
        if g is None:
            raise ValueError("nothing to decompose: the field is None")
        self.result_ = helmholtz_decompose(g, build_box_mesh(*self.mesh), q_degree=self.q_degree)
        return self

    def transform(self, X):
        check_is_fitted(self, "result_")
        return self.result_.psi.evaluate(_points(X))

    def gradient_part(self, X):
        check_is_fitted(self, "result_")
        return self.result_.q.evaluate_gradient(_points(X))[:, 0, :]
