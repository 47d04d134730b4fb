"""Linear solution operators: the coupled Stokes/vorticity operator T and the
nonstandard Stokes operator with convection-like term ``a x rot u``.

T maps data ``(g, l)`` to ``(u, P, w, eta)``:

    alpha (u, v) + nu (grad u, grad v) - (P, div v) = (g, v)        v in X_h
    (div u, pi) = 0                                                 pi in Q_h
    alpha (w, chi) + nu (rot w, rot chi) + nu (div w, div chi)
        - (eta, div chi) = l(chi) - f_bc(P, chi)                    chi in W_h
    (div w, lam) = 0                                                lam in L_h

The pressure feeds the vorticity equation only through ``f_bc``, so the
system is block lower triangular and is solved as two saddle problems.
"""
from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import assembly as asm
from .fespaces import (AnalyticField, CompositeField, FeSpace, Field, Spaces, State,
                       build_pressure_space, build_space, values_at_quadrature)
from .linalg import (BlockSystem, DirectFactor, FactorCache, SolveReport, nested_dissection,
                     saddle_system, solve_direct, solve_krylov)
from .quadrature import tetrahedron_rule


@dataclass
class TInput:
    """Data of the linear operator T.

    ``g`` is velocity data: a callable, AnalyticField, Field, or a dual
    vector of length ``X.size`` holding ``(g, phi_i)``. ``l`` is a dual
    vector over the full vorticity dof range (``None`` means zero).
    """

    g: object = None
    l: np.ndarray | None = None
    nu: float = 1.0
    alpha: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.nu) or self.nu <= 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not np.isfinite(self.alpha) or self.alpha < 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")

    def scaled(self, c: float) -> "TInput":
        """Data multiplied by ``c`` (dual-vector data only)."""
        return TInput(c * np.asarray(self.g), None if self.l is None else c * self.l,
                      self.nu, self.alpha)


def saddle_ordering(K, primal: list, multipliers: list, n_border: int) -> np.ndarray:
    """Nested-dissection ordering for ``[primal..., multipliers..., borders]``.

    ``primal`` and ``multipliers`` are lists of ``(space, dof_indices)``.
    """
    coords, kind = [], []
    for k, group in enumerate((primal, multipliers)):
        for space, idx in group:
            coords.append(space.dof_coords[idx])
            kind.append(np.full(len(idx), k))
    coords.append(np.full((n_border, 3), np.nan))
    kind.append(np.full(n_border, 2))
    return nested_dissection(np.vstack(coords), np.concatenate(kind), graph=K)


def _dual(space: FeSpace, data, rule) -> np.ndarray:
    if data is None:
        return np.zeros(space.size)
    if isinstance(data, np.ndarray) and data.ndim == 1 and data.shape[0] == space.size:
        return data.astype(float)
    return asm.assemble_rhs(space, data, rule)


class StokesOperator:
    """Assembled blocks and cached factorizations for T on one mesh.

    Blocks are assembled once; factorizations are cached per ``(nu, alpha)``
    so repeated applications (fixed-point iterations) only cost
    back-substitutions. Instances are safe to share between threads.
    """

    def __init__(self, spaces: Spaces, quad_degree: int = 4, method: str = "direct",
                 tol: float = 1e-10, max_iter: int = 500, cache_size: int = 8):
        if method not in ("direct", "krylov"):
            raise ValueError(f"unknown solver method {method!r}")
        self.spaces = spaces
        self.rule = tetrahedron_rule(quad_degree)
        self.method = method
        self.tol = tol
        self.max_iter = max_iter
        self._cache = FactorCache(cache_size)
        self.reports: list[SolveReport] = []
        X, Q, W, L = spaces.X, spaces.Q, spaces.W, spaces.L
        r = tetrahedron_rule(4)  # exact for all bilinear P2 terms
        xf, wf = X.free, W.free
        self.M_X = asm.assemble_mass(X, r)[xf][:, xf]
        self.G_X = asm.assemble_gradgrad(X, r)[xf][:, xf]
        self.B_X = asm.assemble_div_pressure(X, Q, r)[:, xf]
        self.M_W = asm.assemble_mass(W, r)[wf][:, wf]
        self.RD_W = (asm.assemble_rotrot(W, r) + asm.assemble_divdiv(W, r))[wf][:, wf]
        self.B_W = asm.assemble_div_pressure(W, L, r)[:, wf]
        self.M_Q = asm.assemble_mass(Q, r)
        self.M_L = asm.assemble_mass(L, r)

    @property
    def mesh(self):
        return self.spaces.mesh

    # -- systems ------------------------------------------------------------
    def _system(self, kind, nu, alpha):
        if kind == "velocity":
            A = alpha * self.M_X + nu * self.G_X
            B, mean, Mp = self.B_X, self.spaces.Q.mean_vector(), self.M_Q
        else:
            A = alpha * self.M_W + nu * self.RD_W
            B, mean, Mp = self.B_W, self.spaces.L.mean_vector(), self.M_L
        schur = -Mp / (nu + alpha / (3.0 * np.pi**2))
        return saddle_system(A, B, np.zeros(A.shape[0]), mean=mean, schur=schur)

    def _solve(self, kind, nu, alpha, rhs):
        key = (kind, float(nu), float(alpha))
        template = self._cache.get(("sys",) + key, lambda: self._system(kind, nu, alpha))
        system = template.with_rhs(rhs)
        if self.method == "krylov":
            x, report = solve_krylov(system, self.tol, self.max_iter)
        else:
            factor = self._cache.get(("lu",) + key,
                                     lambda: DirectFactor(template.matrix,
                                                          self._ordering(kind, template.matrix)))
            x, report = solve_direct(system, factor)
        self.reports.append(report)
        return x

    def _ordering(self, kind, K):
        sp_ = self.spaces
        v, q = (sp_.X, sp_.Q) if kind == "velocity" else (sp_.W, sp_.L)
        return saddle_ordering(K, [(v, v.free)], [(q, np.arange(q.size))], 1)

    def _unpack(self, x, vspace, qspace):
        nv = vspace.n_dofs
        v = Field.from_free(vspace, x[:nv])
        q = Field(qspace, x[nv:nv + qspace.size])
        return v, q

    # -- public solves ------------------------------------------------------
    def solve_velocity(self, g, nu: float, alpha: float):
        """No-slip Stokes solve; returns ``(u, P)``."""
        X, Q = self.spaces.X, self.spaces.Q
        F = _dual(X, g, self.rule)[X.free]
        rhs = np.concatenate([F, np.zeros(Q.size + 1)])
        return self._unpack(self._solve("velocity", nu, alpha, rhs), X, Q)

    def solve_vorticity(self, l, P: Field, nu: float, alpha: float):
        """Vorticity solve with data ``l - f_bc(P, .)``; returns ``(w, eta)``."""
        W, L = self.spaces.W, self.spaces.L
        F = np.zeros(W.size) if l is None else np.asarray(l, dtype=float)
        if F.shape != (W.size,):
            raise ValueError(f"l must be a dual vector of length {W.size}")
        F = F - asm.assemble_fbc(P, W, "volume", self.rule)
        rhs = np.concatenate([F[W.free], np.zeros(L.size + 1)])
        return self._unpack(self._solve("vorticity", nu, alpha, rhs), W, L)

    def __call__(self, tin: TInput) -> State:
        return self.solve_T(tin)

    def solve_T(self, tin: TInput) -> State:
        u, P = self.solve_velocity(tin.g, tin.nu, tin.alpha)
        w, eta = self.solve_vorticity(tin.l, P, tin.nu, tin.alpha)
        return State(u, P, w, eta)


def solve_T(spaces: Spaces, tin: TInput, **kwargs) -> State:
    """One-shot application of T; use StokesOperator to reuse factorizations."""
    return StokesOperator(spaces, **kwargs).solve_T(tin)


# ---------------------------------------------------------------------------
# nonstandard Stokes problem
# ---------------------------------------------------------------------------
@dataclass
class NonstdParams:
    """Coefficients of the nonstandard Stokes problem.

    ``a`` is a vector field (Field, CompositeField or analytic) or ``None``
    for ``a = 0``. Fields are checked for discrete solenoidality.
    """

    a: object = None
    nu: float = 1.0
    alpha: float = 0.0
    c_star: float | None = None

    def __post_init__(self):
        if not np.isfinite(self.nu) or self.nu <= 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not np.isfinite(self.alpha) or self.alpha < 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")


@dataclass
class NonstdSolution:
    """Solution ``u = v + grad s`` with multiplier and recovered P1 pressure."""

    u: CompositeField
    v: Field  # zero tangential trace part
    s: Field  # boundary-supported scalar potential
    multiplier: Field  # P2 multiplier of the gradient-orthogonality constraint
    p: Field  # pressure on the P1 space, zero mean
    report: SolveReport
    smallness: dict = field(default_factory=dict)


def discrete_divergence(f, qspace: FeSpace, rule=None) -> float:
    """``||Pi_Q div f|| / ||grad f||``, the relative size of the discrete divergence."""
    rule = rule or tetrahedron_rule(4)
    m = qspace.mesh
    grads = asm.gradients_at_quadrature(f, m, rule)
    wq = asm.quadrature_weights(m, rule)
    gnorm = np.sqrt(np.einsum("cq,cqij,cqij->", wq, grads, grads))
    if gnorm == 0.0:
        return 0.0
    psi, _ = qspace.tabulate(rule)
    div = np.einsum("cqii->cq", grads)
    b = asm.scatter_vector(qspace, np.einsum("cq,cq,qk->ck", wq, div, psi))
    Mq = asm.assemble_mass(qspace, rule)
    c = DirectFactor(Mq).solve(b)
    return float(np.sqrt(max(c @ b, 0.0)) / gnorm)


class NonstdStokesOperator:
    """Solver for ``alpha u + nu rot rot u + a x rot u + grad p = g`` with
    ``div u = 0``, ``u.n = n.rot u = n.rot rot u = 0`` on the box boundary.

    Discretization: ``u = v + grad s`` with ``v`` vector P2 of zero
    tangential trace (so ``n.rot u = 0`` holds exactly) and ``s`` scalar P2
    supported on boundary nodes (supplying the tangential trace of ``u``,
    which is a surface gradient). Orthogonality ``(u, grad r) = 0`` for all
    scalar P2 ``r`` is imposed by a P2 multiplier; it encodes ``div u = 0``
    and ``u.n = 0``. The condition on ``n.rot rot u`` is natural.
    """

    def __init__(self, mesh, quad_degree: int = 4, div_tol: float = 1e-8):
        self.mesh = mesh
        self.rule = tetrahedron_rule(quad_degree)
        self.div_tol = div_tol
        self.V = build_space(mesh, 2, 3, "zero-tangential-trace")
        S = build_space(mesh, 2, 1, "boundary-supported")
        # v = grad b, s = -b with b constant on the boundary leaves u unchanged;
        # pinning s at one boundary node removes that direction
        fixed = S.fixed.copy()
        fixed[0] = True
        self.S = dataclasses.replace(S, fixed=fixed, _cache={})
        self.R = build_space(mesh, 2, 1)
        self.Q = build_pressure_space(mesh)
        self._cache = FactorCache(4)
        r = self.rule
        Wd = asm.weight_diagonal(mesh, r)
        Ev = asm.value_operator(self.V, r)[:, self.V.free]
        Gs = asm.gradient_operator(self.S, r)[:, self.S.free]
        self.U = sp.hstack([Ev, Gs]).tocsr()  # composite values at quadrature points
        Rv = asm.rot_operator(self.V, r)[:, self.V.free]
        self.Rot = sp.hstack([Rv, sp.csr_matrix((Rv.shape[0], self.S.n_dofs))]).tocsr()
        self.Wd = Wd
        self.M = (self.U.T @ Wd @ self.U).tocsr()
        self.K = (self.Rot.T @ Wd @ self.Rot).tocsr()
        Gr = asm.gradient_operator(self.R, r)
        self.Bc = (Gr.T @ Wd @ self.U).tocsr()  # rows: multiplier dofs
        self.mean_r = self.R.mean_vector()

    @property
    def n_u(self) -> int:
        return self.V.n_dofs + self.S.n_dofs

    def ordering(self, K) -> np.ndarray:
        return saddle_ordering(K, [(self.V, self.V.free), (self.S, self.S.free)],
                               [(self.R, np.arange(self.R.size))], 1)

    def cross_matrix(self, a) -> sp.csr_matrix:
        """Matrix of ``(a x rot u, psi)``; identically zero for ``a = None``."""
        if a is None:
            return sp.csr_matrix((self.n_u, self.n_u))
        aq = values_at_quadrature(a, self.mesh, self.rule, 3)
        Xa = asm.pointwise_cross(aq)
        return (self.U.T @ self.Wd @ Xa @ self.Rot).tocsr()

    def check_a(self, a):
        if a is None or not isinstance(a, (Field, CompositeField)):
            return 0.0
        d = discrete_divergence(a, self.Q, self.rule)
        if d > self.div_tol:
            raise ValueError(f"a is not discretely divergence-free: relative divergence {d:.3e} "
                             f"exceeds {self.div_tol:.1e}")
        return d

    def matrix(self, params: NonstdParams) -> sp.csr_matrix:
        A = params.alpha * self.M + params.nu * self.K + self.cross_matrix(params.a)
        mr = sp.csr_matrix(self.mean_r.reshape(-1, 1))
        return sp.bmat([[A, self.Bc.T, None],
                        [self.Bc, None, mr],
                        [None, mr.T, None]], format="csr")

    def smallness(self, params: NonstdParams, c_p: float | None = None) -> dict:
        """Advisory check of ``||grad a|| <= C* nu^(3/4) alpha_+^(1/4)``."""
        out = {"grad_a": 0.0, "threshold": None, "satisfied": None}
        if params.a is None:
            out.update(satisfied=True)
            return out
        g = asm.gradients_at_quadrature(params.a, self.mesh, self.rule)
        wq = asm.quadrature_weights(self.mesh, self.rule)
        out["grad_a"] = float(np.sqrt(np.einsum("cq,cqij,cqij->", wq, g, g)))
        if params.c_star is not None:
            c_p = c_p if c_p is not None else 1.0 / (np.pi * np.sqrt(3.0))
            ap = max(params.alpha, params.nu / c_p**2)
            thr = params.c_star * params.nu**0.75 * ap**0.25
            out.update(threshold=thr, satisfied=out["grad_a"] <= thr)
            if not out["satisfied"]:
                warnings.warn(f"||grad a|| = {out['grad_a']:.3e} exceeds the smallness threshold "
                              f"{thr:.3e}; the problem may not be uniquely solvable", RuntimeWarning)
        return out

    def solve(self, params: NonstdParams, g) -> NonstdSolution:
        self.check_a(params.a)
        small = self.smallness(params)
        gq = values_at_quadrature(g, self.mesh, self.rule, 3) if g is not None else None
        F = np.zeros(self.n_u) if gq is None else self.U.T @ (self.Wd @ gq.ravel())
        rhs = np.concatenate([F, np.zeros(self.R.size + 1)])
        key = (float(params.nu), float(params.alpha), id(params.a))
        def build():
            K = self.matrix(params)
            return DirectFactor(K, self.ordering(K))

        factor = self._cache.get(key, build) if params.a is None else build()
        x, report = solve_direct(BlockSystem(factor.matrix, rhs), factor)
        nv, ns, nr = self.V.n_dofs, self.S.n_dofs, self.R.size
        v = Field.from_free(self.V, x[:nv])
        s = Field.from_free(self.S, x[nv:nv + ns])
        mult = Field(self.R, x[nv + ns:nv + ns + nr])
        u = CompositeField(self.mesh, [(v, "value", 1.0), (s, "grad", 1.0)])
        p = self.recover_pressure(params, g, u)
        return NonstdSolution(u, v, s, mult, p, report, small)

    def recover_pressure(self, params: NonstdParams, g, u: CompositeField) -> Field:
        """P1 pressure from ``(grad p, grad q) = (g - a x rot u - alpha u, grad q)``."""
        r = self.rule
        F = -params.alpha * u.values(r)
        if g is not None:
            F = F + values_at_quadrature(g, self.mesh, r, 3)
        if params.a is not None:
            F = F - np.cross(values_at_quadrature(params.a, self.mesh, r, 3), u.rot(r))
        Q = self.Q
        Gq = asm.gradient_operator(Q, r)
        Wd = asm.weight_diagonal(self.mesh, r)
        K = (Gq.T @ Wd @ Gq).tocsr()
        b = Gq.T @ (Wd @ F.ravel())
        m = sp.csr_matrix(Q.mean_vector().reshape(-1, 1))
        Kb = sp.bmat([[K, m], [m.T, None]], format="csr")
        x, _ = solve_direct(BlockSystem(Kb, np.concatenate([b, [0.0]])))
        return Field(Q, x[:Q.size])

    def apply_inverse(self, params: NonstdParams, w) -> CompositeField:
        """``u = hat-Delta_a^{-1} w``: the velocity of the problem with data ``w``."""
        if isinstance(w, Field):
            d = discrete_divergence(w, self.Q, self.rule)
            if d > self.div_tol:
                raise ValueError(f"w is not discretely divergence-free: relative divergence "
                                 f"{d:.3e} exceeds {self.div_tol:.1e}")
        return self.solve(params, w).u


def solve_nonstd_stokes(mesh, params: NonstdParams, g, **kwargs) -> NonstdSolution:
    return NonstdStokesOperator(mesh, **kwargs).solve(params, g)


def apply_hat_delta_inv(mesh, params: NonstdParams, w, **kwargs) -> CompositeField:
    return NonstdStokesOperator(mesh, **kwargs).apply_inverse(params, w)
