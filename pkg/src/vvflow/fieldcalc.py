"""Discrete vector calculus: norms, Helmholtz decomposition, vector
potentials and measured domain constants."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from . import assembly as asm
from .fespaces import (CompositeField, FeSpace, Field, build_pressure_space, build_space,
                       build_velocity_space, curl_from_gradients, gradients_at_quadrature,
                       quadrature_weights, values_at_quadrature)
from .linalg import BlockSystem, DirectFactor, nested_dissection, solve_direct
from .quadrature import tetrahedron_rule
from .stokes import discrete_divergence, saddle_ordering

_DEFAULT_RULE = 4


def _rule(rule):
    if rule is None:
        return tetrahedron_rule(_DEFAULT_RULE)
    return rule if hasattr(rule, "weights") else tetrahedron_rule(int(rule))


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Norms:
    l2: float
    h1_semi: float
    rot: float
    div: float


def _mesh_of(f, mesh):
    if mesh is not None:
        return mesh
    if isinstance(f, Field):
        return f.space.mesh
    if isinstance(f, CompositeField):
        return f.mesh
    raise ValueError("a mesh is needed to integrate analytic fields")


def norms(f, mesh=None, rule=None) -> Norms:
    """L2 norm, H1 seminorm, and L2 norms of rot and div (vector fields)."""
    rule = _rule(rule)
    m = _mesh_of(f, mesh)
    wq = quadrature_weights(m, rule)
    vals = values_at_quadrature(f, m, rule)
    l2 = math.sqrt(np.einsum("cq,cqm,cqm->", wq, vals, vals))
    G = gradients_at_quadrature(f, m, rule)
    h1 = math.sqrt(np.einsum("cq,cqij,cqij->", wq, G, G))
    if G.shape[2] == 3:
        r = curl_from_gradients(G)
        d = np.einsum("cqii->cq", G)
        rot = math.sqrt(np.einsum("cq,cqm,cqm->", wq, r, r))
        div = math.sqrt(np.einsum("cq,cq,cq->", wq, d, d))
    else:
        rot = div = math.nan
    return Norms(l2, h1, rot, div)


def star_norm(f, alpha: float, nu: float, mesh=None, rule=None) -> float:
    """``(alpha ||f||^2 + nu ||grad f||^2)^(1/2)``."""
    n = norms(f, mesh, rule)
    return math.sqrt(alpha * n.l2**2 + nu * n.h1_semi**2)


def error_norms(approx, exact, mesh=None, rule=None) -> Norms:
    """Norms of ``approx - exact``; ``exact`` must provide gradients."""
    rule = _rule(rule if rule is not None else 6)
    m = _mesh_of(approx, mesh)
    wq = quadrature_weights(m, rule)
    ncomp = values_at_quadrature(approx, m, rule).shape[2]
    dv = values_at_quadrature(approx, m, rule) - values_at_quadrature(exact, m, rule, ncomp)
    l2 = math.sqrt(np.einsum("cq,cqm,cqm->", wq, dv, dv))
    try:
        dG = gradients_at_quadrature(approx, m, rule) - gradients_at_quadrature(exact, m, rule)
    except TypeError:
        return Norms(l2, math.nan, math.nan, math.nan)
    h1 = math.sqrt(np.einsum("cq,cqij,cqij->", wq, dG, dG))
    if ncomp == 3:
        r = curl_from_gradients(dG)
        d = np.einsum("cqii->cq", dG)
        return Norms(l2, h1, math.sqrt(np.einsum("cq,cqm,cqm->", wq, r, r)),
                     math.sqrt(np.einsum("cq,cq,cq->", wq, d, d)))
    return Norms(l2, h1, math.nan, math.nan)


def alpha_plus(alpha: float, nu: float, c_p: float) -> float:
    """``max(alpha, nu / C_P^2)``."""
    if not (c_p > 0 and nu > 0 and alpha >= 0):
        raise ValueError("need c_p > 0, nu > 0, alpha >= 0")
    return max(float(alpha), float(nu) / float(c_p) ** 2)


# ---------------------------------------------------------------------------
# projections and decompositions
# ---------------------------------------------------------------------------
def l2_projection(space: FeSpace, f, rule=None) -> Field:
    """L2 projection onto the free dofs of ``space``."""
    rule = _rule(rule if rule is not None else 6)
    M = asm.assemble_mass(space, tetrahedron_rule(4))[space.free][:, space.free]
    b = asm.assemble_rhs(space, f, rule)[space.free]
    x, _ = solve_direct(BlockSystem(M, b), DirectFactor(M, nested_dissection(space.dof_coords[space.free])))
    return Field.from_free(space, x)


def _mean_bordered(K, mean):
    m = sp.csr_matrix(np.asarray(mean).reshape(-1, 1))
    return sp.bmat([[K, m], [m.T, None]], format="csr")


@dataclass
class HelmholtzResult:
    """``g_h = psi + grad q`` with ``(psi, grad lam) = 0`` for all discrete ``lam``."""

    psi: CompositeField  # g_h - grad q, piecewise P2 (discontinuous)
    q: Field  # scalar, zero mean
    g_h: Field  # discrete input (L2 projection of analytic data)
    residual: float  # ||g_h - psi - grad q||
    orthogonality: float  # max_k |(psi, grad lam_k)| / (||g_h|| ||grad lam_k||)


def helmholtz_decompose(g, mesh=None, rule=None, q_degree: int = 2) -> HelmholtzResult:
    """Split ``g`` into a gradient and a weakly solenoidal, tangential part.

    ``q`` solves the Neumann problem ``(grad q, grad phi) = (g_h, grad phi)``
    over scalar Lagrange functions of degree ``q_degree`` with zero mean,
    where ``g_h`` is ``g`` projected onto continuous vector P2. ``psi`` is
    the L2 projection of ``g_h - grad q`` onto broken (cellwise) vector P2.
    That space contains both terms, so the projection is the identity and
    ``psi`` is stored as the composite ``g_h - grad q``. It is orthogonal
    to the gradient of every function in the ``q`` space up to the
    accuracy of the Neumann solve.
    """
    if q_degree not in (1, 2):
        raise ValueError("q_degree must be 1 or 2")
    m = _mesh_of(g, mesh)
    if isinstance(g, Field) and g.space.ncomp == 3 and g.space.constraint == "none":
        g_h = g
    else:
        g_h = l2_projection(build_space(m, 2, 3), g, rule)
    V = g_h.space
    Q = build_space(m, q_degree, 1, "zero-mean-multiplier")
    r4 = tetrahedron_rule(4)
    K = asm.assemble_gradgrad(Q, r4)
    Bg = asm.assemble_vector_scalar_grad(V, Q, r4)  # (v, grad q) with rows over Q
    b = Bg @ g_h.coefficients
    x, _ = solve_direct(BlockSystem(_mean_bordered(K, Q.mean_vector()), np.r_[b, 0.0]))
    q = Field(Q, x[:Q.size])
    psi = CompositeField(m, [(g_h, "value", 1.0), (q, "grad", -1.0)])
    # diagnostics, all by quadrature on the pieces
    wq = quadrature_weights(m, r4)
    psi_v = psi.values(r4)
    diff = g_h.values(r4) - psi_v - q.gradients(r4)[:, :, 0, :]
    res = math.sqrt(np.einsum("cq,cqm,cqm->", wq, diff, diff))
    pair = b - K @ q.coefficients  # (g_h, grad lam_k) - (grad q, grad lam_k)
    lam_norm = np.sqrt(np.maximum(K.diagonal(), 1e-300))
    gq = g_h.values(r4)
    g_norm = math.sqrt(np.einsum("cq,cqm,cqm->", wq, gq, gq))
    orth = float(np.max(np.abs(pair) / lam_norm) / g_norm) if g_norm > 0 else 0.0
    return HelmholtzResult(psi, q, g_h, res, orth)


def solenoidal_projection(f, space: FeSpace | None = None, mesh=None, rule=None) -> Field:
    """L2 projection of ``f`` onto discretely divergence-free fields of ``space``.

    Default space: the zero-normal-trace vorticity space; divergence is
    tested against P1 with a zero-mean multiplier.
    """
    m = _mesh_of(f, mesh) if space is None else space.mesh
    space = space or build_space(m, 2, 3, "zero-normal-trace")
    Q = build_pressure_space(m)
    r4 = tetrahedron_rule(4)
    fr = space.free
    M = asm.assemble_mass(space, r4)[fr][:, fr]
    B = asm.assemble_div_pressure(space, Q, r4)[:, fr]
    F = asm.assemble_rhs(space, f, _rule(rule if rule is not None else 6))[fr]
    from .linalg import saddle_system
    system = saddle_system(M, B, F, mean=Q.mean_vector())
    order = saddle_ordering(system.matrix, [(space, fr)], [(Q, np.arange(Q.size))], 1)
    x, _ = solve_direct(system, DirectFactor(system.matrix, order))
    return Field.from_free(space, x[:len(fr)])


def vector_potential(w, mesh=None, div_tol: float = 1e-8, rule=None) -> Field:
    """``u`` with zero tangential trace, ``rot u = w`` and ``div u = 0``.

    Solves ``(rot u, rot v) + (div u, div v) = (w, rot v)`` over vector P2
    with zero tangential trace. The divergence term replaces a multiplier:
    for solenoidal ``w`` the exact potential makes it vanish.

    Raises
    ------
    ValueError
        If ``w`` is not discretely divergence-free (relative divergence
        above ``div_tol``).
    """
    m = _mesh_of(w, mesh)
    Q = build_pressure_space(m)
    try:
        d = discrete_divergence(w, Q)
    except TypeError:
        d = 0.0  # analytic data without gradient: trusted
    if d > div_tol:
        raise ValueError(f"w is not solenoidal: relative discrete divergence {d:.3e} > {div_tol:.1e}")
    U = build_space(m, 2, 3, "zero-tangential-trace")
    r4 = tetrahedron_rule(4)
    fr = U.free
    A = (asm.assemble_rotrot(U, r4) + asm.assemble_divdiv(U, r4))[fr][:, fr]
    b = asm.assemble_rot_rhs(U, w, _rule(rule if rule is not None else 6))[fr]
    x, _ = solve_direct(BlockSystem(A, b), DirectFactor(A, nested_dissection(U.dof_coords[fr])))
    return Field.from_free(U, x)


# ---------------------------------------------------------------------------
# constants
# ---------------------------------------------------------------------------
def _subspace_iteration(apply_inv, K, M, project, n, tol, max_iter, seed, block, largest):
    """Block inverse iteration with Rayleigh-Ritz on ``K x = lam M x``.

    ``apply_inv`` maps ``M x`` (or ``K x`` when ``largest``) to the next
    block. Working with a block instead of one vector makes the
    convergence rate ``lam_1 / lam_{block+1}``, which stays useful when
    the extreme eigenvalue is repeated or clustered.
    """
    rng = np.random.default_rng(seed)
    p = min(block, n)
    X = project(rng.standard_normal((n, p)))
    lam_old = math.inf
    for it in range(1, max_iter + 1):
        Y = project(apply_inv(X))
        Ks = Y.T @ (K @ Y)
        Ms = Y.T @ (M @ Y)
        Ks, Ms = 0.5 * (Ks + Ks.T), 0.5 * (Ms + Ms.T)
        if largest:
            ev, V = scipy.linalg.eigh(Ks, Ms)
            ev, V = ev[::-1], V[:, ::-1]
        else:
            ev, V = scipy.linalg.eigh(Ks, Ms)
        X = Y @ V
        X /= np.sqrt(np.einsum("ij,ij->j", X, M @ X))
        lam = ev[0]
        if abs(lam - lam_old) <= tol * abs(lam):
            return float(lam), X[:, 0], it
        lam_old = lam
    raise RuntimeError(f"subspace iteration did not converge in {max_iter} steps")


def smallest_generalized_eig(K, M, tol: float = 1e-8, max_iter: int = 500, seed: int = 0,
                             deflate=None, block: int = 6):
    """Smallest eigenpair of ``K x = lam M x`` by (block) inverse iteration.

    ``deflate`` (optional vector ``c``) restricts the iteration to the
    M-orthogonal complement of ``c``; ``K`` may then be singular along
    ``c`` and the solves use a bordered system.

    Stops when the smallest Ritz value changes by less than ``tol``
    relatively. Returns ``(lam, x, iterations)``.
    """
    K = sp.csr_matrix(K)
    M = sp.csr_matrix(M)
    n = K.shape[0]
    if deflate is not None:
        c = np.asarray(deflate, dtype=float)
        Mc = M @ c
        fac = DirectFactor(_mean_bordered(K, Mc))

        def project(V):
            return V - np.outer(c, (Mc @ V) / (Mc @ c))

        def apply_inv(X):
            B = M @ X
            return np.column_stack([fac.solve(np.r_[b, 0.0])[:n] for b in B.T])
    else:
        fac = DirectFactor(K)
        project = lambda V: V
        apply_inv = lambda X: np.column_stack([fac.solve(b) for b in (M @ X).T])
    return _subspace_iteration(apply_inv, K, M, project, n, tol, max_iter, seed, block, False)


def largest_generalized_eig(K, M, tol: float = 1e-8, max_iter: int = 500, seed: int = 0,
                            block: int = 6) -> float:
    """Largest eigenvalue of ``K x = lam M x`` for SPD ``M`` (block power iteration on ``M^-1 K``)."""
    K = sp.csr_matrix(K)
    M = sp.csr_matrix(M)
    fac = DirectFactor(M)
    apply = lambda X: np.column_stack([fac.solve(b) for b in (K @ X).T])
    lam, _, _ = _subspace_iteration(apply, K, M, lambda V: V, K.shape[0], tol, max_iter, seed,
                                    block, True)
    return lam


def estimate_poincare(space: FeSpace, tol: float = 1e-8) -> float:
    """``C_P = 1 / sqrt(lam_min)`` of ``(grad u, grad v) = lam (u, v)`` on ``space``."""
    r4 = tetrahedron_rule(4)
    fr = space.free
    K = asm.assemble_gradgrad(space, r4)[fr][:, fr]
    M = asm.assemble_mass(space, r4)[fr][:, fr]
    deflate = None
    if space.constraint in ("none", "zero-mean-multiplier") and space.ncomp == 1:
        deflate = np.ones(len(fr))
    elif space.constraint == "none":
        raise ValueError("vector space without constraint has constant fields in its kernel")
    lam, _, _ = smallest_generalized_eig(K, M, tol, deflate=deflate)
    return 1.0 / math.sqrt(lam)


def inf_sup_constant(mesh) -> float:
    """Discrete inf-sup constant of the P2/P1 pair with the H1 seminorm.

    Square root of the smallest nonzero eigenvalue of ``B K^-1 B^T``
    relative to the pressure mass matrix (constants are in the kernel).
    """
    X, Q = build_velocity_space(mesh), build_pressure_space(mesh)
    r4 = tetrahedron_rule(4)
    fr = X.free
    K = asm.assemble_gradgrad(X, r4)[fr][:, fr]
    B = asm.assemble_div_pressure(X, Q, r4)[:, fr]
    fac = DirectFactor(K, nested_dissection(X.dof_coords[fr]))
    KiBt = np.column_stack([fac.solve(col) for col in B.T.toarray().T])
    S = B @ KiBt
    S = 0.5 * (S + S.T)
    Mp = asm.assemble_mass(Q, r4).toarray()
    ev = scipy.linalg.eigh(S, Mp, eigvals_only=True)
    return float(math.sqrt(max(ev[1], 0.0)))


@dataclass
class EquivalenceConstants:
    c0: float  # max ||v|| / (||rot v||^2 + ||div v||^2)^(1/2) on W_h
    c1: float  # max ||grad v||^2 / (||rot v||^2 + ||div v||^2) on W_h
    beta: float  # discrete inf-sup constant


def measure_equivalence_constants(mesh, tol: float = 1e-8) -> EquivalenceConstants:
    W = build_space(mesh, 2, 3, "zero-normal-trace")
    r4 = tetrahedron_rule(4)
    fr = W.free
    RD = (asm.assemble_rotrot(W, r4) + asm.assemble_divdiv(W, r4))[fr][:, fr]
    G = asm.assemble_gradgrad(W, r4)[fr][:, fr]
    M = asm.assemble_mass(W, r4)[fr][:, fr]
    lam_min, _, _ = smallest_generalized_eig(RD, M, tol)
    c1 = largest_generalized_eig(G, RD, tol)
    return EquivalenceConstants(c0=1.0 / math.sqrt(lam_min), c1=float(c1), beta=inf_sup_constant(mesh))
