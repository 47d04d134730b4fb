"""Assembly of the bilinear, trilinear and linear forms of the coupled system.

Matrices are returned over the *full* nodal dof range of the spaces
(``space.size``); solvers restrict them to ``space.free``. Row index = test
dof, column index = trial dof.

Trilinear forms are assembled as matrices with one argument frozen, which
is how the fixed-point iteration uses them.
"""
from __future__ import annotations

import numpy as np
import scipy.io
import scipy.sparse as sp

from .fespaces import (FeSpace, Field, gradients_at_quadrature, quadrature_weights,
                       values_at_quadrature, basis_values, basis_bary_derivatives)
from .mesh import FACET_VERTICES
from .quadrature import QuadratureRule, tetrahedron_rule, triangle_rule

DEFAULT_DEGREE = 4

# Levi-Civita symbol
EPS = np.zeros((3, 3, 3))
EPS[0, 1, 2] = EPS[1, 2, 0] = EPS[2, 0, 1] = 1.0
EPS[0, 2, 1] = EPS[2, 1, 0] = EPS[1, 0, 2] = -1.0


def _rule(rule):
    if rule is None:
        return tetrahedron_rule(DEFAULT_DEGREE)
    if isinstance(rule, QuadratureRule):
        return rule
    return tetrahedron_rule(int(rule))


def scatter_matrix(test: FeSpace, trial: FeSpace, local: np.ndarray) -> sp.csr_matrix:
    """Sum cell matrices ``(nc, n_test_loc, n_trial_loc)`` into a CSR matrix."""
    rows = np.broadcast_to(test.cell_dofs[:, :, None], local.shape)
    cols = np.broadcast_to(trial.cell_dofs[:, None, :], local.shape)
    A = sp.coo_matrix((local.ravel(), (rows.ravel(), cols.ravel())),
                      shape=(test.size, trial.size)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def scatter_vector(space: FeSpace, local: np.ndarray) -> np.ndarray:
    """Sum cell vectors ``(nc, ncomp * nloc)`` into a full-length vector."""
    return np.bincount(space.cell_dofs.ravel(), local.ravel(), minlength=space.size)


def _blocks_to_local(blocks, nloc_t, nloc_s):
    """Assemble a 3x3 array of ``(nc, nloc_t, nloc_s)`` blocks into one cell matrix."""
    nc = next(b for row in blocks for b in row if b is not None).shape[0]
    out = np.zeros((nc, 3 * nloc_t, 3 * nloc_s))
    for c in range(3):
        for d in range(3):
            if blocks[c][d] is not None:
                out[:, c * nloc_t:(c + 1) * nloc_t, d * nloc_s:(d + 1) * nloc_s] = blocks[c][d]
    return out


def _diag_blocks(block):
    return [[block if c == d else None for d in range(3)] for c in range(3)]


# ---------------------------------------------------------------------------
# bilinear forms on one space
# ---------------------------------------------------------------------------
def assemble_mass(s: FeSpace, rule=None) -> sp.csr_matrix:
    """``(u, v)``; block diagonal for vector spaces."""
    rule = _rule(rule)
    phi, _ = s.tabulate(rule)
    W = quadrature_weights(s.mesh, rule)
    loc = np.einsum("cq,qi,qj->cij", W, phi, phi, optimize=True)
    if s.ncomp == 3:
        loc = _blocks_to_local(_diag_blocks(loc), s.nloc, s.nloc)
    return scatter_matrix(s, s, loc)


def _grad_products(s: FeSpace, rule) -> np.ndarray:
    """``S[c, a, b, i, j] = sum_q w d_a phi_i d_b phi_j``."""
    _, G = s.tabulate(rule)
    W = quadrature_weights(s.mesh, rule)
    return np.einsum("cq,cqia,cqjb->cabij", W, G, G, optimize=True)


def assemble_gradgrad(s: FeSpace, rule=None) -> sp.csr_matrix:
    """``(grad u, grad v)``; block diagonal for vector spaces."""
    rule = _rule(rule)
    _, G = s.tabulate(rule)
    W = quadrature_weights(s.mesh, rule)
    loc = np.einsum("cq,cqia,cqja->cij", W, G, G, optimize=True)
    if s.ncomp == 3:
        loc = _blocks_to_local(_diag_blocks(loc), s.nloc, s.nloc)
    return scatter_matrix(s, s, loc)


def assemble_rotrot(s: FeSpace, rule=None) -> sp.csr_matrix:
    """``(rot u, rot v)`` on a vector space."""
    _require_vector(s)
    S = _grad_products(s, _rule(rule))
    K = np.einsum("caaij->cij", S)
    # rot(phi_i e_c) . rot(phi_j e_d) = delta_cd grad phi_i . grad phi_j - d_d phi_i d_c phi_j
    blocks = [[(K if c == d else 0.0) - S[:, d, c] for d in range(3)] for c in range(3)]
    return scatter_matrix(s, s, _blocks_to_local(blocks, s.nloc, s.nloc))


def assemble_divdiv(s: FeSpace, rule=None) -> sp.csr_matrix:
    """``(div u, div v)`` on a vector space."""
    _require_vector(s)
    S = _grad_products(s, _rule(rule))
    blocks = [[S[:, c, d] for d in range(3)] for c in range(3)]
    return scatter_matrix(s, s, _blocks_to_local(blocks, s.nloc, s.nloc))


def assemble_vector_scalar_grad(v_space: FeSpace, q_space: FeSpace, rule=None) -> sp.csr_matrix:
    """``(v, grad q)`` with rows over ``q_space`` and columns over ``v_space``."""
    _require_vector(v_space)
    rule = _rule(rule)
    phi, _ = v_space.tabulate(rule)
    _, Gq = q_space.tabulate(rule)
    W = quadrature_weights(v_space.mesh, rule)
    loc = np.concatenate([np.einsum("cq,cqk,qj->ckj", W, Gq[..., d], phi, optimize=True)
                          for d in range(3)], axis=2)
    return scatter_matrix(q_space, v_space, loc)


def assemble_div_pressure(v_space: FeSpace, q_space: FeSpace, rule=None) -> sp.csr_matrix:
    """``B`` with ``(B v)_k = (q_k, div v)``; shape ``(q_space.size, v_space.size)``."""
    _require_vector(v_space)
    rule = _rule(rule)
    psi, _ = q_space.tabulate(rule)
    _, G = v_space.tabulate(rule)
    W = quadrature_weights(v_space.mesh, rule)
    loc = np.concatenate([np.einsum("cq,qk,cqj->ckj", W, psi, G[..., d], optimize=True)
                          for d in range(3)], axis=2)
    return scatter_matrix(q_space, v_space, loc)


# ---------------------------------------------------------------------------
# trilinear forms with one frozen argument
# ---------------------------------------------------------------------------
def assemble_cross(w, space: FeSpace, rule=None) -> sp.csr_matrix:
    """Matrix of ``(w x u, v)`` in ``(u, v)`` for frozen ``w``.

    ``u^T C u = 0`` for every ``u`` because ``(w x u) . u`` vanishes at
    each quadrature point.
    """
    _require_vector(space)
    rule = _rule(rule)
    phi, _ = space.tabulate(rule)
    W = quadrature_weights(space.mesh, rule)
    wq = values_at_quadrature(w, space.mesh, rule, 3)
    T = np.einsum("cq,cqa,qi,qj->caij", W, wq, phi, phi, optimize=True)
    blocks = [[np.einsum("a,caij->cij", EPS[c, :, d], T) if c != d else None
               for d in range(3)] for c in range(3)]
    return scatter_matrix(space, space, _blocks_to_local(blocks, space.nloc, space.nloc))


def _advect_local(a, space, rule):
    # sum_q w (a . grad phi_j) phi_i, (nc, nloc, nloc)
    phi, G = space.tabulate(rule)
    W = quadrature_weights(space.mesh, rule)
    aq = values_at_quadrature(a, space.mesh, rule, 3)
    return np.einsum("cq,cqd,cqjd,qi->cij", W, aq, G, phi, optimize=True)


def assemble_convection(a, space: FeSpace, mode: str = "advect", rule=None,
                        skew: bool = False) -> sp.csr_matrix:
    """Matrices of ``b(u, v, w) = (u . grad v, w)`` with one slot frozen to ``a``.

    mode ``"advect"``  : ``b(a, v, chi)`` as a form in (v, chi)
    mode ``"stretch"`` : ``b(v, a, chi)`` as a form in (v, chi)

    With ``skew=True`` the form ``(b(u, v, w) - b(u, w, v)) / 2`` is used.
    """
    _require_vector(space)
    rule = _rule(rule)
    n = space.nloc
    if mode == "advect":
        loc = _blocks_to_local(_diag_blocks(_advect_local(a, space, rule)), n, n)
        A = scatter_matrix(space, space, loc)
        return 0.5 * (A - A.T).tocsr() if skew else A
    if mode == "stretch":
        phi, G = space.tabulate(rule)
        W = quadrature_weights(space.mesh, rule)
        ga = gradients_at_quadrature(a, space.mesh, rule)  # (nc, nq, 3, 3): d_d a_c
        blocks = [[np.einsum("cq,cq,qj,qi->cij", W, ga[:, :, c, d], phi, phi, optimize=True)
                   for d in range(3)] for c in range(3)]
        A = scatter_matrix(space, space, _blocks_to_local(blocks, n, n))
        if skew:
            # b(v, chi, a): trial (d, j), test (c, i) -> sum_q w phi_j d_d phi_i a_c
            aq = values_at_quadrature(a, space.mesh, rule, 3)
            blocks2 = [[np.einsum("cq,cq,qj,cqi->cij", W, aq[:, :, c], phi, G[..., d], optimize=True)
                        for d in range(3)] for c in range(3)]
            A2 = scatter_matrix(space, space, _blocks_to_local(blocks2, n, n))
            A = 0.5 * (A - A2)
        return A.tocsr()
    raise ValueError(f"unknown convection mode {mode!r}")


# ---------------------------------------------------------------------------
# linear functionals
# ---------------------------------------------------------------------------
def load_vector_data(space: FeSpace, F: np.ndarray, rule) -> np.ndarray:
    """``(F, phi)`` for quadrature data ``F`` of shape ``(nc, nq, ncomp)``."""
    rule = _rule(rule)
    phi, _ = space.tabulate(rule)
    W = quadrature_weights(space.mesh, rule)
    loc = np.einsum("cq,cqm,qi->cmi", W, F, phi, optimize=True)
    return scatter_vector(space, loc.reshape(len(loc), -1))


def load_rot_data(space: FeSpace, F: np.ndarray, rule) -> np.ndarray:
    """``(F, rot chi)`` for vector quadrature data ``F``."""
    _require_vector(space)
    rule = _rule(rule)
    _, G = space.tabulate(rule)
    W = quadrature_weights(space.mesh, rule)
    # F . (grad phi_i x e_c) = (F x grad phi_i)_c
    loc = np.einsum("cq,abm,cqa,cqib->cmi", W, EPS, F, G, optimize=True)
    return scatter_vector(space, loc.reshape(len(loc), -1))


def assemble_rhs(s: FeSpace, f, rule=None) -> np.ndarray:
    """``(f, v)`` for analytic or Field data."""
    rule = _rule(rule)
    F = values_at_quadrature(f, s.mesh, rule, s.ncomp)
    return load_vector_data(s, F, rule)


def assemble_rot_rhs(s: FeSpace, f, rule=None) -> np.ndarray:
    """``(f, rot chi)``."""
    rule = _rule(rule)
    F = values_at_quadrature(f, s.mesh, rule, 3)
    return load_rot_data(s, F, rule)


def cross_rhs(w, u, space: FeSpace, rule=None) -> np.ndarray:
    """``(w x u, v)`` for fixed fields ``w, u``."""
    rule = _rule(rule)
    m = space.mesh
    F = np.cross(values_at_quadrature(w, m, rule, 3), values_at_quadrature(u, m, rule, 3))
    return load_vector_data(space, F, rule)


def convection_rhs(a, v, space: FeSpace, rule=None, skew: bool = False) -> np.ndarray:
    """``b(a, v, chi) = (a . grad v, chi)`` for fixed ``a, v``."""
    rule = _rule(rule)
    m = space.mesh
    aq = values_at_quadrature(a, m, rule, 3)
    F = np.einsum("cqd,cqmd->cqm", aq, gradients_at_quadrature(v, m, rule))
    out = load_vector_data(space, F, rule)
    if skew:
        # - b(a, chi, v) = - (a . grad chi, v)
        phi, G = space.tabulate(rule)
        W = quadrature_weights(m, rule)
        vq = values_at_quadrature(v, m, rule, 3)
        loc = np.einsum("cq,cqd,cqid,cqm->cmi", W, aq, G, vq, optimize=True)
        out = 0.5 * (out - scatter_vector(space, loc.reshape(len(loc), -1)))
    return out


def assemble_fbc(P: Field, space: FeSpace, form: str = "volume", rule=None) -> np.ndarray:
    """Pressure boundary functional ``f_bc(P, chi)`` for every basis ``chi`` of ``space``.

    ``form="volume"`` evaluates ``(grad P, rot chi)``; ``form="surface"``
    evaluates ``int_{boundary} (grad P x n) . chi ds`` with the gradient
    trace taken from the adjacent cell. The two agree for conforming P.
    """
    _require_vector(space)
    if not isinstance(P, Field) or P.space.ncomp != 1:
        raise ValueError("f_bc needs a scalar H1-conforming pressure field")
    if form == "volume":
        rule = _rule(rule)
        gP = P.gradients(rule)[:, :, 0, :]
        return load_rot_data(space, gP, rule)
    if form != "surface":
        raise ValueError(f"unknown f_bc form {form!r}")
    m = space.mesh
    bf = m.boundary_facets
    if len(bf) == 0:
        raise ValueError("surface form needs boundary facet data")
    trule = triangle_rule(DEFAULT_DEGREE if rule is None else
                          (rule.degree if isinstance(rule, QuadratureRule) else int(rule)))
    areas = m.facet_areas()
    out = np.zeros(space.size)
    dlam = m.barycentric_gradients()
    for k in range(4):
        sel = np.flatnonzero(bf.local == k)
        if len(sel) == 0:
            continue
        bary = np.zeros((len(trule), 4))
        bary[:, FACET_VERTICES[k]] = trule.points
        cells = bf.cell[sel]
        chi = basis_values(space.degree, bary)  # (nq, nloc)
        dP = basis_bary_derivatives(P.space.degree, bary)  # (nq, nlocP, 4)
        gradP_loc = np.einsum("qik,ckd->cqid", dP, dlam[cells])
        Ploc = P.coefficients[P.space.cell_dofs[cells]]
        gP = np.einsum("cqid,ci->cqd", gradP_loc, Ploc)
        integrand = np.cross(gP, bf.normal[sel][:, None, :])  # (ns, nq, 3)
        W = 2.0 * areas[sel][:, None] * trule.weights[None, :]
        loc = np.einsum("sq,sqm,qi->smi", W, integrand, chi)
        out += np.bincount(space.cell_dofs[cells].ravel(), loc.reshape(len(sel), -1).ravel(),
                           minlength=space.size)
    return out


def export_matrix(path, A) -> None:
    """Write a sparse matrix in MatrixMarket coordinate format."""
    scipy.io.mmwrite(str(path), sp.coo_matrix(A))


def _require_vector(s: FeSpace):
    if s.ncomp != 3:
        raise ValueError(f"{s.family} is not a vector space")


# ---------------------------------------------------------------------------
# pointwise evaluation operators
# ---------------------------------------------------------------------------
# Rows are ordered (cell, point, component); ``weight_diagonal`` supplies the
# matching quadrature weights, so forms read ``E1.T @ Wd @ E2``.
def _point_operator(space: FeSpace, local: np.ndarray) -> sp.csr_matrix:
    """Sparse operator from ``local[c, q, m, k]`` = component m at point q of local dof k."""
    nc, nq, ncmp, nk = local.shape
    rows = np.broadcast_to(np.arange(nc * nq * ncmp).reshape(nc, nq, ncmp, 1), local.shape)
    cols = np.broadcast_to(space.cell_dofs[:, None, None, :], local.shape)
    E = sp.coo_matrix((local.ravel(), (rows.ravel(), cols.ravel())),
                      shape=(nc * nq * ncmp, space.size)).tocsr()
    E.eliminate_zeros()
    return E


def value_operator(space: FeSpace, rule=None) -> sp.csr_matrix:
    """Values at quadrature points; ``ncomp`` rows per point."""
    rule = _rule(rule)
    phi, _ = space.tabulate(rule)
    nc, n, k = space.mesh.n_cells, space.nloc, space.ncomp
    local = np.zeros((nc, len(rule), k, k * n))
    for m in range(k):
        local[:, :, m, m * n:(m + 1) * n] = phi[None]
    return _point_operator(space, local)


def gradient_operator(space: FeSpace, rule=None) -> sp.csr_matrix:
    """Gradient of a scalar space at quadrature points, three rows per point."""
    if space.ncomp != 1:
        raise ValueError("gradient operator needs a scalar space")
    rule = _rule(rule)
    _, G = space.tabulate(rule)
    return _point_operator(space, np.ascontiguousarray(np.swapaxes(G, 2, 3)))


def rot_operator(space: FeSpace, rule=None) -> sp.csr_matrix:
    """rot of a vector space at quadrature points, three rows per point."""
    _require_vector(space)
    rule = _rule(rule)
    _, G = space.tabulate(rule)
    n = space.nloc
    nc, nq = G.shape[:2]
    local = np.zeros((nc, nq, 3, 3 * n))
    # rot(phi e_d)_k = eps_{k l d} d_l phi
    for k in range(3):
        for d in range(3):
            for l in range(3):
                if EPS[k, l, d] != 0.0:
                    local[:, :, k, d * n:(d + 1) * n] += EPS[k, l, d] * G[..., l]
    return _point_operator(space, local)


def weight_diagonal(mesh, rule=None, ncomp: int = 3) -> sp.dia_matrix:
    rule = _rule(rule)
    w = np.repeat(quadrature_weights(mesh, rule).ravel(), ncomp)
    return sp.diags(w)


def pointwise_cross(a_values: np.ndarray) -> sp.csr_matrix:
    """Block-diagonal operator ``r -> a x r`` for point data ``a_values (nc, nq, 3)``."""
    a = a_values.reshape(-1, 3)
    npts = len(a)
    # (a x r)_c = eps_{c m k} a_m r_k
    blocks = np.einsum("cmk,pm->pck", EPS, a)
    rows = np.broadcast_to((3 * np.arange(npts))[:, None, None] + np.arange(3)[None, :, None], blocks.shape)
    cols = np.broadcast_to((3 * np.arange(npts))[:, None, None] + np.arange(3)[None, None, :], blocks.shape)
    return sp.csr_matrix((blocks.ravel(), (rows.ravel(), cols.ravel())), shape=(3 * npts, 3 * npts))
