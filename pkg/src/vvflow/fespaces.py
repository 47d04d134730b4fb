"""Continuous Lagrange spaces on box meshes and the fields living on them.

Vector spaces store coefficients component-major: global dof
``c * n_nodes + node``. Essential constraints are homogeneous and nodal, so
a constrained dof is simply pinned to zero; ``free`` lists the remaining
unknowns that enter the linear systems.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .mesh import Mesh
from .quadrature import QuadratureRule

# local edge ordering of the quadratic element: (a, b) vertex pairs
EDGES = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]])

CONSTRAINTS = ("none", "zero-trace", "zero-normal-trace", "zero-tangential-trace",
               "zero-mean-multiplier", "boundary-supported")


# ---------------------------------------------------------------------------
# reference basis in barycentric coordinates
# ---------------------------------------------------------------------------
def basis_values(degree: int, bary: np.ndarray) -> np.ndarray:
    """Shape functions at barycentric points, ``(npts, nloc)``."""
    lam = np.asarray(bary)
    if degree == 1:
        return lam.copy()
    a, b = EDGES[:, 0], EDGES[:, 1]
    return np.concatenate([lam * (2.0 * lam - 1.0), 4.0 * lam[:, a] * lam[:, b]], axis=1)


def basis_bary_derivatives(degree: int, bary: np.ndarray) -> np.ndarray:
    """Derivatives with respect to the four barycentric coordinates, ``(npts, nloc, 4)``."""
    lam = np.asarray(bary)
    npts = len(lam)
    if degree == 1:
        return np.broadcast_to(np.eye(4), (npts, 4, 4)).copy()
    d = np.zeros((npts, 10, 4))
    for i in range(4):
        d[:, i, i] = 4.0 * lam[:, i] - 1.0
    for e, (a, b) in enumerate(EDGES):
        d[:, 4 + e, a] = 4.0 * lam[:, b]
        d[:, 4 + e, b] = 4.0 * lam[:, a]
    return d


def basis_bary_hessian(degree: int) -> np.ndarray:
    """Constant second barycentric derivatives, ``(nloc, 4, 4)``."""
    if degree == 1:
        return np.zeros((4, 4, 4))
    h = np.zeros((10, 4, 4))
    for i in range(4):
        h[i, i, i] = 4.0
    for e, (a, b) in enumerate(EDGES):
        h[4 + e, a, b] = h[4 + e, b, a] = 4.0
    return h


# ---------------------------------------------------------------------------
# spaces
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class FeSpace:
    """A continuous P1 or P2 space, scalar or 3-vector, with nodal constraints."""

    mesh: Mesh
    degree: int
    ncomp: int
    constraint: str
    cell_nodes: np.ndarray  # (nc, nloc) node index per local basis function
    node_lattice: np.ndarray  # (nn, 3) integer coordinates on the node lattice
    fixed: np.ndarray  # (size,) True where the dof is pinned to zero
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def family(self) -> str:
        return ("vector" if self.ncomp == 3 else "scalar") + f"-P{self.degree}"

    @property
    def n_nodes(self) -> int:
        return len(self.node_lattice)

    @property
    def size(self) -> int:
        return self.ncomp * self.n_nodes

    @property
    def nloc(self) -> int:
        return self.cell_nodes.shape[1]

    @property
    def lattice_scale(self) -> int:
        return 2 if self.degree == 2 else 1

    @property
    def node_coords(self) -> np.ndarray:
        h = self.mesh.spacing / self.lattice_scale
        return self.node_lattice * h

    @property
    def dof_coords(self) -> np.ndarray:
        """(size, 3) coordinates of the node carrying each dof."""
        return np.tile(self.node_coords, (self.ncomp, 1))

    @property
    def free(self) -> np.ndarray:
        if "free" not in self._cache:
            self._cache["free"] = np.flatnonzero(~self.fixed)
        return self._cache["free"]

    @property
    def n_dofs(self) -> int:
        """Number of unconstrained dofs."""
        return len(self.free)

    @property
    def constrained_dofs(self) -> np.ndarray:
        return np.flatnonzero(self.fixed)

    @property
    def cell_dofs(self) -> np.ndarray:
        """(nc, ncomp * nloc) global dofs, component-major within a cell."""
        if "cell_dofs" not in self._cache:
            nn = self.n_nodes
            self._cache["cell_dofs"] = np.concatenate(
                [c * nn + self.cell_nodes for c in range(self.ncomp)], axis=1)
        return self._cache["cell_dofs"]

    def boundary_node_mask(self) -> np.ndarray:
        """(nn, 3) bool: node lies on the face pair orthogonal to each axis."""
        upper = np.asarray(self.mesh.shape) * self.lattice_scale
        return (self.node_lattice == 0) | (self.node_lattice == upper)

    def mean_vector(self) -> np.ndarray:
        """``m_i = integral of phi_i`` for a scalar space."""
        if self.ncomp != 1:
            raise ValueError("mean functional is defined for scalar spaces only")
        if "mean" not in self._cache:
            from .quadrature import tetrahedron_rule
            rule = tetrahedron_rule(2)
            phi = basis_values(self.degree, rule.points)
            vol = self.mesh.volumes()
            local = 6.0 * vol[:, None] * (rule.weights @ phi)[None, :]
            self._cache["mean"] = np.bincount(self.cell_nodes.ravel(), local.ravel(),
                                              minlength=self.n_nodes)
        return self._cache["mean"]

    # -- quadrature tabulation --------------------------------------------
    def tabulate(self, rule: QuadratureRule):
        """Reference values ``(nq, nloc)`` and physical gradients ``(nc, nq, nloc, 3)``."""
        key = ("tab", self.degree, id(rule))
        store = self.mesh._cache
        if key not in store:
            phi = basis_values(self.degree, rule.points)
            dphi = basis_bary_derivatives(self.degree, rule.points)
            dlam = self.mesh.barycentric_gradients()
            if self.degree == 1:
                grads = np.broadcast_to(dlam[:, None, :, :], (len(dlam), len(rule), 4, 3))
            else:
                grads = np.einsum("qik,ckd->cqid", dphi, dlam, optimize=True)
            store[key] = (phi, grads, rule)  # keep rule alive so id stays unique
        phi, grads, _ = store[key]
        return phi, grads

    def hessians(self) -> np.ndarray:
        """(nc, nloc, 3, 3) constant basis Hessians."""
        key = ("hess", self.degree)
        store = self.mesh._cache
        if key not in store:
            dlam = self.mesh.barycentric_gradients()
            hb = basis_bary_hessian(self.degree)
            store[key] = np.einsum("ikl,cka,clb->ciab", hb, dlam, dlam, optimize=True)
        return store[key]


def _lagrange_nodes(m: Mesh, degree: int):
    if degree == 1:
        return m.cells.copy(), m.lattice.copy()
    nx, ny, nz = m.shape
    dims = np.array([2 * nx + 1, 2 * ny + 1, 2 * nz + 1])
    vlat = 2 * m.lattice[m.cells]  # (nc, 4, 3)
    elat = (vlat[:, EDGES[:, 0]] + vlat[:, EDGES[:, 1]]) // 2  # (nc, 6, 3)
    clat = np.concatenate([vlat, elat], axis=1)
    cell_nodes = clat[..., 0] + dims[0] * (clat[..., 1] + dims[1] * clat[..., 2])
    I, J, K = np.meshgrid(*(np.arange(d) for d in dims), indexing="ij")
    lattice = np.stack([I.ravel(order="F"), J.ravel(order="F"), K.ravel(order="F")], axis=1)
    return cell_nodes, lattice


def build_space(m: Mesh, degree: int, ncomp: int, constraint: str = "none") -> FeSpace:
    if constraint not in CONSTRAINTS:
        raise ValueError(f"unknown constraint {constraint!r}")
    if degree not in (1, 2) or ncomp not in (1, 3):
        raise ValueError("supported families: scalar-P1, scalar-P2, vector-P2")
    cell_nodes, lattice = _lagrange_nodes(m, degree)
    scale = 2 if degree == 2 else 1
    on_face = (lattice == 0) | (lattice == np.asarray(m.shape) * scale)  # (nn, 3)
    nn = len(lattice)
    if constraint == "zero-trace":
        fixed = np.tile(on_face.any(axis=1), ncomp)
    elif constraint == "zero-normal-trace":
        if ncomp != 3:
            raise ValueError("zero-normal-trace needs a vector space")
        # component c is the normal component on the faces orthogonal to axis c
        fixed = on_face.T.ravel()
    elif constraint == "zero-tangential-trace":
        if ncomp != 3:
            raise ValueError("zero-tangential-trace needs a vector space")
        # component c is tangential on every face not orthogonal to axis c
        fixed = np.concatenate([on_face[:, [a for a in range(3) if a != c]].any(axis=1)
                                for c in range(3)])
    elif constraint == "boundary-supported":
        # only boundary nodes carry values; interior dofs are pinned
        fixed = np.tile(~on_face.any(axis=1), ncomp)
    else:
        fixed = np.zeros(ncomp * nn, dtype=bool)
    return FeSpace(mesh=m, degree=degree, ncomp=ncomp, constraint=constraint,
                   cell_nodes=cell_nodes, node_lattice=lattice, fixed=fixed)


def build_velocity_space(m: Mesh) -> FeSpace:
    """Vector P2 with homogeneous Dirichlet data (discrete H^1_0)."""
    return build_space(m, 2, 3, "zero-trace")


def build_vorticity_space(m: Mesh) -> FeSpace:
    """Vector P2 with vanishing normal component on every face."""
    return build_space(m, 2, 3, "zero-normal-trace")


def build_pressure_space(m: Mesh) -> FeSpace:
    """Scalar P1; zero mean is imposed through a bordered multiplier row."""
    return build_space(m, 1, 1, "zero-mean-multiplier")


def build_multiplier_space(m: Mesh) -> FeSpace:
    return build_space(m, 1, 1, "zero-mean-multiplier")


# ---------------------------------------------------------------------------
# analytic data
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class AnalyticField:
    """Closed-form field given by callables on ``(N, 3)`` point arrays.

    ``value`` returns ``(N,)`` for scalars or ``(N, 3)`` for vectors;
    ``grad`` (optional) returns ``(N, 3)`` or ``(N, 3, 3)`` with
    ``grad[:, i, j] = d f_i / d x_j``.
    """

    value: Callable
    grad: Callable | None = None
    ncomp: int = 3

    def __call__(self, x):
        return self.value(np.atleast_2d(x))


def _as_components(vals, ncomp, npts):
    vals = np.asarray(vals, dtype=float)
    if ncomp == 1:
        return np.broadcast_to(vals.reshape(-1) if vals.size > 1 else vals, (npts,)).reshape(npts, 1)
    return np.broadcast_to(vals, (npts, ncomp))


def quadrature_points(m: Mesh, rule: QuadratureRule) -> np.ndarray:
    """Physical quadrature points ``(nc, nq, 3)``."""
    key = ("qpts", id(rule))
    if key not in m._cache:
        m._cache[key] = (np.einsum("qk,ckd->cqd", rule.points, m.vertices[m.cells]), rule)
    return m._cache[key][0]


def quadrature_weights(m: Mesh, rule: QuadratureRule) -> np.ndarray:
    """Physical weights ``(nc, nq)``."""
    return np.abs(m.geometry()[1])[:, None] * rule.weights[None, :]


def values_at_quadrature(f, m: Mesh, rule: QuadratureRule, ncomp: int | None = None) -> np.ndarray:
    """Evaluate a Field, AnalyticField or plain callable at quadrature points.

    Returns ``(nc, nq, ncomp)``.
    """
    if isinstance(f, (Field, CompositeField)):
        return f.values(rule)
    x = quadrature_points(m, rule)
    nc, nq, _ = x.shape
    if isinstance(f, AnalyticField):
        ncomp = f.ncomp
        vals = f.value(x.reshape(-1, 3))
    elif callable(f):
        vals = f(x.reshape(-1, 3))
        if ncomp is None:
            ncomp = 1 if np.ndim(vals) <= 1 else np.shape(vals)[-1]
    else:
        raise TypeError(f"cannot evaluate {type(f).__name__} at quadrature points")
    return _as_components(vals, ncomp, nc * nq).reshape(nc, nq, ncomp)


def gradients_at_quadrature(f, m: Mesh, rule: QuadratureRule) -> np.ndarray:
    """Gradients ``(nc, nq, ncomp, 3)`` of a Field or AnalyticField with ``grad``."""
    if isinstance(f, (Field, CompositeField)):
        return f.gradients(rule)
    if isinstance(f, AnalyticField) and f.grad is not None:
        x = quadrature_points(m, rule)
        nc, nq, _ = x.shape
        g = np.asarray(f.grad(x.reshape(-1, 3)), dtype=float)
        return g.reshape(nc, nq, f.ncomp, 3)
    raise TypeError("gradient needs a Field or an AnalyticField with a grad callable")


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class Field:
    """Coefficient vector (full nodal length ``space.size``) bound to a space."""

    space: FeSpace
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        if c.shape != (self.space.size,):
            raise ValueError(f"coefficient length {c.shape} does not match space size {self.space.size}")
        object.__setattr__(self, "coefficients", c)

    @classmethod
    def zeros(cls, space: FeSpace) -> "Field":
        return cls(space, np.zeros(space.size))

    @classmethod
    def from_free(cls, space: FeSpace, x) -> "Field":
        c = np.zeros(space.size)
        c[space.free] = x
        return cls(space, c)

    @property
    def free_values(self) -> np.ndarray:
        return self.coefficients[self.space.free]

    def nodal(self) -> np.ndarray:
        """(nn,) or (nn, 3) nodal values."""
        nn = self.space.n_nodes
        if self.space.ncomp == 1:
            return self.coefficients.copy()
        return self.coefficients.reshape(3, nn).T.copy()

    def _local(self):
        return self.coefficients[self.space.cell_dofs].reshape(
            self.space.mesh.n_cells, self.space.ncomp, self.space.nloc)

    def values(self, rule: QuadratureRule) -> np.ndarray:
        phi, _ = self.space.tabulate(rule)
        return np.einsum("qi,cmi->cqm", phi, self._local(), optimize=True)

    def gradients(self, rule: QuadratureRule) -> np.ndarray:
        _, grads = self.space.tabulate(rule)
        return np.einsum("cqid,cmi->cqmd", grads, self._local(), optimize=True)

    def hessians(self) -> np.ndarray:
        """(nc, ncomp, 3, 3) cellwise Hessians (constant for P2)."""
        return np.einsum("ciab,cmi->cmab", self.space.hessians(), self._local(), optimize=True)

    def evaluate(self, points) -> np.ndarray:
        """Point values; raises ValueError outside the mesh."""
        cells, lam = self.space.mesh.locate(points)
        phi = basis_values(self.space.degree, lam)  # (np, nloc)
        loc = self._local()[cells]  # (np, ncomp, nloc)
        out = np.einsum("pi,pmi->pm", phi, loc)
        return out[:, 0] if self.space.ncomp == 1 else out

    __call__ = evaluate

    def evaluate_gradient(self, points) -> np.ndarray:
        """Point gradients ``(np, ncomp, 3)``; raises ValueError outside the mesh."""
        cells, lam = self.space.mesh.locate(points)
        dphi = basis_bary_derivatives(self.space.degree, lam)  # (np, nloc, 4)
        dlam = self.space.mesh.barycentric_gradients()[cells]  # (np, 4, 3)
        g = np.einsum("pik,pkd->pid", dphi, dlam)
        return np.einsum("pid,pmi->pmd", g, self._local()[cells])

    def __add__(self, other):
        _check_same(self, other)
        return Field(self.space, self.coefficients + other.coefficients)

    def __sub__(self, other):
        _check_same(self, other)
        return Field(self.space, self.coefficients - other.coefficients)

    def __mul__(self, s):
        return Field(self.space, float(s) * self.coefficients)

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.space, -self.coefficients)


class CompositeField:
    """Vector field given as a signed sum of vector fields and scalar gradients.

    Each term is ``(field, kind, coefficient)`` with kind ``"value"`` (a
    vector Field or analytic vector field) or ``"grad"`` (the gradient of a
    scalar Field). Used where the natural discrete object is not a single
    Lagrange field, e.g. ``v + grad s`` or ``g - grad q``.
    """

    ncomp = 3

    def __init__(self, mesh: Mesh, terms):
        self.mesh = mesh
        self.terms = [(f, kind, float(c)) for f, kind, c in terms]
        for f, kind, _ in self.terms:
            if kind not in ("value", "grad"):
                raise ValueError(f"unknown term kind {kind!r}")
            if kind == "grad" and not (isinstance(f, Field) and f.space.ncomp == 1):
                raise ValueError("gradient terms need a scalar Field")
            if isinstance(f, Field) and f.space.mesh is not mesh:
                raise ValueError("all terms must live on the same mesh")

    def values(self, rule: QuadratureRule) -> np.ndarray:
        out = 0.0
        for f, kind, c in self.terms:
            if kind == "value":
                out = out + c * values_at_quadrature(f, self.mesh, rule, 3)
            else:
                out = out + c * f.gradients(rule)[:, :, 0, :]
        return out

    def gradients(self, rule: QuadratureRule) -> np.ndarray:
        """(nc, nq, 3, 3) with ``[..., i, j] = d u_i / d x_j``."""
        out = 0.0
        nq = len(rule)
        for f, kind, c in self.terms:
            if kind == "value":
                out = out + c * gradients_at_quadrature(f, self.mesh, rule)
            else:
                h = f.hessians()[:, 0]  # (nc, 3, 3), constant per cell
                out = out + c * np.broadcast_to(h[:, None], (len(h), nq, 3, 3))
        return out

    def rot(self, rule: QuadratureRule) -> np.ndarray:
        return curl_from_gradients(self.gradients(rule))

    def evaluate(self, points) -> np.ndarray:
        pts = np.atleast_2d(points)
        out = np.zeros((len(pts), 3))
        for f, kind, c in self.terms:
            if kind == "value":
                out += c * np.asarray(f(pts) if not isinstance(f, Field) else f.evaluate(pts))
            else:
                out += c * f.evaluate_gradient(pts)[:, 0, :]
        return out

    __call__ = evaluate


def curl_from_gradients(g: np.ndarray) -> np.ndarray:
    """rot from a gradient array ``[..., i, j] = d u_i / d x_j``."""
    return np.stack([g[..., 2, 1] - g[..., 1, 2], g[..., 0, 2] - g[..., 2, 0],
                     g[..., 1, 0] - g[..., 0, 1]], axis=-1)


def _check_same(a: Field, b: Field):
    if not isinstance(b, Field) or a.space is not b.space:
        raise ValueError("fields live on different spaces")


def interpolate(s: FeSpace, g) -> Field:
    """Nodal interpolant of ``g``; constrained dofs are set to zero."""
    x = s.node_coords
    if isinstance(g, Field):
        vals = g.evaluate(x)
    else:
        vals = g(x) if callable(g) else g
    vals = np.asarray(vals, dtype=float)
    nn = s.n_nodes
    if s.ncomp == 1:
        c = np.broadcast_to(vals.reshape(-1) if vals.size > 1 else vals, (nn,)).copy()
    else:
        c = np.broadcast_to(vals, (nn, 3)).T.ravel().copy()
    c[s.fixed] = 0.0
    return Field(s, c)


def evaluate(f: Field, x) -> np.ndarray:
    return f.evaluate(x)


@dataclass(frozen=True, eq=False)
class State:
    """Discrete solution tuple (u, P, w, eta) on one mesh."""

    u: Field
    P: Field
    w: Field
    eta: Field

    def __post_init__(self):
        meshes = {id(f.space.mesh) for f in (self.u, self.P, self.w, self.eta)}
        if len(meshes) != 1:
            raise ValueError("all State fields must share one mesh")

    @property
    def mesh(self) -> Mesh:
        return self.u.space.mesh

    def combine(self, other: "State", theta: float) -> "State":
        """``(1 - theta) * self + theta * other``."""
        mix = lambda a, b: Field(a.space, (1.0 - theta) * a.coefficients + theta * b.coefficients)
        return State(mix(self.u, other.u), mix(self.P, other.P), mix(self.w, other.w),
                     mix(self.eta, other.eta))


@dataclass(frozen=True, eq=False)
class Spaces:
    """The four spaces of the coupled problem on one mesh."""

    mesh: Mesh
    X: FeSpace
    Q: FeSpace
    W: FeSpace
    L: FeSpace

    @classmethod
    def build(cls, m: Mesh) -> "Spaces":
        return cls(m, build_velocity_space(m), build_pressure_space(m),
                   build_vorticity_space(m), build_multiplier_space(m))

    def zero_state(self) -> State:
        return State(Field.zeros(self.X), Field.zeros(self.Q), Field.zeros(self.W),
                     Field.zeros(self.L))
