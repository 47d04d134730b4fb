"""Structured tetrahedral meshes of axis-aligned boxes.

Every hexahedron of an ``nx x ny x nz`` grid is split into six tetrahedra
along its main diagonal (Kuhn/Freudenthal split). All hexes use the same
diagonal orientation, so the triangulation is conforming, uniformly
refined meshes are nested, and every edge midpoint of the mesh lies on the
half-spacing lattice. The quadratic node lattice therefore has
``(2nx+1)(2ny+1)(2nz+1)`` points, which the finite element spaces exploit.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

FACE_TAGS = ("x0", "x1", "y0", "y1", "z0", "z1")

# outward normal of each tagged face
FACE_NORMALS = {
    "x0": (-1.0, 0.0, 0.0),
    "x1": (1.0, 0.0, 0.0),
    "y0": (0.0, -1.0, 0.0),
    "y1": (0.0, 1.0, 0.0),
    "z0": (0.0, 0.0, -1.0),
    "z1": (0.0, 0.0, 1.0),
}

# local vertex triples of the facet opposite local vertex k
FACET_VERTICES = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])


def _kuhn_paths():
    """Six monotone lattice paths from (0,0,0) to (1,1,1), positively oriented."""
    paths = []
    for perm in itertools.permutations(range(3)):
        corner = np.zeros(3, dtype=int)
        verts = [corner.copy()]
        for axis in perm:
            corner[axis] += 1
            verts.append(corner.copy())
        verts = np.array(verts)
        e = verts[1:] - verts[0]
        if np.linalg.det(e.astype(float)) < 0:
            verts[[2, 3]] = verts[[3, 2]]
        paths.append(verts)
    return np.array(paths)  # (6, 4, 3)


_KUHN = _kuhn_paths()


@dataclass(frozen=True, eq=False)
class BoundaryFacets:
    """Oriented boundary facets; row ``i`` describes one facet."""

    cell: np.ndarray  # (nf,) cell index
    local: np.ndarray  # (nf,) local facet index (= opposite local vertex)
    normal: np.ndarray  # (nf, 3) outward unit normal
    tag: np.ndarray  # (nf,) index into FACE_TAGS

    def __len__(self):
        return len(self.cell)

    def tag_names(self):
        return [FACE_TAGS[t] for t in self.tag]


@dataclass(frozen=True, eq=False)
class Mesh:
    """Tetrahedral mesh of the box ``[0, Lx] x [0, Ly] x [0, Lz]``.

    Attributes
    ----------
    vertices : (nv, 3) float array
    cells : (nc, 4) int array, positively oriented
    boundary_facets : BoundaryFacets
    shape : (nx, ny, nz) hex counts
    extent : (Lx, Ly, Lz)
    lattice : (nv, 3) integer lattice coordinates of the vertices
    """

    vertices: np.ndarray
    cells: np.ndarray
    boundary_facets: BoundaryFacets
    shape: tuple
    extent: tuple
    lattice: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def spacing(self) -> np.ndarray:
        return np.asarray(self.extent, dtype=float) / np.asarray(self.shape)

    @property
    def h_max(self) -> float:
        return float(cell_diameters(self).max())

    # -- geometry, computed once per mesh -------------------------------
    def geometry(self):
        """Return ``(jac, det, inv)`` of the affine cell maps.

        ``jac[c]`` has columns ``x1 - x0, x2 - x0, x3 - x0``.
        """
        if "geometry" not in self._cache:
            x = self.vertices[self.cells]
            jac = np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0], x[:, 3] - x[:, 0]], axis=2)
            det = np.linalg.det(jac)
            inv = np.linalg.inv(jac)
            self._cache["geometry"] = (jac, det, inv)
        return self._cache["geometry"]

    def barycentric_gradients(self) -> np.ndarray:
        """(nc, 4, 3) gradients of the barycentric coordinates."""
        if "dlambda" not in self._cache:
            _, _, inv = self.geometry()
            d = np.empty((self.n_cells, 4, 3))
            d[:, 1:, :] = inv
            d[:, 0, :] = -inv.sum(axis=1)
            self._cache["dlambda"] = d
        return self._cache["dlambda"]

    def volumes(self) -> np.ndarray:
        return self.geometry()[1] / 6.0

    def facet_areas(self) -> np.ndarray:
        bf = self.boundary_facets
        tri = self.vertices[self.cells[bf.cell[:, None], FACET_VERTICES[bf.local]]]
        return 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)

    def locate(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Find containing cells and barycentric coordinates of ``points``.

        Raises
        ------
        ValueError
            If a point lies outside the box.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ext = np.asarray(self.extent, dtype=float)
        tol = 1e-12 * ext.max()
        if np.any(pts < -tol) or np.any(pts > ext + tol):
            bad = pts[np.any((pts < -tol) | (pts > ext + tol), axis=1)][0]
            raise ValueError(f"point {tuple(bad)} lies outside the domain")
        shape = np.asarray(self.shape)
        idx = np.clip(np.floor(pts / self.spacing).astype(int), 0, shape - 1)
        hexid = idx[:, 0] + shape[0] * (idx[:, 1] + shape[1] * idx[:, 2])
        candidates = 6 * hexid[:, None] + np.arange(6)  # (np, 6)
        _, _, inv = self.geometry()
        x0 = self.vertices[self.cells[candidates, 0]]  # (np, 6, 3)
        lam123 = np.einsum("pkij,pkj->pki", inv[candidates], pts[:, None, :] - x0)
        lam = np.concatenate([1.0 - lam123.sum(axis=2, keepdims=True), lam123], axis=2)
        best = np.argmax(lam.min(axis=2), axis=1)
        rows = np.arange(len(pts))
        return candidates[rows, best], lam[rows, best]


def cell_diameters(m: Mesh) -> np.ndarray:
    x = m.vertices[m.cells]
    diffs = x[:, :, None, :] - x[:, None, :, :]
    return np.sqrt((diffs**2).sum(axis=3)).reshape(m.n_cells, -1).max(axis=1)


def build_box_mesh(nx: int, ny: int, nz: int, extent=(1.0, 1.0, 1.0)) -> Mesh:
    """Six-tetrahedra-per-hex mesh of a box.

    >>> m = build_box_mesh(1, 1, 1)
    >>> m.n_vertices, m.n_cells
    (8, 6)
    """
    counts = (nx, ny, nz)
    for name, n in zip("xyz", counts):
        if int(n) != n or n < 1:
            raise ValueError(f"n{name} must be a positive integer, got {n!r}")
    extent = tuple(float(e) for e in extent)
    if len(extent) != 3 or min(extent) <= 0 or not np.all(np.isfinite(extent)):
        raise ValueError(f"extent must be three positive lengths, got {extent!r}")
    nx, ny, nz = (int(n) for n in counts)

    I, J, K = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), np.arange(nz + 1), indexing="ij")
    lattice = np.stack([I.ravel(order="F"), J.ravel(order="F"), K.ravel(order="F")], axis=1)
    vertices = lattice * (np.asarray(extent) / np.asarray(counts))

    hi, hj, hk = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    hexes = np.stack([hi.ravel(order="F"), hj.ravel(order="F"), hk.ravel(order="F")], axis=1)
    corners = hexes[:, None, None, :] + _KUHN[None]  # (nhex, 6, 4, 3)
    vid = corners[..., 0] + (nx + 1) * (corners[..., 1] + (ny + 1) * corners[..., 2])
    cells = vid.reshape(-1, 4)

    # boundary facets: all three facet vertices on one box face
    upper = np.array([nx, ny, nz])
    lat = lattice[cells[:, FACET_VERTICES]]  # (nc, 4, 3, 3)
    bcell, blocal, btag = [], [], []
    for axis in range(3):
        for side, value in ((0, 0), (1, upper[axis])):
            on = np.all(lat[..., axis] == value, axis=2)
            c, k = np.nonzero(on)
            bcell.append(c)
            blocal.append(k)
            btag.append(np.full(len(c), 2 * axis + side))
    bcell = np.concatenate(bcell)
    blocal = np.concatenate(blocal)
    btag = np.concatenate(btag)
    order = np.lexsort((blocal, bcell))
    bcell, blocal, btag = bcell[order], blocal[order], btag[order]
    normals = np.array([FACE_NORMALS[t] for t in FACE_TAGS])[btag]
    facets = BoundaryFacets(cell=bcell, local=blocal, normal=normals, tag=btag)
    return Mesh(vertices=vertices, cells=cells, boundary_facets=facets,
                shape=(nx, ny, nz), extent=extent, lattice=lattice)


def refine_uniform(m: Mesh) -> Mesh:
    """Halve the grid spacing; the result is nested in ``m``."""
    nx, ny, nz = m.shape
    return build_box_mesh(2 * nx, 2 * ny, 2 * nz, m.extent)


@dataclass(frozen=True)
class MeshStats:
    h_max: float
    volume: float
    surface_area: float
    n_cells: int


def mesh_stats(m: Mesh) -> MeshStats:
    return MeshStats(h_max=m.h_max, volume=float(m.volumes().sum()),
                     surface_area=float(m.facet_areas().sum()), n_cells=m.n_cells)
