import numpy as np
import pytest
from hypothesis import given, strategies as st

from vvflow.mesh import FACET_VERTICES, build_box_mesh, cell_diameters, mesh_stats, refine_uniform

dims = st.integers(1, 3)
lengths = st.floats(0.25, 3.0)


@given(dims, dims, dims, lengths, lengths, lengths)
def test_box_mesh_invariants(nx, ny, nz, lx, ly, lz):
    m = build_box_mesh(nx, ny, nz, (lx, ly, lz))
    assert m.n_cells == 6 * nx * ny * nz
    assert m.n_vertices == (nx + 1) * (ny + 1) * (nz + 1)
    vol = m.volumes()
    assert np.all(vol > 0)
    assert vol.sum() == pytest.approx(lx * ly * lz, rel=1e-12)
    # one boundary facet pair per boundary square
    assert len(m.boundary_facets) == 4 * (nx * ny + ny * nz + nx * nz)
    assert m.facet_areas().sum() == pytest.approx(2 * (lx * ly + ly * lz + lx * lz), rel=1e-12)


def test_boundary_normals_unit_and_outward():
    m = build_box_mesh(2, 3, 2, (1.0, 2.0, 0.5))
    bf = m.boundary_facets
    assert np.allclose(np.linalg.norm(bf.normal, axis=1), 1.0)
    xc = m.vertices[m.cells[bf.cell]].mean(axis=1)
    fv = m.cells[bf.cell][np.arange(len(bf)), :][np.arange(len(bf))[:, None], FACET_VERTICES[bf.local]]
    fc = m.vertices[fv].mean(axis=1)
    assert np.all(np.einsum("ij,ij->i", fc - xc, bf.normal) > 0)


def test_every_interior_facet_shared_by_two_cells():
    m = build_box_mesh(2, 2, 2)
    faces = np.sort(m.cells[:, FACET_VERTICES].reshape(-1, 3), axis=1)
    _, counts = np.unique(faces, axis=0, return_counts=True)
    assert set(counts) <= {1, 2}
    assert (counts == 1).sum() == len(m.boundary_facets)


def test_stats_and_refinement():
    m = build_box_mesh(2, 2, 2)
    s = mesh_stats(m)
    assert s.volume == pytest.approx(1.0)
    assert s.surface_area == pytest.approx(6.0)
    assert s.h_max == pytest.approx(np.sqrt(3) / 2)
    assert cell_diameters(m).max() == pytest.approx(s.h_max)
    r = refine_uniform(m)
    assert r.shape == (4, 4, 4)
    assert mesh_stats(r).h_max == pytest.approx(s.h_max / 2)


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=20))
def test_locate_returns_valid_barycentrics(pts):
    m = build_box_mesh(2, 2, 2)
    p = np.array(pts, dtype=float)
    cells, lam = m.locate(p)
    assert np.all(lam >= -1e-12)
    assert np.allclose(lam.sum(axis=1), 1.0)
    assert np.allclose(np.einsum("pk,pkd->pd", lam, m.vertices[m.cells[cells]]), p)


def test_invalid_arguments():
    with pytest.raises(ValueError):
        build_box_mesh(0, 1, 1)
    with pytest.raises(ValueError):
        build_box_mesh(1, 1, 1, (1.0, -1.0, 1.0))
    with pytest.raises(ValueError):
        build_box_mesh(2, 2, 2).locate(np.array([[1.5, 0.5, 0.5]]))
