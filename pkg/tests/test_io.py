import numpy as np
import pytest

from vvflow.fespaces import build_space, interpolate
from vvflow.io import (read_csv, read_vtk_header, write_coefficients, write_csv, write_report,
                       write_vtk, provenance)
from vvflow.mesh import build_box_mesh

M = build_box_mesh(1, 2, 1)


def test_vtk_layout(tmp_path):
    u = interpolate(build_space(M, 2, 3), lambda x: x * 2)
    p = write_vtk(tmp_path / "f.vtk", M, {"u": u, "s": np.arange(M.n_vertices, dtype=float)})
    lines = p.read_text().splitlines()
    assert read_vtk_header(p) == ["# vtk DataFile Version 3.0", "vvflow output", "ASCII",
                                  "DATASET UNSTRUCTURED_GRID", f"POINTS {M.n_vertices} double"]
    i = lines.index(f"CELLS {M.n_cells} {5 * M.n_cells}")
    assert lines[i + 1].startswith("4 ")
    j = lines.index(f"CELL_TYPES {M.n_cells}")
    assert set(lines[j + 1:j + 1 + M.n_cells]) == {"10"}
    assert f"POINT_DATA {M.n_vertices}" in lines
    k = lines.index("VECTORS u double")
    vals = np.array([[float(t) for t in ln.split()] for ln in lines[k + 1:k + 1 + M.n_vertices]])
    assert np.allclose(vals, 2 * M.vertices)
    assert "SCALARS s double 1" in lines
    with pytest.raises(ValueError):
        write_vtk(tmp_path / "g.vtk", M, {"bad": np.zeros((M.n_vertices, 2))})


def test_csv_roundtrip_and_determinism(tmp_path):
    rows = [[1, 0.1, float("nan"), True], [2, 1e-300, 3.0, False]]
    a = write_csv(tmp_path / "a.csv", ["i", "x", "y", "ok"], rows)
    b = write_csv(tmp_path / "b.csv", ["i", "x", "y", "ok"], rows)
    assert a.read_bytes() == b.read_bytes()
    assert b"\r" not in a.read_bytes()
    header, body = read_csv(a)
    assert header == ["i", "x", "y", "ok"]
    assert body[0] == ["1", "0.1", "", "True"]
    assert float(body[1][1]) == 1e-300


def test_coefficients_and_report(tmp_path):
    f = interpolate(build_space(M, 1, 1, "zero-mean-multiplier"), lambda x: x[:, 0])
    header, body = read_csv(write_coefficients(tmp_path / "c.csv", f))
    assert header[:2] == ["dof", "x"] and len(body) == f.space.size
    lines = provenance({"nu": 0.5, "mesh": (1, 2, 1)}, M, {"tol": 1e-10})
    assert lines[0].startswith("vvflow ")
    assert "mesh = 1 2 1" in lines and "cells = 12" in lines
    p = write_report(tmp_path / "r.txt", lines, {"result": ["x = 1"]})
    text = p.read_text().splitlines()
    assert text[0] == "# provenance" and text[-2:] == ["[result]", "x = 1"]
