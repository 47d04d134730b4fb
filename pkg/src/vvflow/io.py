"""File output: VTK legacy ASCII meshes and fields, CSV tables, text reports."""
from __future__ import annotations

import csv
import math
import platform
from pathlib import Path

import numpy as np

from .fespaces import CompositeField, Field
from .mesh import Mesh, mesh_stats

VTK_TETRA = 10


def _num(v) -> str:
    """Shortest round-trip text of a number; integers stay integers."""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "" if math.isnan(v) else repr(v)
    return str(v)


def vertex_values(f, mesh: Mesh) -> np.ndarray:
    """Values of a Field, CompositeField or callable at the mesh vertices."""
    if isinstance(f, (Field, CompositeField)):
        return np.asarray(f.evaluate(mesh.vertices))
    return np.asarray(f(mesh.vertices))


def write_vtk(path, mesh: Mesh, point_data: dict | None = None, title: str = "vvflow output"):
    """Legacy VTK 3.0 ASCII unstructured grid of linear tetrahedra.

    ``point_data`` maps names to Fields, callables or arrays of shape
    ``(nv,)`` (SCALARS) or ``(nv, 3)`` (VECTORS).
    """
    path = Path(path)
    nv, nc = mesh.n_vertices, mesh.n_cells
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {nv} double"]
    lines += [" ".join(_num(c) for c in p) for p in mesh.vertices]
    lines.append(f"CELLS {nc} {5 * nc}")
    lines += ["4 " + " ".join(str(int(i)) for i in c) for c in mesh.cells]
    lines.append(f"CELL_TYPES {nc}")
    lines += [str(VTK_TETRA)] * nc
    if point_data:
        lines.append(f"POINT_DATA {nv}")
        for name, data in point_data.items():
            arr = data if isinstance(data, np.ndarray) else vertex_values(data, mesh)
            arr = np.asarray(arr, dtype=float)
            key = name.replace(" ", "_")
            if arr.ndim == 1 or arr.shape[1] == 1:
                lines += [f"SCALARS {key} double 1", "LOOKUP_TABLE default"]
                lines += [_num(v) for v in arr.reshape(-1)]
            elif arr.shape[1] == 3:
                lines.append(f"VECTORS {key} double")
                lines += [" ".join(_num(c) for c in row) for row in arr]
            else:
                raise ValueError(f"point data {name!r} must have 1 or 3 components")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_vtk_header(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [fh.readline().rstrip("\n") for _ in range(5)]


def write_csv(path, header, rows):
    """CSV with a header row; numbers use round-trip text, NaN is left empty."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_num(v) for v in row])
    return path


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_coefficients(path, f: Field):
    """Coefficient dump of a Field: dof index, node coordinates, component, value."""
    s = f.space
    coords = s.dof_coords
    nn = s.n_nodes
    rows = [[i, *coords[i], i // nn, f.coefficients[i], bool(s.fixed[i])] for i in range(s.size)]
    return write_csv(path, ["dof", "x", "y", "z", "component", "value", "constrained"], rows)


def provenance(config: dict, mesh: Mesh | None = None, tolerances: dict | None = None) -> list[str]:
    """Header lines: package and library versions, config echo, mesh statistics."""
    import scipy

    from . import __version__

    out = [f"vvflow {__version__}", f"python {platform.python_version()}",
           f"numpy {np.__version__}", f"scipy {scipy.__version__}", "[config]"]
    out += [f"{k} = {_num(v) if not isinstance(v, (tuple, list)) else ' '.join(_num(x) for x in v)}"
            for k, v in config.items()]
    if mesh is not None:
        st = mesh_stats(mesh)
        out += ["[mesh]", f"cells = {st.n_cells}", f"vertices = {mesh.n_vertices}",
                f"h_max = {_num(st.h_max)}", f"volume = {_num(st.volume)}",
                f"surface_area = {_num(st.surface_area)}"]
    if tolerances:
        out.append("[tolerances]")
        out += [f"{k} = {_num(v)}" for k, v in tolerances.items()]
    return out


def write_report(path, header_lines, sections: dict):
    """Plain-text report: provenance header, then one ``[name]`` block per section."""
    lines = ["# provenance"] + list(header_lines)
    for name, body in sections.items():
        lines.append(f"[{name}]")
        lines += list(body)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return Path(path)
