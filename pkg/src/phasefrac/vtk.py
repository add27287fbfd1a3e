"""Legacy ASCII VTK unstructured-grid writer for field snapshots."""

import numpy as np

from .mesh import Mesh

# VTK cell type ids
_VTK_QUAD = 9
_VTK_QUADRATIC_QUAD = 23


def write_vtk(path, mesh: Mesh, point_vectors=None, point_scalars=None,
              cell_scalars=None, title="phasefrac snapshot"):
    """Write nodes/cells plus point and cell data as legacy ASCII VTK.

    ``point_vectors`` maps name -> (n_nodes, 2) arrays (padded with a zero
    z-component), ``point_scalars`` and ``cell_scalars`` map name -> 1-D
    arrays.
    """
    point_vectors = point_vectors or {}
    point_scalars = point_scalars or {}
    cell_scalars = cell_scalars or {}
    npe = mesh.elements.shape[1]
    cell_type = _VTK_QUAD if npe == 4 else _VTK_QUADRATIC_QUAD

    with open(path, "w") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write(f"{title}\n")
        f.write("ASCII\n")
        f.write("DATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {mesh.n_nodes} double\n")
        for x, y in mesh.nodes:
            f.write(f"{x:.9g} {y:.9g} 0\n")
        f.write(f"CELLS {mesh.n_elements} {mesh.n_elements * (npe + 1)}\n")
        for conn in mesh.elements:
            f.write(f"{npe} " + " ".join(str(int(i)) for i in conn) + "\n")
        f.write(f"CELL_TYPES {mesh.n_elements}\n")
        for _ in range(mesh.n_elements):
            f.write(f"{cell_type}\n")

        if point_vectors or point_scalars:
            f.write(f"POINT_DATA {mesh.n_nodes}\n")
            for name, vec in point_vectors.items():
                vec = np.asarray(vec)
                f.write(f"VECTORS {name} double\n")
                for vx, vy in vec:
                    f.write(f"{vx:.9g} {vy:.9g} 0\n")
            for name, arr in point_scalars.items():
                f.write(f"SCALARS {name} double 1\n")
                f.write("LOOKUP_TABLE default\n")
                for v in np.asarray(arr):
                    f.write(f"{v:.9g}\n")
        if cell_scalars:
            f.write(f"CELL_DATA {mesh.n_elements}\n")
            for name, arr in cell_scalars.items():
                f.write(f"SCALARS {name} double 1\n")
                f.write("LOOKUP_TABLE default\n")
                for v in np.asarray(arr):
                    f.write(f"{v:.9g}\n")


def lint_vtk(path) -> dict:
    """Structural check of a legacy VTK file; returns the parsed counts.

    Verifies the header, that POINTS/CELLS/CELL_TYPES counts are mutually
    consistent and that every data section has the advertised length.
    Raises ValueError on malformed files.
    """
    with open(path) as f:
        lines = [ln.rstrip("\n") for ln in f]
    if not lines[0].startswith("# vtk DataFile"):
        raise ValueError("missing VTK header")
    if lines[2].strip() != "ASCII":
        raise ValueError("not an ASCII VTK file")
    if lines[3].strip() != "DATASET UNSTRUCTURED_GRID":
        raise ValueError("not an unstructured grid")

    i = 4
    counts = {}
    n_points = n_cells = None
    while i < len(lines):
        tok = lines[i].split()
        if not tok:
            i += 1
            continue
        key = tok[0]
        if key == "POINTS":
            n_points = int(tok[1])
            for j in range(n_points):
                if len(lines[i + 1 + j].split()) != 3:
                    raise ValueError(f"bad point line {i + 1 + j}")
            counts["points"] = n_points
            i += 1 + n_points
        elif key == "CELLS":
            n_cells, total = int(tok[1]), int(tok[2])
            listed = 0
            for j in range(n_cells):
                row = lines[i + 1 + j].split()
                npe = int(row[0])
                if len(row) != npe + 1:
                    raise ValueError(f"bad cell line {i + 1 + j}")
                if max(int(v) for v in row[1:]) >= n_points:
                    raise ValueError("cell references missing point")
                listed += npe + 1
            if listed != total:
                raise ValueError("CELLS size field inconsistent")
            counts["cells"] = n_cells
            i += 1 + n_cells
        elif key == "CELL_TYPES":
            n = int(tok[1])
            if n != n_cells:
                raise ValueError("CELL_TYPES count mismatch")
            i += 1 + n
        elif key in ("POINT_DATA", "CELL_DATA"):
            expected = n_points if key == "POINT_DATA" else n_cells
            if int(tok[1]) != expected:
                raise ValueError(f"{key} count mismatch")
            i += 1
        elif key == "VECTORS":
            for j in range(n_points):
                if len(lines[i + 1 + j].split()) != 3:
                    raise ValueError(f"bad vector line {i + 1 + j}")
            i += 1 + n_points
        elif key == "SCALARS":
            block = n_points if "cells" not in counts or i < _cell_data_start(
                lines) else n_cells
            # LOOKUP_TABLE line follows, then the values
            if not lines[i + 1].startswith("LOOKUP_TABLE"):
                raise ValueError("SCALARS without LOOKUP_TABLE")
            i += 2 + block
        else:
            i += 1
    return counts


def _cell_data_start(lines):
    for idx, ln in enumerate(lines):
        if ln.startswith("CELL_DATA"):
            return idx
    return len(lines)
