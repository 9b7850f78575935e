"""Legacy-VTK and CSV writers for fields, solver traces, and reports.

All writers are deterministic: fixed field order, fixed float formatting,
newline='' on CSV files, so identical inputs give byte-identical output.
"""

from __future__ import annotations

import csv

import numpy as np

from .errors import InvalidArgumentError
from .mesh import Mesh


def write_vtk(path, mesh: Mesh, point_data: dict[str, np.ndarray] | None = None) -> None:
    """ASCII legacy VTK with triangle cells and named point data.

    Scalar arrays are written as SCALARS, (n, 2) or (n, 3) arrays as VECTORS
    (2d vectors are padded with a zero third component).
    """
    n = mesh.n_vertices()
    lines = ["# vtk DataFile Version 3.0", "pinhomog field", "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {n} double"]
    for x, y in mesh.vertices:
        lines.append(f"{x:.17g} {y:.17g} 0")
    t = len(mesh.triangles)
    lines.append(f"CELLS {t} {4 * t}")
    for a, b, c in mesh.triangles:
        lines.append(f"3 {a} {b} {c}")
    lines.append(f"CELL_TYPES {t}")
    lines.extend(["5"] * t)
    if point_data:
        lines.append(f"POINT_DATA {n}")
        for name, arr in point_data.items():
            arr = np.asarray(arr, dtype=float)
            if arr.ndim == 1 or arr.shape[1] == 1:
                vals = arr.reshape(-1)
                if len(vals) != n:
                    raise InvalidArgumentError(f"point data {name!r} has wrong length")
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines.extend(f"{v:.17g}" for v in vals)
            elif arr.shape == (n, 2) or arr.shape == (n, 3):
                lines.append(f"VECTORS {name} double")
                for row in arr:
                    z = row[2] if len(row) == 3 else 0.0
                    lines.append(f"{row[0]:.17g} {row[1]:.17g} {z:.17g}")
            else:
                raise InvalidArgumentError(f"point data {name!r} has shape {arr.shape}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_trace_csv(path, trace) -> None:
    """Solver trace rows (iter, energy, grad_norm, step)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "energy", "grad_norm", "step"])
        for it, E, gn, st in trace:
            w.writerow([it, f"{E:.17g}", f"{gn:.17g}", f"{st:.17g}"])


def write_report_csv(path, header, rows) -> None:
    """Generic report writer; floats get full precision, rest str()."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([f"{x:.17g}" if isinstance(x, float) else x for x in row])


def read_report_csv(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]
