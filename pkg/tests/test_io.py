"""Deterministic VTK and CSV writers."""

import numpy as np
import pytest

from pinhomog.errors import InvalidArgumentError
from pinhomog.io import (read_report_csv, write_report_csv, write_trace_csv,
                         write_vtk)
from pinhomog.mesh import build_square_mesh


def test_vtk_structure(tmp_path):
    mesh = build_square_mesh(1.0, 0.5)
    path = tmp_path / "field.vtk"
    scalar = np.arange(mesh.n_vertices(), dtype=float)
    vector = np.column_stack([scalar, -scalar])
    write_vtk(path, mesh, {"temp": scalar, "disp": vector})
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# vtk DataFile")
    assert f"POINTS {mesh.n_vertices()} double" in lines
    assert f"CELL_TYPES {len(mesh.triangles)}" in lines
    assert "SCALARS temp double 1" in lines
    assert "VECTORS disp double" in lines


def test_vtk_byte_identical(tmp_path):
    mesh = build_square_mesh(1.0, 0.5)
    data = {"u": np.linspace(0, 1, mesh.n_vertices())}
    p1, p2 = tmp_path / "a.vtk", tmp_path / "b.vtk"
    write_vtk(p1, mesh, data)
    write_vtk(p2, mesh, data)
    assert p1.read_bytes() == p2.read_bytes()


def test_vtk_rejects_bad_shapes(tmp_path):
    mesh = build_square_mesh(1.0, 0.5)
    with pytest.raises(InvalidArgumentError):
        write_vtk(tmp_path / "bad.vtk", mesh, {"u": np.zeros(3)})


def test_trace_csv(tmp_path):
    path = tmp_path / "trace.csv"
    write_trace_csv(path, [(0, 1.5, 0.25, 0.0), (1, 1.25, 0.125, 1.0)])
    header, rows = read_report_csv(path)
    assert header == ["iter", "energy", "grad_norm", "step"]
    assert len(rows) == 2
    assert float(rows[1][1]) == 1.25


def test_report_csv_round_trip(tmp_path):
    path = tmp_path / "report.csv"
    rows = [("bvp1", 0.5, 1.234567890123456789), ("bvp1", 0.25, 2.0)]
    write_report_csv(path, ["name", "eps", "value"], rows)
    header, read = read_report_csv(path)
    assert header == ["name", "eps", "value"]
    assert float(read[0][2]) == rows[0][2]  # full precision survives
