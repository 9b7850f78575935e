"""Build a perforated geometry and export it for inspection.

Creates the unit-square mesh, places the boundary pin lattice for
eps = 1/4 (so delta = 1/16), refines the mesh until each pin is resolved,
and writes a VTK file whose point field marks the pinned vertices.
"""

import pathlib

import numpy as np

from pinhomog.constraints import VerticalLine
from pinhomog.io import write_vtk
from pinhomog.layout import boundary_perforation
from pinhomog.mesh import build_square_mesh, conforming_refine_to_layout

here = pathlib.Path(__file__).parent
mesh = build_square_mesh(1.0, 1.0 / 32)
layout = boundary_perforation(mesh, "right", 0.25, 0.25 ** 2,
                              lambda site: VerticalLine(1.2))
fine = conforming_refine_to_layout(mesh, layout, 6.0)

pinned = np.zeros(fine.n_vertices())
for el in layout.elements:
    pinned[el.contains(fine.vertices, tol=1e-9)] = 1.0

print(f"base mesh: {mesh.n_vertices()} vertices, refined: {fine.n_vertices()}")
print(f"{len(layout.elements)} pins of size {layout.delta} at eps spacing "
      f"{layout.epsilon}")
write_vtk(here / "perforated_mesh.vtk", fine, {"pinned": pinned})
layout.to_csv(here / "perforation_layout.csv")
print(f"wrote {here / 'perforated_mesh.vtk'} and "
      f"{here / 'perforation_layout.csv'}")
