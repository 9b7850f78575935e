"""Homogenization of hyperelastic energies on periodically pinned domains.

Finite element tooling for energies with pointwise constraints on small
periodic perforations: mesh generation, constraint families, nonlinear
capacity cell problems, constrained minimization, and convergence ladders
comparing perforated solutions against their homogenized limits.
"""

from .capacity import (CapacityEstimate, CellProblem, boundary_segment_capacity,
                       critical_case_density, disk_capacity, extrapolate,
                       half_space_factor, mirror_energy_identity, run_r_ladder,
                       solve_cell, write_ladder_csv)
from .constraints import (Circle, Cone, ConstraintSet, Cylinder, FamilyReport,
                          HalfPlane, PenaltyDensity, PointTarget, VerticalLine,
                          smooth_step, validate_family)
from .errors import (ConfigError, ConvergenceError, DataError, IllPosedError,
                     InadmissibleStateError, InvalidArgumentError, LayoutError,
                     MeshError, PinhomogError, ResourceBudgetError, ScalingError)
from .experiments import (EXPERIMENTS, BuiltExperiment, ConvergenceReport,
                          ExperimentConfig, build_experiment, default_config,
                          error_metric, interior_ball_constant, run_ladder,
                          solve_case, solve_limit)
from .io import read_report_csv, write_report_csv, write_trace_csv, write_vtk
from .layout import (PerforationElement, PerforationLayout, boundary_perforation,
                     bulk_perforation, interior_perforation_on_curve,
                     power_exponent)
from .materials import EnergyModel, density, density_gradient, neo_hookean, p_norm, recession
from .mesh import (BoxRegion, DiskRegion, Mesh, SegmentRegion, build_polar_mesh,
                   build_square_mesh, conforming_refine_to_layout,
                   geometric_radii, refine_to_sizes, reflect_half_mesh)
from .minimize import (DiscreteFunctional, DisplacementField, HardConstraintGroup,
                       PenaltyTerm, SolveOptions, SolveResult,
                       boundary_penalty_term, cell_penalty_term,
                       dirichlet_from_tags, edge_penalty_term,
                       hard_groups_from_layout, solve, solve_perforated)

__version__ = "0.1.0"
