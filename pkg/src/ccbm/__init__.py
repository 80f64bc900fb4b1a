"""Coupled complex boundary method for the exterior Bernoulli free-boundary problem.

2D P1 finite elements on annular meshes, Sobolev-gradient shape descent
with moving meshes, and a Kohn-Vogelius reference formulation.
"""

from .core import (AdjointSolution, GradientDensity, StateSolution, cost, gradient_density,
                   shape_gradient, solve_adjoint, solve_material_derivative, solve_state,
                   volume_form_derivative)
from .descent import DescentConfig, DescentResult, IterationRecord, run_descent
from .errors import (BadRadii, CCBMError, DegenerateEdge, DegenerateTriangle,
                     DirichletMismatch, EmptyPolyline, GeometryError, GeometryOverlap,
                     MeshInversion, MissingGeometry, NumericalError, SingularSystem,
                     StarShapeViolation, StepCollapse)
from .fem import ComplexFieldP1, DescentField
from .kv import kv_value, solve_kv_states
from .mesh import (Mesh, boundary_geometry, generate_annular_mesh, hausdorff_distance,
                   mesh_quality, move_mesh)
from .runner import run_scenario, sweep
from .scenarios import (PRESETS, Scenario, lambda_annulus_2d, lambda_annulus_3d, preset,
                        radial_exact_solution)
from .shapes import Circle, PolylineBoundary, Ribbon, lshape

__version__ = "0.1.0"
