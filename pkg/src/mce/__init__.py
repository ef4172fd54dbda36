"""Compatible macro-element FEM library (piecewise affine, exact divergence).

A 2D finite-element toolkit built on a six-way macro-triangle subdivision
with divergence-equalizing edge bubbles: every discrete velocity has
elementwise-constant divergence, which makes low-order elasticity
locking-free and the Stokes/Brinkman/Darcy family viscosity-robust.
"""

from .forms import (
    ConfigurationError,
    ProblemCoefficients,
    SaddleSystem,
    assemble_brinkman,
    assemble_elasticity,
    assemble_nitsche_brinkman_tangential,
    assemble_nitsche_elasticity,
    assemble_nitsche_slip,
    quadrature_rule,
)
from .mesh import (
    MacroMesh,
    MeshError,
    MeshFormatError,
    SubdividedMesh,
    build_mesh,
    generate_cook_mesh,
    generate_unit_square_mesh,
    read_mesh,
    subdivide,
    validate_mesh,
    write_mesh,
)
from .solve import SolveReport, SolverError, refine_iteratively, solve
from .space import (
    Dirichlet,
    EdgeBubble,
    FESpace,
    FieldSolution,
    Free,
    GeometryError,
    NormalZero,
    build_space,
    compute_bubble,
    eval_velocity,
    eval_velocity_gradient,
    fortin_interpolate,
    macro_divergence,
    project_p0,
)
from .vtk import write_vtk

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "Dirichlet",
    "EdgeBubble",
    "FESpace",
    "FieldSolution",
    "Free",
    "GeometryError",
    "MacroMesh",
    "MeshError",
    "MeshFormatError",
    "NormalZero",
    "ProblemCoefficients",
    "SaddleSystem",
    "SolveReport",
    "SolverError",
    "SubdividedMesh",
    "assemble_brinkman",
    "assemble_elasticity",
    "assemble_nitsche_brinkman_tangential",
    "assemble_nitsche_elasticity",
    "assemble_nitsche_slip",
    "build_mesh",
    "build_space",
    "compute_bubble",
    "eval_velocity",
    "eval_velocity_gradient",
    "fortin_interpolate",
    "generate_cook_mesh",
    "generate_unit_square_mesh",
    "macro_divergence",
    "project_p0",
    "quadrature_rule",
    "read_mesh",
    "refine_iteratively",
    "solve",
    "subdivide",
    "validate_mesh",
    "write_mesh",
    "write_vtk",
]
