"""Normal vector fields and distance functions of shapes from elliptic PDEs and kernel convolutions."""

from .elliptic import SolveReport, SolverError, SparseSystem, assemble_and_solve, solve_ode_1d
from .grid import Grid, ScalarField, VectorField, rasterize_indicator
from .shapes import Ball, Box, Cusp2D, HalfSpace, Polygon2D, Shape, ShapeError, Union

__all__ = [
    "Ball", "Box", "Cusp2D", "Grid", "HalfSpace", "Polygon2D", "ScalarField", "Shape", "ShapeError",
    "SolveReport", "SolverError", "SparseSystem", "Union", "VectorField", "assemble_and_solve",
    "rasterize_indicator", "solve_ode_1d",
]
__version__ = "0.1.0"
