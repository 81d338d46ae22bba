"""Vanishing-viscosity experiments for compressible neo-Hookean viscoelastic flow on a half-space slab."""

from .grid import Grid, make_grid
from .geometry import FlowMapState, GeometricCache, compute_geometry
from .material import MaterialParams
from .boundary import BoundaryCondition, apply_bc, compat_project

__all__ = [
    "Grid",
    "make_grid",
    "FlowMapState",
    "GeometricCache",
    "compute_geometry",
    "MaterialParams",
    "BoundaryCondition",
    "apply_bc",
    "compat_project",
]
__version__ = "0.1.0"
