"""Adaptive edge-element solver for exterior Maxwell scattering with a
truncated Dirichlet-to-Neumann boundary condition on a sphere."""
from .driver import RunConfig, adaptive_solve, export_csv, export_vtk, fit_slope, load_config
from .dtn import WaveParams, apply_dtn, choose_N, dtn_factors
from .mesh import GeometryDescriptor, Mesh, load_mesh, save_mesh, validate

__all__ = [
    "RunConfig",
    "adaptive_solve",
    "export_csv",
    "export_vtk",
    "fit_slope",
    "load_config",
    "WaveParams",
    "apply_dtn",
    "choose_N",
    "dtn_factors",
    "GeometryDescriptor",
    "Mesh",
    "load_mesh",
    "save_mesh",
    "validate",
]
__version__ = "0.1.0"
