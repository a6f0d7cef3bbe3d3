"""Spectral total-variation processing of surfaces."""
from .flow import (CMCFConfig, FlowError, FlowTrace, SolverConfig, TVFlow, cmcf_smooth, evolve,
                   fit_linear_decay, heat_flow)
from .mesh import TriMesh, face_geometry, vertex_mass, vertex_normals
from .mesh_io import load_mesh, read_mesh, save_mesh, write_mesh
from .operators import (OperatorConfig, build_divergence, build_gradient, p_laplace_beltrami, p_m1, p_m2, p_m3,
                        p_naive)
from .spectral import FilterSpec, Spectrum, apply_filter, band_energies, compute_spectrum

__version__ = "0.1.0"

__all__ = [
    "TriMesh", "face_geometry", "vertex_mass", "vertex_normals",
    "load_mesh", "save_mesh", "read_mesh", "write_mesh",
    "OperatorConfig", "build_gradient", "build_divergence", "p_laplace_beltrami",
    "p_naive", "p_m1", "p_m2", "p_m3",
    "SolverConfig", "FlowTrace", "FlowError", "TVFlow", "evolve", "heat_flow", "CMCFConfig", "cmcf_smooth",
    "fit_linear_decay",
    "FilterSpec", "Spectrum", "compute_spectrum", "apply_filter", "band_energies",
]
