"""Parametric-surface laboratory for the eigenset theory."""
from .experiments import (EXPERIMENTS, ExperimentReport, eigenset_report, euclidean_disk_experiment,
                          locally_minimal_check, run_experiment, sinc_contrast, two_sleeve_experiment,
                          verify_torus_field)
from .grid import (BUILTINS, ParametricGrid, grid_divergence, grid_gradient, heightfield, plane, sinc_revolution,
                   sphere, torus)
from .regions import RegionSpec, cap_mask, disk_mask, netv_of_set, sleeve_mask, trace_boundary

__all__ = [
    "ParametricGrid", "grid_gradient", "grid_divergence", "torus", "sphere", "sinc_revolution", "plane",
    "heightfield", "BUILTINS", "RegionSpec", "netv_of_set", "trace_boundary", "sleeve_mask", "cap_mask",
    "disk_mask", "EXPERIMENTS", "ExperimentReport", "eigenset_report", "locally_minimal_check",
    "verify_torus_field", "two_sleeve_experiment", "euclidean_disk_experiment", "sinc_contrast",
    "run_experiment",
]
