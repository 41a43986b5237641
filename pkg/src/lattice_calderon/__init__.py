"""Discrete inverse conductivity problem on hypercubic lattices."""

from .forward import DtnMatrix, assemble_dtn, assemble_laplacian, boundary_current, solve_dirichlet
from .lattice import Lattice, SliceSets, build_lattice, corner_map, slice_sets
from .reconstruction import ReconstructionOptions, ReconstructionReport, reconstruct, reconstruct_from_corner
from .verification import compare, error_growth_study, run_property_suite

__all__ = [
    "DtnMatrix",
    "Lattice",
    "ReconstructionOptions",
    "ReconstructionReport",
    "SliceSets",
    "assemble_dtn",
    "assemble_laplacian",
    "boundary_current",
    "build_lattice",
    "compare",
    "corner_map",
    "error_growth_study",
    "reconstruct",
    "reconstruct_from_corner",
    "run_property_suite",
    "slice_sets",
    "solve_dirichlet",
]
