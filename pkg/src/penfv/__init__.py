"""Penalized finite-volume solver for the Navier-Stokes-Fourier system on a torus."""
from .geometry import FluidShape, extend_initial_data, extend_reference, make_shape
from .mesh import DomainMask, Grid, build_grid, split_domain
from .scheme import BoundaryData, Scheme, SchemeParams, State, advance_step, run_simulation

__version__ = "0.1.0"

__all__ = [
    "BoundaryData", "DomainMask", "FluidShape", "Grid", "Scheme", "SchemeParams", "State",
    "advance_step", "build_grid", "extend_initial_data", "extend_reference", "make_shape",
    "run_simulation", "split_domain",
]
