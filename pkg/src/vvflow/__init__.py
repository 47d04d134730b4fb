"""Finite-element solver for the stationary velocity-vorticity Navier-Stokes
system on a box with no-slip velocity and natural vorticity boundary
conditions."""
from .fespaces import AnalyticField, CompositeField, Field, Spaces, State, build_space
from .fieldcalc import helmholtz_decompose, norms, star_norm
from .manufactured import make_manufactured_case, make_nonstd_case
from .mesh import build_box_mesh, mesh_stats, refine_uniform
from .picard import PicardConfig, PicardError, VVSProblem, solve_vvs
from .stokes import NonstdParams, NonstdStokesOperator, StokesOperator, TInput

__version__ = "0.1.0"

__all__ = [
    "AnalyticField", "CompositeField", "Field", "NonstdParams", "NonstdStokesOperator",
    "PicardConfig", "PicardError", "Spaces", "State", "StokesOperator", "TInput", "VVSProblem",
    "build_box_mesh", "build_space", "helmholtz_decompose", "make_manufactured_case",
    "make_nonstd_case", "mesh_stats", "norms", "refine_uniform", "solve_vvs", "star_norm",
    "__version__",
]
