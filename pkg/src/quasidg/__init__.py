"""Discontinuous Galerkin solvers for quasilinear elliptic problems.

Four flux families (BR1, BR2, SIPG, LDG) share one primal assembly built
on lifting operators, a damped Newton solver and a convergence-study CLI.
"""
from .mesh import Mesh, MeshError, build_structured, from_arrays, load_mesh
from .femspace import DGSpace, DofField, space_dimension
from .diffusion import (MODELS, DiffusionModel, get_model, make_manufactured,
                        probe_assumptions, register_model)
from .scheme import DGScheme, SchemeConfig, SchemeError, build_scheme
from .solver import NewtonConfig, SolveReport, newton_solve
from .analysis import NormSuite, PenaltyRule, auto_penalty, error_report

__version__ = "0.1.0"
