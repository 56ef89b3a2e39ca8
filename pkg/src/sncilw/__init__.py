"""Spin-pole multi-soliton solutions of the periodic sncILW equation and its degenerations."""

from .backlund import (
    assemble_constraints,
    backlund_residuals,
    eigenpair,
    hermitian_reduce,
    is_hermitian_state,
    one_soliton_data,
    solve_initial_data,
)
from .dynamics import IntegratorConfig, SpinPoleState, Trajectory, evolve, scm_rhs, total_spins
from .elliptic import CaseKind, Lattice
from .scenario import Scenario, build_initial_data, load_scenario, resolve_scenario
from .verify import calibrate_multipliers, invariant_report, pde_residual
from .waves import WaveSample, analytic_time_derivative, eval_fields, periodic_grid, window_grid

__all__ = [
    "CaseKind", "IntegratorConfig", "Lattice", "Scenario", "SpinPoleState", "Trajectory", "WaveSample",
    "analytic_time_derivative", "assemble_constraints", "backlund_residuals", "build_initial_data",
    "calibrate_multipliers", "eigenpair", "eval_fields", "evolve", "hermitian_reduce", "invariant_report",
    "is_hermitian_state", "load_scenario", "one_soliton_data", "pde_residual", "periodic_grid",
    "resolve_scenario", "scm_rhs", "solve_initial_data", "total_spins", "window_grid",
]
__version__ = "0.1.0"
