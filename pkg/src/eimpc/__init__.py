"""Learned warm starts and certified early termination for linear MPC."""

from .active_set import ActiveSetSolver, SolverOptions, SolveResult, Status, Termination, solve
from .batch_qp import BatchQp, assemble_batch, dual_objective, duality_gap, objective
from .certificates import Certificate, certify, recover_duals
from .geometry import Polytope
from .systems import LtiProblemSpec, build_benchmark

__version__ = "0.1.0"
