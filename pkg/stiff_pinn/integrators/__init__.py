# Reference ODE integrators and the Jacobian stiffness analyzer
from .bdf import BdfSolver, integrate_bdf
from .dopri5 import Dopri5Solver, integrate_dopri5
from .stiffness import hessenberg, qr_eigenvalues, stiffness_ratio, stiffness_spectrum
from .trajectory import METHODS, SolutionTrajectory, SolverConfig, StepStats

__all__ = [
    "BdfSolver",
    "Dopri5Solver",
    "hessenberg",
    "integrate_bdf",
    "integrate_dopri5",
    "METHODS",
    "qr_eigenvalues",
    "SolutionTrajectory",
    "SolverConfig",
    "StepStats",
    "stiffness_ratio",
    "stiffness_spectrum",
]
