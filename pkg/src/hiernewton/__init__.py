"""Hierarchical Newton's method for prioritised least-squares control of planar chains.

Modules: ``robot_model`` (kinematics, derivatives, dynamics), ``hlsp``
(lexicographic least-squares active-set solver), ``control`` (task compilation,
hierarchical Hessian, GN/Newton switch), ``sim`` (closed-loop simulation and
scenarios), ``cli`` (command line).
"""

from . import control, hlsp, robot_model, sim
from .control import Controller, Formulation, Method, Mode, TaskKind, TaskSpec
from .hlsp import Hierarchy, HlspSolver, PriorityLevel, Relation, SolverOptions, solve
from .robot_model import PlanarChain
from .sim import Scenario, TrajectoryLog, run_scenario

__all__ = [
    "control",
    "hlsp",
    "robot_model",
    "sim",
    "Controller",
    "Formulation",
    "Method",
    "Mode",
    "TaskKind",
    "TaskSpec",
    "Hierarchy",
    "HlspSolver",
    "PriorityLevel",
    "Relation",
    "SolverOptions",
    "solve",
    "PlanarChain",
    "Scenario",
    "TrajectoryLog",
    "run_scenario",
]

__version__ = "0.1.0"
