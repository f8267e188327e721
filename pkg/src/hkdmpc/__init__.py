"""Quadruped locomotion MPC over a hybrid kinodynamic model, solved online
by a multi-phase constrained DDP solver."""

from .costs import CostWeights
from .dynamics import GimbalLock, ModeError
from .gait import ContactSchedule, GaitSpec, InvalidSpec, Phase
from .reference import CommandScript, MotionCommand, ReferenceTrajectory
from .robot import LegIndex, OutOfWorkspace, RobotParams, load_robot_params
from .runtime import MpcController, Plan, RunLog, SimulationDiverged, run_closed_loop
from .scenario import Scenario, SimConfig, load_scenario
from .solver import (
    AlState,
    DdpSolution,
    NonPositiveCurvature,
    OcProblem,
    RolloutDiverged,
    SolverOptions,
    solve,
    warm_start_replan,
)

__version__ = "0.1.0"
