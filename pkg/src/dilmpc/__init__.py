"""MPC with stage costs generated from a system's dilation structure.

The package covers the full pipeline: declare or verify a dilation
structure (:mod:`dilmpc.homogeneity`), build the induced dilated-norm stage
cost (:mod:`dilmpc.cost`), solve finite-horizon problems and run the
receding-horizon loop (:mod:`dilmpc.ocp`, :mod:`dilmpc.mpc`), and estimate
cost-controllability growth functions (:mod:`dilmpc.analysis`).  A compiled
rollout kernel accelerates the inner integration loop when available; set
``DILMPC_PURE_PYTHON=1`` to force the fallback.
"""

__version__ = "0.1.0"

from ._backend import BACKEND
from .analysis import (GrowthTable, SetDescriptor, annulus, box,
                       check_averaged_cost_condition, check_bounded_extension,
                       estimate_growth, points, sample_states)
from .cost import (StageCost, check_cost_homogeneity, ell_star,
                   homogeneous_cost, quadratic_cost, weighted_homogeneous_cost)
from .homogeneity import (ApproximationCertificate, DilationStructure,
                          SamplingPlan, check_approximation,
                          check_homogeneity, check_trajectory_identity,
                          dilate_control, dilate_state, dilated_norm)
from .mpc import (ClosedLoopResult, MpcConfig, horizon_sweep, run_closed_loop,
                  smallest_stabilizing_horizon)
from .ocp import OcpSolution, OcpSpec, hjb_oracle_1d, solve, value_function
from .systems import (ControlSignal, ControlSystem, Trajectory, builtin,
                      integrate, steer_driftless_to_origin)

__all__ = [
    "ApproximationCertificate", "BACKEND", "ClosedLoopResult",
    "ControlSignal", "ControlSystem", "DilationStructure", "GrowthTable",
    "MpcConfig", "OcpSolution", "OcpSpec", "SamplingPlan", "SetDescriptor",
    "StageCost", "Trajectory", "annulus", "box", "builtin",
    "check_approximation", "check_averaged_cost_condition",
    "check_bounded_extension", "check_cost_homogeneity", "check_homogeneity",
    "check_trajectory_identity", "dilate_control",
    "dilate_state", "dilated_norm", "ell_star", "estimate_growth",
    "hjb_oracle_1d", "homogeneous_cost", "horizon_sweep", "integrate",
    "points", "quadratic_cost", "run_closed_loop", "sample_states",
    "smallest_stabilizing_horizon", "solve", "steer_driftless_to_origin",
    "value_function", "weighted_homogeneous_cost",
]
