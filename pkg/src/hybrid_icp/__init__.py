"""Hybrid ICP for object pose refinement.

Point-to-point and point-to-plane ICP with nearest-neighbour or projective
data association, MVE-driven switching between the two, Cascading ICP with
rollback, and sequential fusion of SE(3) estimates.
"""

from .association import AssociationConfig, ObjectModel, Scene
from .hybrid import CascadeConfig, HybridConfig, dynamic_switch, run_cascading_icp, run_hybrid_icp
from .se3 import Pose, PoseWithCovariance, deterministic_average, exp_map, fuse_estimates, log_map
from .solvers import IcpConfig, IcpResult, run_icp
from .vsd import mean_vsd, mve, pose_vsd, vsd_error

__version__ = "0.1.0"

__all__ = [
    "AssociationConfig",
    "CascadeConfig",
    "HybridConfig",
    "IcpConfig",
    "IcpResult",
    "ObjectModel",
    "Pose",
    "PoseWithCovariance",
    "Scene",
    "deterministic_average",
    "dynamic_switch",
    "exp_map",
    "fuse_estimates",
    "log_map",
    "mean_vsd",
    "mve",
    "pose_vsd",
    "run_cascading_icp",
    "run_hybrid_icp",
    "run_icp",
    "vsd_error",
]
