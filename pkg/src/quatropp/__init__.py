"""Robust global registration for sparse LiDAR point clouds.

Pipeline: ground segmentation -> FPFH correspondences -> graph-based
outlier pruning -> graduated-non-convexity yaw estimation ->
component-wise consensus translation, with an optional ICP fine stage.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .core import (
    CorrespondenceSet,
    Correspondence,
    PointCloud,
    QuatroConfig,
    RegistrationReport,
    RigidMotion,
    compose,
    geodesic_angle,
    transform_cloud,
)
from .pipeline import PipelineMode, icp_point_to_point, register, register_c2f

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "PointCloud",
    "RigidMotion",
    "Correspondence",
    "CorrespondenceSet",
    "QuatroConfig",
    "RegistrationReport",
    "PipelineMode",
    "compose",
    "geodesic_angle",
    "transform_cloud",
    "register",
    "register_c2f",
    "icp_point_to_point",
    "__version__",
]
