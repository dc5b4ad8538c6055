"""Semantic-geometric outlier removal and rigid registration of labelled point clouds."""

from .config import VARIANTS, PipelineConfig
from .core import (Correspondence, CorrespondenceSet, NeighborIndex, RigidTransform,
                   SemanticPointCloud, apply_transform, weighted_rigid_solve)
from .errors import SGORError
from .pipeline import RunResult, register, run_report

__all__ = [
    "Correspondence",
    "CorrespondenceSet",
    "NeighborIndex",
    "PipelineConfig",
    "RigidTransform",
    "RunResult",
    "SGORError",
    "SemanticPointCloud",
    "VARIANTS",
    "apply_transform",
    "register",
    "run_report",
    "weighted_rigid_solve",
]

__version__ = "0.1.0"
