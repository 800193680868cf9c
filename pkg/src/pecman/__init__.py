"""Collaborative multi-agent navigation with RRT* tree morphing and shared perception."""

from .coordination import PriorityTable, king_step, nonking_step, resolve, select_king
from .geometry import Disc, Point2, WallSegment, raycast
from .harness import BenchmarkSummary, TrialConfig, TrialResult, run_benchmark, run_trial
from .perception import Mode, PerceptionMessage, SharedMapState, collect_and_broadcast, independent_update
from .pursuit import pure_pursuit_step
from .tree import (
    LRZ,
    OHZ,
    MorphTree,
    RepairContext,
    Strategy,
    build_rrt_star,
    dynamic_morph,
    eager_repair,
    extract_path,
    full_rebuild,
    lazy_eager_repair,
    swift_repair,
    validate_tree,
)
from .world import Scenario, generate_floorplan, lidar_scan, spawn_pedestrians, step_pedestrians

__version__ = "0.1.0"

__all__ = [
    "BenchmarkSummary",
    "Disc",
    "LRZ",
    "Mode",
    "MorphTree",
    "OHZ",
    "PerceptionMessage",
    "Point2",
    "PriorityTable",
    "RepairContext",
    "Scenario",
    "SharedMapState",
    "Strategy",
    "TrialConfig",
    "TrialResult",
    "WallSegment",
    "build_rrt_star",
    "collect_and_broadcast",
    "dynamic_morph",
    "eager_repair",
    "extract_path",
    "full_rebuild",
    "generate_floorplan",
    "independent_update",
    "king_step",
    "lazy_eager_repair",
    "lidar_scan",
    "nonking_step",
    "pure_pursuit_step",
    "raycast",
    "resolve",
    "run_benchmark",
    "run_trial",
    "select_king",
    "spawn_pedestrians",
    "step_pedestrians",
    "swift_repair",
    "validate_tree",
]
