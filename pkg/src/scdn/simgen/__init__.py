"""Synthetic cities with planted pooling structure, skilled-courier
trajectory simulation, and end-to-end method evaluation."""

from .city import CourierSpec, GroundTruth, Scenario, ScenarioConfig, generate_city
from .trajectories import TrajectoryData, generate_sc_trajectories
from .runner import CycleRunner, ExecutedEvent
from .evaluate import (build_moa_instance, evaluate_pipeline, evaluate_seh_mode,
                       order_size_sweep, run_cycles)

__all__ = [
    "CourierSpec", "GroundTruth", "Scenario", "ScenarioConfig", "generate_city",
    "TrajectoryData", "generate_sc_trajectories",
    "CycleRunner", "ExecutedEvent",
    "build_moa_instance", "evaluate_pipeline", "evaluate_seh_mode",
    "order_size_sweep", "run_cycles",
]
