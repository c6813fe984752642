"""Per-cycle order-to-courier assignment: insertion routing, matching-degree
scoring, HPP-based search-space pruning, and the hotspot fast mode."""

from .routing import (Courier, InsertionPlan, OnHandOrder, Order, Route, Task,
                      TravelModel, plan_route_insertion, seh_md)
from .moa import (Assignment, AssignmentEntry, DispatchReport, ExactCaps, GoalWeights,
                  MoaInstance, combine_orders, md_score, recall_couriers,
                  ruled_pairs, solve_moa_exact, solve_moa_iterative)
from .hotspot_mode import seh_assignment_cost, solve_seh_hillclimb

__all__ = [
    "Courier", "InsertionPlan", "OnHandOrder", "Order", "Route", "Task",
    "TravelModel", "plan_route_insertion", "seh_md",
    "Assignment", "AssignmentEntry", "DispatchReport", "ExactCaps", "GoalWeights",
    "MoaInstance", "combine_orders", "md_score", "recall_couriers",
    "ruled_pairs", "solve_moa_exact", "solve_moa_iterative",
    "seh_assignment_cost", "solve_seh_hillclimb",
]
