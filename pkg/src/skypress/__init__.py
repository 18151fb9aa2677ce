"""Collision-avoidance score-table compression toolkit."""

from skypress.table import (
    Advisory,
    BeliefSample,
    CpaResult,
    GridSpec,
    ScoreTable,
    StateVector,
    belief_action,
    belief_scores,
    coc_penalty,
    cpa_geometry,
    default_grid,
    lookup_nearest,
    online_costs,
    optimal_action,
    read_table,
    write_table,
)

__all__ = [
    "Advisory",
    "BeliefSample",
    "CpaResult",
    "GridSpec",
    "ScoreTable",
    "StateVector",
    "belief_action",
    "belief_scores",
    "coc_penalty",
    "cpa_geometry",
    "default_grid",
    "lookup_nearest",
    "online_costs",
    "optimal_action",
    "read_table",
    "write_table",
]

__version__ = "0.1.0"
