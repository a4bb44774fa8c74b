"""Top-level solvers: full-duplex fleet, half-duplex fleet, macro-only baseline."""

from __future__ import annotations

from .allocation import Assignment, aa_upb
from .placement import PlacementSolution, opt_dbs_placement
from .scenario import Duplex, Scenario, with_duplex

__all__ = ["aa_bud", "hd_dbs", "s_mbs"]


def aa_bud(scenario: Scenario, *, mode: str = "joint", altitudes=None,
           rounds: int = 1, trace_path=None) -> PlacementSolution:
    """Placement search combined with the greedy assignment solver.

    Drones keep the duplex mode declared in the scenario (full duplex by
    default).  With an empty drone fleet this degenerates to the macro-only
    baseline.
    """
    return opt_dbs_placement(scenario, mode=mode, altitudes=altitudes,
                             rounds=rounds, trace_path=trace_path)


def hd_dbs(scenario: Scenario, *, mode: str = "joint", altitudes=None,
           rounds: int = 1, trace_path=None) -> PlacementSolution:
    """Same pipeline with every drone forced to half duplex.

    Relaying then costs separate access and backhaul subcarriers out of the
    drone's budget, with no self-interference on the access link.
    """
    return opt_dbs_placement(with_duplex(scenario, Duplex.HALF), mode=mode,
                             altitudes=altitudes, rounds=rounds,
                             trace_path=trace_path)


def s_mbs(scenario: Scenario) -> Assignment:
    """Macro-only baseline: the assignment solver with no drones placed."""
    return aa_upb(scenario, {})
