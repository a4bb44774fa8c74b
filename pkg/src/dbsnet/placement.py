"""Drone placement search over the candidate grid.

``joint`` mode enumerates every combination of distinct horizontal sites
(all drones sharing one candidate altitude) and is exact relative to the
supplied evaluator; ``greedy`` mode places one drone at a time and is the
practical fallback for large grids.  Candidate evaluations are independent
and deterministic, so results do not depend on enumeration order.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass

from . import allocation
from .scenario import Scenario

__all__ = ["PlacementSolution", "opt_dbs_placement"]


@dataclass(frozen=True)
class PlacementSolution:
    """Chosen drone positions plus the assignment they induce."""

    positions: dict  # drone id -> ((x, y), altitude_m)
    assignment: allocation.Assignment
    throughput_bps: float


def _candidate_key(sites, altitude):
    """Flattened comparison key: site coordinates then the shared altitude."""
    flat = []
    for x, y in sites:
        flat.extend((x, y))
    flat.append(altitude)
    return tuple(flat)


class _TraceWriter:
    def __init__(self, path):
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(["candidate", "positions", "throughput_bps"])
        self._count = 0

    def row(self, positions, throughput):
        text = "|".join(f"{x:g}:{y:g}@{alt:g}"
                        for (x, y), alt in positions.values())
        self._writer.writerow([self._count, text, repr(float(throughput))])
        self._count += 1

    def close(self):
        self._fh.close()


class _FastEvaluator:
    """Throughput evaluation backed by cached per-(site, altitude) cost columns."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self._mbs = allocation.mbs_column(scenario)
        self._cache = {}

    def _column(self, drone, site, altitude):
        key = (site, altitude, drone.sc_budget, drone.power_budget_w, drone.duplex)
        col = self._cache.get(key)
        if col is None:
            col = allocation.drone_column(self.scenario, drone, site, altitude)
            self._cache[key] = col
        return col

    def table(self, positions):
        columns = [self._mbs]
        for drone in self.scenario.drones:
            if drone.id in positions:
                site, alt = positions[drone.id]
                columns.append(self._column(drone, site, alt))
        return allocation._stack_columns(self.scenario, columns)

    def throughput(self, positions):
        table = self.table(positions)
        assoc, _, _ = allocation.solve_table(table)
        return float(table.demands[assoc >= 0].sum())

    def solve(self, positions) -> allocation.Assignment:
        table = self.table(positions)
        assoc, _, _ = allocation.solve_table(table)
        assignment = allocation.assignment_from_table(table, assoc)
        allocation.validate_assignment(self.scenario, assignment, positions)
        return assignment


def _positions_for(drone_ids, sites, altitude):
    return {d: (site, altitude) for d, site in zip(drone_ids, sites)}


def opt_dbs_placement(scenario: Scenario, evaluator=None, *, mode: str = "joint",
                      altitudes=None, rounds: int = 1,
                      trace_path=None) -> PlacementSolution:
    """Maximize total carried demand over candidate drone positions.

    ``evaluator(scenario, positions) -> Assignment`` defaults to the greedy
    assignment solver.  Ties in throughput break toward the candidate with
    the lexicographically smallest (site coordinates, altitude) key.
    ``altitudes`` restricts the shared-altitude set (default: the grid's).
    """
    if mode not in ("joint", "greedy"):
        raise ValueError(f"unknown placement mode {mode!r}")
    drone_ids = [d.id for d in scenario.drones]
    sites = sorted(scenario.grid.horizontal_m)
    alts = tuple(altitudes) if altitudes is not None else scenario.grid.vertical_m
    fast = _FastEvaluator(scenario) if evaluator is None else None

    def solve_full(positions):
        if fast is not None:
            return fast.solve(positions)
        return evaluator(scenario, positions)

    def value(positions):
        if fast is not None:
            return fast.throughput(positions)
        return evaluator(scenario, positions).total_throughput_bps

    trace = _TraceWriter(trace_path) if trace_path else None
    try:
        if not drone_ids:
            assignment = solve_full({})
            if trace:
                trace.row({}, assignment.total_throughput_bps)
            return PlacementSolution({}, assignment,
                                     assignment.total_throughput_bps)
        if len(sites) < len(drone_ids):
            raise ValueError("fewer candidate sites than drones")
        if not alts:
            raise ValueError("empty altitude candidate set")

        if mode == "joint":
            best = None
            for combo in itertools.combinations(sites, len(drone_ids)):
                for alt in alts:
                    positions = _positions_for(drone_ids, combo, alt)
                    tp = value(positions)
                    if trace:
                        trace.row(positions, tp)
                    key = _candidate_key(combo, alt)
                    if best is None or tp > best[0] or (tp == best[0] and key < best[1]):
                        best = (tp, key, positions)
            positions = best[2]
        else:
            positions = _greedy_search(drone_ids, sites, alts, value, rounds, trace)

        assignment = solve_full(positions)
        return PlacementSolution(positions, assignment,
                                 assignment.total_throughput_bps)
    finally:
        if trace:
            trace.close()


def _greedy_search(drone_ids, sites, alts, value, rounds, trace):
    """Shared-altitude sequential placement, optionally refined in rounds."""
    best_overall = None
    for alt in alts:
        chosen = {}
        for drone in drone_ids:
            chosen[drone] = None
            best = None
            for site in sites:
                if site in (s for d, s in chosen.items() if d != drone and s):
                    continue
                trial = {d: (s, alt) for d, s in chosen.items() if s}
                trial[drone] = (site, alt)
                tp = value(trial)
                if trace:
                    trace.row(trial, tp)
                if best is None or tp > best[0] or (tp == best[0] and site < best[1]):
                    best = (tp, site)
            chosen[drone] = best[1]
        for _ in range(max(rounds - 1, 0)):
            for drone in drone_ids:
                current = chosen[drone]
                best = None
                for site in sites:
                    if site != current and site in chosen.values():
                        continue
                    trial = {d: (s, alt) for d, s in chosen.items()}
                    trial[drone] = (site, alt)
                    tp = value(trial)
                    if trace:
                        trace.row(trial, tp)
                    if best is None or tp > best[0] or (tp == best[0] and site < best[1]):
                        best = (tp, site)
                chosen[drone] = best[1]
        positions = {d: (s, alt) for d, s in chosen.items()}
        tp = value(positions)
        key = _candidate_key([chosen[d] for d in drone_ids], alt)
        if best_overall is None or tp > best_overall[0] or \
                (tp == best_overall[0] and key < best_overall[1]):
            best_overall = (tp, key, positions)
    return best_overall[2]
