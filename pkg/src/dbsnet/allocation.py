"""Joint user association, bandwidth and power assignment for fixed drone positions.

The solver works on a precomputed cost table: for every (UE, station) pair,
the minimum number of subcarriers that satisfies the UE's rate demand at
that station.  Serving via a full-duplex drone needs one allocation reused
by access and backhaul; a half-duplex drone needs separate access and
backhaul subcarriers, both charged to the drone's budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import (
    ChannelParams,
    LinkGeometry,
    a2g_gain_linear,
    access_saturation_rate_bps,
    mbs_path_gain_linear,
)
from .scenario import BaseStation, Duplex, Scenario, StationKind, UserEquipment

__all__ = [
    "Assignment",
    "WeightEntry",
    "AssignmentError",
    "CostTable",
    "AaUpbReport",
    "min_bandwidth",
    "build_cost_table",
    "solve_table",
    "aa_upb",
    "aa_upb_report",
    "weight_table",
    "validate_assignment",
]

# Tolerance for floating comparisons on bps-scale quantities.
_RATE_TOL = 1e-6


class AssignmentError(ValueError):
    """An assignment violates one of the feasibility constraints."""


@dataclass(frozen=True)
class Assignment:
    """Decision variables of one solve.

    ``association`` maps every UE id to its serving station id, or ``None``
    when the UE is blocked.  The remaining maps cover served UEs only;
    ``sc_alloc`` counts all subcarriers the serving station spends on the
    UE (access plus backhaul for half-duplex relays).
    """

    association: dict
    sc_alloc: dict
    backhaul_power_w: dict
    achieved_rate_bps: dict
    total_throughput_bps: float

    @property
    def served_ids(self):
        return sorted(i for i, j in self.association.items() if j is not None)

    @property
    def blocked_ids(self):
        return sorted(i for i, j in self.association.items() if j is None)


@dataclass(frozen=True)
class WeightEntry:
    """Initial greedy ranking entry: a UE's cheapest station and density."""

    ue: int
    best_bs: int
    sc_needed: int
    weight: float  # demand per subcarrier, bps/SC

    def __post_init__(self):
        if self.sc_needed < 1 or self.weight <= 0:
            raise ValueError("weight entries need sc_needed >= 1 and weight > 0")


@dataclass
class _Column:
    """Per-station cost data over all UEs of a scenario."""

    station_id: int
    budget: int
    psd_w_per_sc: float  # 0 for the macro station
    cost: np.ndarray          # total SCs; inf where unservable
    rate: np.ndarray          # achieved link rate at that cost
    backhaul_sc: np.ndarray   # SCs carrying backhaul power


@dataclass
class CostTable:
    """Stacked per-station columns plus UE demands; the greedy solver input."""

    station_ids: list
    budgets: np.ndarray
    psd: np.ndarray
    cost: np.ndarray         # (n_ues, n_stations)
    rate: np.ndarray
    backhaul_sc: np.ndarray
    demands: np.ndarray
    ue_ids: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# Minimum-bandwidth search.
# ---------------------------------------------------------------------------


def _min_sc_bisect(rate_fn, demands, cap):
    """Vectorized minimal integer b in [1, cap] with rate_fn(b) >= demand.

    ``rate_fn`` must be nondecreasing in b; lanes that cannot be served at
    ``cap`` come back as inf.
    """
    demands = np.asarray(demands, dtype=float)
    n = demands.shape[0]
    feasible = rate_fn(np.full(n, float(cap))) >= demands
    lo = np.ones(n)
    hi = np.full(n, float(cap))
    hi[~feasible] = 1.0  # collapse dead lanes
    while True:
        active = lo < hi
        if not active.any():
            break
        mid = np.floor((lo + hi) / 2.0)
        probe = np.where(active, mid, 1.0)
        ok = active & (rate_fn(probe) >= demands)
        hi = np.where(ok, mid, hi)
        lo = np.where(active & ~ok, mid + 1.0, lo)
    return np.where(feasible, lo, np.inf)


def _min_sc_scalar(rate_fn, demand, cap):
    """Exponential bracket then binary search for one link; None if unservable."""
    if rate_fn(float(cap)) < demand:
        return None
    hi = 1
    while rate_fn(float(hi)) < demand:
        hi = min(hi * 2, cap)
    lo = max(hi // 2 + 1, 1) if hi > 1 else 1
    while lo < hi:
        mid = (lo + hi) // 2
        if rate_fn(float(mid)) >= demand:
            hi = mid
        else:
            lo = mid + 1
    return int(lo)


def _mbs_rate_fn(c_over_w, params: ChannelParams):
    """Direct uplink rate as a function of the subcarrier count.

    ``c_over_w`` is P_U * gain, possibly a vector over UEs; noise grows
    linearly with the allocated band so the SINR is C / (tau0*N0*b).
    """
    noise_sc = params.noise_per_sc_w
    tau0 = params.sc_bandwidth_hz

    def rate(b):
        return tau0 * b * np.log2(1.0 + c_over_w / (noise_sc * b))

    return rate


def _fd_rate_fn(c_acc, interference_w, g_backhaul, psd, params: ChannelParams):
    """Relay rate via a full-duplex drone at a shared subcarrier count.

    Access SINR carries the drone's self-interference (psd/cancellation per
    subcarrier); backhaul SINR sees the served UE's own uplink at the macro
    station because the spectrum is reused.
    """
    noise_sc = params.noise_per_sc_w
    tau0 = params.sc_bandwidth_hz
    d_per_sc = psd / params.si_cancellation_linear + noise_sc

    def rate(b):
        s_acc = c_acc / (d_per_sc * b)
        s_bh = psd * g_backhaul * b / (interference_w + noise_sc * b)
        return tau0 * b * np.minimum(np.log2(1.0 + s_acc), np.log2(1.0 + s_bh))

    return rate


def _hd_access_rate_fn(c_acc, params: ChannelParams):
    """Access rate toward a half-duplex drone: noise-limited only."""
    return _mbs_rate_fn(c_acc, params)


def _hd_backhaul_per_sc_bps(g_backhaul, psd, params: ChannelParams) -> float:
    """Backhaul rate per subcarrier for a half-duplex drone.

    Without spectrum reuse there is no cross interference and the per-SC
    SINR psd*g/(tau0*N0) does not depend on the allocation size.
    """
    sinr = psd * g_backhaul / params.noise_per_sc_w
    return params.sc_bandwidth_hz * math.log2(1.0 + sinr)


def _hd_backhaul_sc(demands, per_sc_bps):
    """Minimal backhaul subcarriers: ceil(demand / per-SC rate), exact at edges."""
    demands = np.asarray(demands, dtype=float)
    b = np.ceil(demands / per_sc_bps)
    b = np.where((b - 1.0) * per_sc_bps >= demands, b - 1.0, b)
    b = np.where(b * per_sc_bps < demands, b + 1.0, b)
    return np.maximum(b, 1.0)


# ---------------------------------------------------------------------------
# Cost-table construction.
# ---------------------------------------------------------------------------


def _ue_positions(scenario: Scenario) -> np.ndarray:
    return np.array([u.position_m[:2] for u in scenario.ues], dtype=float)


def mbs_gains(scenario: Scenario) -> np.ndarray:
    """Linear gains of every UE toward the macro station (fading included)."""
    mbs = scenario.mbs
    xy = _ue_positions(scenario)
    horiz = np.hypot(xy[:, 0] - mbs.position_m[0], xy[:, 1] - mbs.position_m[1])
    dist = np.hypot(horiz, mbs.position_m[2])
    return np.asarray(mbs_path_gain_linear(dist, scenario.channel))


def mbs_column(scenario: Scenario) -> _Column:
    params = scenario.channel
    mbs = scenario.mbs
    demands = np.array([u.rate_demand_bps for u in scenario.ues], dtype=float)
    c_over = params.ue_tx_power_w * mbs_gains(scenario)
    rate_fn = _mbs_rate_fn(c_over, params)
    cost = _min_sc_bisect(rate_fn, demands, mbs.sc_budget)
    rate = np.where(np.isfinite(cost), rate_fn(np.where(np.isfinite(cost), cost, 1.0)), 0.0)
    return _Column(station_id=mbs.id, budget=mbs.sc_budget, psd_w_per_sc=0.0,
                   cost=cost, rate=rate, backhaul_sc=np.zeros_like(cost))


def backhaul_gain(scenario: Scenario, xy, altitude_m: float) -> float:
    """Air/ground gain from a drone at (xy, altitude) to the macro mast."""
    mbs = scenario.mbs
    mast = mbs.position_m[2]
    if altitude_m <= mast:
        raise ValueError("drone altitude must exceed the macro mast height")
    horiz = math.hypot(xy[0] - mbs.position_m[0], xy[1] - mbs.position_m[1])
    geom = LinkGeometry(max(horiz, 1e-9), altitude_m - mast)
    return float(a2g_gain_linear(geom, scenario.channel))


def drone_column(scenario: Scenario, drone: BaseStation, xy,
                 altitude_m: float) -> _Column:
    """Cost column for one drone at a candidate position."""
    params = scenario.channel
    demands = np.array([u.rate_demand_bps for u in scenario.ues], dtype=float)
    ue_xy = _ue_positions(scenario)
    horiz = np.hypot(ue_xy[:, 0] - xy[0], ue_xy[:, 1] - xy[1])
    geom = LinkGeometry(np.maximum(horiz, 1e-9), np.full(horiz.shape, altitude_m))
    g_acc = np.asarray(a2g_gain_linear(geom, params))
    c_acc = params.ue_tx_power_w * g_acc
    g_bh = backhaul_gain(scenario, xy, altitude_m)
    psd = drone.psd_w_per_sc
    cap = drone.sc_budget

    if drone.duplex is Duplex.FULL:
        interference = params.ue_tx_power_w * mbs_gains(scenario)
        rate_fn = _fd_rate_fn(c_acc, interference, g_bh, psd, params)
        cost = _min_sc_bisect(rate_fn, demands, cap)
        safe = np.where(np.isfinite(cost), cost, 1.0)
        rate = np.where(np.isfinite(cost), rate_fn(safe), 0.0)
        backhaul_sc = np.where(np.isfinite(cost), cost, 0.0)
    else:
        acc_fn = _hd_access_rate_fn(c_acc, params)
        b_acc = _min_sc_bisect(acc_fn, demands, cap)
        per_sc = _hd_backhaul_per_sc_bps(g_bh, psd, params)
        b_bh = _hd_backhaul_sc(demands, per_sc)
        cost = b_acc + b_bh
        cost = np.where(cost <= cap, cost, np.inf)
        safe_acc = np.where(np.isfinite(cost), b_acc, 1.0)
        rate = np.where(np.isfinite(cost),
                        np.minimum(acc_fn(safe_acc), b_bh * per_sc), 0.0)
        backhaul_sc = np.where(np.isfinite(cost), b_bh, 0.0)
    return _Column(station_id=drone.id, budget=cap, psd_w_per_sc=psd,
                   cost=cost, rate=rate, backhaul_sc=backhaul_sc)


def _stack_columns(scenario: Scenario, columns) -> CostTable:
    demands = np.array([u.rate_demand_bps for u in scenario.ues], dtype=float)
    return CostTable(
        station_ids=[c.station_id for c in columns],
        budgets=np.array([c.budget for c in columns], dtype=float),
        psd=np.array([c.psd_w_per_sc for c in columns], dtype=float),
        cost=np.column_stack([c.cost for c in columns]),
        rate=np.column_stack([c.rate for c in columns]),
        backhaul_sc=np.column_stack([c.backhaul_sc for c in columns]),
        demands=demands,
        ue_ids=[u.id for u in scenario.ues],
    )


def build_cost_table(scenario: Scenario, dbs_positions) -> CostTable:
    """Cost table for the macro station plus every placed drone.

    ``dbs_positions`` maps drone station ids to ``((x, y), altitude)``;
    drones absent from the map are grounded and excluded from the fleet.
    Columns are ordered macro first, then drones by ascending id, which is
    also the tie-break preference of the greedy solver.
    """
    columns = [mbs_column(scenario)]
    for drone in scenario.drones:
        if drone.id not in dbs_positions:
            continue
        xy, alt = dbs_positions[drone.id]
        columns.append(drone_column(scenario, drone, xy, alt))
    return _stack_columns(scenario, columns)


def min_bandwidth(ue: UserEquipment, bs: BaseStation, scenario: Scenario):
    """Minimum subcarriers for one UE at one (already positioned) station.

    Returns ``None`` when the demand exceeds the link's saturation rate or
    would not fit the station's budget.  For half-duplex drones the count
    includes the separate backhaul allocation.
    """
    params = scenario.channel
    demand = ue.rate_demand_bps
    if bs.kind is StationKind.MACRO:
        horiz = math.hypot(ue.position_m[0] - bs.position_m[0],
                           ue.position_m[1] - bs.position_m[1])
        gain = mbs_path_gain_linear(math.hypot(horiz, bs.position_m[2]), params)
        if access_saturation_rate_bps(gain, params) <= demand:
            return None
        return _min_sc_scalar(_mbs_rate_fn(params.ue_tx_power_w * gain, params),
                              demand, bs.sc_budget)

    xy = bs.position_m[:2]
    alt = bs.position_m[2]
    horiz = math.hypot(ue.position_m[0] - xy[0], ue.position_m[1] - xy[1])
    g_acc = a2g_gain_linear(LinkGeometry(max(horiz, 1e-9), alt), params)
    g_bh = backhaul_gain(scenario, xy, alt)
    psd = bs.psd_w_per_sc
    if bs.duplex is Duplex.FULL:
        if access_saturation_rate_bps(g_acc, params, dbs_psd_w_per_sc=psd) <= demand:
            return None
        mbs = scenario.mbs
        d_mbs = math.hypot(math.hypot(ue.position_m[0] - mbs.position_m[0],
                                      ue.position_m[1] - mbs.position_m[1]),
                           mbs.position_m[2])
        interference = params.ue_tx_power_w * mbs_path_gain_linear(d_mbs, params)
        fn = _fd_rate_fn(params.ue_tx_power_w * g_acc, interference, g_bh,
                         psd, params)
        return _min_sc_scalar(fn, demand, bs.sc_budget)
    if access_saturation_rate_bps(g_acc, params) <= demand:
        return None
    b_acc = _min_sc_scalar(_hd_access_rate_fn(params.ue_tx_power_w * g_acc, params),
                           demand, bs.sc_budget)
    if b_acc is None:
        return None
    per_sc = _hd_backhaul_per_sc_bps(g_bh, psd, params)
    b_bh = int(_hd_backhaul_sc(np.array([demand]), per_sc)[0])
    total = b_acc + b_bh
    return total if total <= bs.sc_budget else None


# ---------------------------------------------------------------------------
# Greedy solver.
# ---------------------------------------------------------------------------


def _greedy_pack(table: CostTable) -> np.ndarray:
    """Weight-ordered admission with residual-capacity restarts.

    UEs are ranked by demand density (demand over the subcarrier cost at
    their cheapest feasible station).  When an admission no longer fits,
    the cheapest-station choice of every waiting UE is recomputed against
    the residual budgets; UEs with no fitting station drop out.  Each pass
    admits at least one UE, so at most one pass per UE runs.
    """
    n = table.cost.shape[0]
    assoc = np.full(n, -1, dtype=int)
    resid = table.budgets.copy()
    remaining = np.where(np.isfinite(table.cost).any(axis=1))[0]
    while remaining.size:
        costs = table.cost[remaining]
        masked = np.where(costs <= resid[None, :], costs, np.inf)
        best_col = masked.argmin(axis=1)  # first minimum: macro, then low ids
        best_cost = masked[np.arange(remaining.size), best_col]
        fits = np.isfinite(best_cost)
        remaining, best_col, best_cost = (remaining[fits], best_col[fits],
                                          best_cost[fits])
        if remaining.size == 0:
            break
        weights = table.demands[remaining] / best_cost
        order = np.lexsort((remaining, -weights))
        leftover = []
        blocked_pass = False
        for k in order:
            i = remaining[k]
            if blocked_pass:
                leftover.append(i)
                continue
            j = best_col[k]
            if best_cost[k] <= resid[j]:
                assoc[i] = j
                resid[j] -= best_cost[k]
            else:
                blocked_pass = True
                leftover.append(i)
        if not blocked_pass:
            break
        remaining = np.array(leftover, dtype=int)
    return assoc


def _fallback_pack(table: CostTable) -> np.ndarray:
    """Largest-demand fallback: admit up to one UE per station column.

    UEs are scanned in descending demand; each goes to its cheapest station
    with room.  The scan stops after as many admissions as there are
    stations, guaranteeing the result covers the top individually servable
    demands.
    """
    n, m = table.cost.shape
    assoc = np.full(n, -1, dtype=int)
    resid = table.budgets.copy()
    admitted = 0
    order = np.lexsort((np.arange(n), -table.demands))
    for i in order:
        row = np.where(table.cost[i] <= resid, table.cost[i], np.inf)
        j = int(row.argmin())
        if not np.isfinite(row[j]):
            continue
        assoc[i] = j
        resid[j] -= table.cost[i, j]
        admitted += 1
        if admitted == m:
            break
    return assoc


def solve_table(table: CostTable):
    """Run both admission strategies; return (assoc, greedy_bps, fallback_bps).

    The returned association is whichever strategy carries more demand,
    with ties resolved to the weight-ordered greedy solution.
    """
    greedy = _greedy_pack(table)
    fallback = _fallback_pack(table)
    greedy_bps = float(table.demands[greedy >= 0].sum())
    fallback_bps = float(table.demands[fallback >= 0].sum())
    assoc = greedy if greedy_bps >= fallback_bps else fallback
    return assoc, greedy_bps, fallback_bps


def assignment_from_table(table: CostTable, assoc: np.ndarray) -> Assignment:
    association = {}
    sc_alloc = {}
    power = {}
    rates = {}
    total = 0.0
    for idx, ue_id in enumerate(table.ue_ids):
        j = assoc[idx]
        if j < 0:
            association[ue_id] = None
            continue
        association[ue_id] = table.station_ids[j]
        sc_alloc[ue_id] = int(table.cost[idx, j])
        power[ue_id] = float(table.backhaul_sc[idx, j] * table.psd[j])
        rates[ue_id] = float(table.rate[idx, j])
        total += table.demands[idx]
    return Assignment(association=association, sc_alloc=sc_alloc,
                      backhaul_power_w=power, achieved_rate_bps=rates,
                      total_throughput_bps=float(total))


@dataclass(frozen=True)
class AaUpbReport:
    assignment: Assignment
    greedy_bps: float
    fallback_bps: float


def aa_upb_report(scenario: Scenario, dbs_positions) -> AaUpbReport:
    """Like :func:`aa_upb` but also reports both candidate set values."""
    table = build_cost_table(scenario, dbs_positions)
    assoc, greedy_bps, fallback_bps = solve_table(table)
    assignment = assignment_from_table(table, assoc)
    validate_assignment(scenario, assignment, dbs_positions)
    return AaUpbReport(assignment, greedy_bps, fallback_bps)


def aa_upb(scenario: Scenario, dbs_positions) -> Assignment:
    """Solve the association/bandwidth/power problem at fixed drone positions.

    Greedy weight-ordered admission with a largest-demands fallback; the
    better of the two is returned.  All feasibility constraints are checked
    before returning.
    """
    return aa_upb_report(scenario, dbs_positions).assignment


def weight_table(scenario: Scenario, dbs_positions):
    """Initial greedy ranking at full capacities, sorted as the solver scans."""
    table = build_cost_table(scenario, dbs_positions)
    entries = []
    for idx, ue_id in enumerate(table.ue_ids):
        row = table.cost[idx]
        j = int(row.argmin())
        if not np.isfinite(row[j]) or row[j] > table.budgets[j]:
            continue
        entries.append(WeightEntry(ue=ue_id, best_bs=table.station_ids[j],
                                   sc_needed=int(row[j]),
                                   weight=float(table.demands[idx] / row[j])))
    entries.sort(key=lambda e: (-e.weight, e.ue))
    return entries


def validate_assignment(scenario: Scenario, assignment: Assignment,
                        dbs_positions=None) -> None:
    """Check C1-C4 feasibility; raise :class:`AssignmentError` on violation."""
    ue_by_id = {u.id: u for u in scenario.ues}
    if set(assignment.association) != set(ue_by_id):
        raise AssignmentError("association must cover every UE exactly once")
    sc_used = {}
    power_used = {}
    total = 0.0
    for ue_id, bs_id in assignment.association.items():
        if bs_id is None:
            continue
        station = scenario.station(bs_id)
        if station.kind is StationKind.DRONE and dbs_positions is not None \
                and bs_id not in dbs_positions:
            raise AssignmentError(f"ue {ue_id} served by unplaced drone {bs_id}")
        sc = assignment.sc_alloc.get(ue_id)
        if sc is None or sc < 1:
            raise AssignmentError(f"ue {ue_id} served without subcarriers")
        rate = assignment.achieved_rate_bps.get(ue_id, 0.0)
        demand = ue_by_id[ue_id].rate_demand_bps
        if rate < demand - _RATE_TOL:
            raise AssignmentError(
                f"ue {ue_id}: achieved rate {rate:.1f} below demand {demand:.1f}")
        sc_used[bs_id] = sc_used.get(bs_id, 0) + sc
        power_used[bs_id] = power_used.get(bs_id, 0.0) + \
            assignment.backhaul_power_w.get(ue_id, 0.0)
        total += demand
    for bs_id, used in sc_used.items():
        budget = scenario.station(bs_id).sc_budget
        if used > budget:
            raise AssignmentError(
                f"station {bs_id}: {used} subcarriers exceed budget {budget}")
    for bs_id, used in power_used.items():
        station = scenario.station(bs_id)
        if station.kind is StationKind.DRONE and \
                used > station.power_budget_w + 1e-9:
            raise AssignmentError(
                f"drone {bs_id}: backhaul power {used:.3f} W over budget")
    if abs(total - assignment.total_throughput_bps) > _RATE_TOL:
        raise AssignmentError("total throughput inconsistent with served demands")
