"""World construction: stations, clustered users, candidate grids, (de)serialization.

A :class:`Scenario` is immutable after construction and safe to share across
threads; every random quantity is driven by an explicit seed through numpy's
PCG64 generator so scenarios are bit-reproducible.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import warnings
from dataclasses import dataclass

import numpy as np

from .channel import ChannelParams

__all__ = [
    "StationKind",
    "Duplex",
    "BaseStation",
    "UserEquipment",
    "CandidateGrid",
    "Scenario",
    "ClusterParams",
    "SchemaError",
    "DEFAULT_RATE_CHOICES_BPS",
    "generate_ues",
    "build_grid",
    "build_scenario",
    "save_scenario",
    "load_scenario",
    "scenario_to_dict",
    "scenario_from_dict",
    "with_ues",
    "with_altitudes",
    "with_duplex",
]

# Table of per-UE demand choices used by default generation: 0.5..2 Mbps.
DEFAULT_RATE_CHOICES_BPS = (0.5e6, 1.0e6, 1.5e6, 2.0e6)

MBS_ID = 1


class StationKind(enum.Enum):
    MACRO = "macro"
    DRONE = "drone"


class Duplex(enum.Enum):
    HALF = "half"
    FULL = "full"


class SchemaError(ValueError):
    """Raised when a scenario file fails validation; names the bad field."""


@dataclass(frozen=True)
class BaseStation:
    id: int
    kind: StationKind
    position_m: tuple  # (x, y, z)
    sc_budget: int
    power_budget_w: float | None = None
    duplex: Duplex = Duplex.HALF

    def __post_init__(self):
        if self.sc_budget < 1:
            raise ValueError(f"station {self.id}: sc_budget must be >= 1")
        if len(self.position_m) != 3:
            raise ValueError(f"station {self.id}: position must be (x, y, z)")
        if self.kind is StationKind.DRONE and (self.power_budget_w is None
                                               or self.power_budget_w <= 0):
            raise ValueError(f"station {self.id}: drones need a positive power budget")
        object.__setattr__(self, "position_m", tuple(float(v) for v in self.position_m))

    @property
    def psd_w_per_sc(self) -> float:
        """Backhaul power spectral density per subcarrier (drones only).

        Proportional power: the budget spread over the full subcarrier
        budget, so the power constraint binds exactly at full loading.
        """
        if self.kind is not StationKind.DRONE:
            raise ValueError("only drones have a backhaul PSD")
        return self.power_budget_w / self.sc_budget


@dataclass(frozen=True)
class UserEquipment:
    id: int
    position_m: tuple  # (x, y, 0)
    rate_demand_bps: float

    def __post_init__(self):
        if self.rate_demand_bps <= 0:
            raise ValueError(f"ue {self.id}: rate demand must be positive")
        if len(self.position_m) != 3:
            raise ValueError(f"ue {self.id}: position must be (x, y, z)")
        object.__setattr__(self, "position_m", tuple(float(v) for v in self.position_m))


@dataclass(frozen=True)
class CandidateGrid:
    horizontal_m: tuple  # of (x, y)
    vertical_m: tuple    # of altitudes

    def __post_init__(self):
        horiz = tuple((float(x), float(y)) for x, y in self.horizontal_m)
        vert = tuple(float(v) for v in self.vertical_m)
        if len(set(horiz)) != len(horiz):
            raise ValueError("duplicate horizontal candidates")
        if len(set(vert)) != len(vert):
            raise ValueError("duplicate vertical candidates")
        object.__setattr__(self, "horizontal_m", horiz)
        object.__setattr__(self, "vertical_m", vert)


@dataclass(frozen=True)
class Scenario:
    stations: tuple  # of BaseStation, macro first
    ues: tuple       # of UserEquipment
    grid: CandidateGrid
    channel: ChannelParams
    total_sc: int
    seed: int
    area_m: float

    def __post_init__(self):
        object.__setattr__(self, "stations", tuple(self.stations))
        object.__setattr__(self, "ues", tuple(self.ues))
        macros = [s for s in self.stations if s.kind is StationKind.MACRO]
        if len(macros) != 1 or macros[0].id != MBS_ID:
            raise ValueError("exactly one macro station with id 1 is required")
        ids = [s.id for s in self.stations]
        if sorted(ids) != list(range(1, len(ids) + 1)):
            raise ValueError("station ids must be dense and unique starting at 1")
        ue_ids = [u.id for u in self.ues]
        if sorted(ue_ids) != list(range(1, len(ue_ids) + 1)):
            raise ValueError("ue ids must be dense and unique starting at 1")
        if sum(s.sc_budget for s in self.stations) > self.total_sc:
            raise ValueError("station subcarrier budgets exceed the system budget")
        if self.area_m <= 0:
            raise ValueError("area_m must be positive")

    @property
    def mbs(self) -> BaseStation:
        return next(s for s in self.stations if s.kind is StationKind.MACRO)

    @property
    def drones(self) -> tuple:
        return tuple(s for s in self.stations if s.kind is StationKind.DRONE)

    def station(self, station_id: int) -> BaseStation:
        for s in self.stations:
            if s.id == station_id:
                return s
        raise KeyError(station_id)

    @property
    def total_demand_bps(self) -> float:
        return float(sum(u.rate_demand_bps for u in self.ues))


@dataclass(frozen=True)
class ClusterParams:
    """Matern cluster process parameters: Poisson parents, uniform-disk daughters."""

    parent_density_per_km2: float = 8.0
    radius_m: float = 120.0
    mean_daughters: float = 20.0


def generate_ues(n: int, area_m: float, cluster: ClusterParams | None = None,
                 seed: int = 0, rate_choices_bps=DEFAULT_RATE_CHOICES_BPS):
    """Draw ``n`` clustered users inside the ``[0, area_m]^2`` square.

    Matern cluster draw: parent count ~ Poisson(density * area), each parent
    spawns Poisson(mean_daughters) points uniform in a disk of the cluster
    radius.  Draw rounds accumulate until at least ``n`` points exist, the
    list is truncated to exactly ``n`` and coordinates are clipped to the
    area.  Truncation keeps generation order, so the first 100 users of a
    110-user draw equal the 100-user draw for the same seed.
    """
    if n <= 0:
        raise ValueError("n must be >= 1")
    if cluster is None:
        cluster = ClusterParams()
    rng = np.random.default_rng(seed)
    area_km2 = (area_m / 1000.0) ** 2
    points = []
    while len(points) < n:
        n_parents = rng.poisson(cluster.parent_density_per_km2 * area_km2)
        parents = rng.uniform(0.0, area_m, size=(max(n_parents, 1), 2))
        for px, py in parents:
            k = rng.poisson(cluster.mean_daughters)
            if k == 0:
                continue
            radii = cluster.radius_m * np.sqrt(rng.uniform(0.0, 1.0, size=k))
            angles = rng.uniform(0.0, 2.0 * np.pi, size=k)
            xs = np.clip(px + radii * np.cos(angles), 0.0, area_m)
            ys = np.clip(py + radii * np.sin(angles), 0.0, area_m)
            points.extend(zip(xs, ys))
    points = points[:n]
    demands = rng.choice(np.asarray(rate_choices_bps, dtype=float), size=n)
    return [UserEquipment(id=i + 1, position_m=(x, y, 0.0), rate_demand_bps=float(r))
            for i, ((x, y), r) in enumerate(zip(points, demands))]


def build_grid(area_m: float, n_horizontal: int, altitudes_m) -> CandidateGrid:
    """Uniform k x k lattice of horizontal candidates with half-cell margins."""
    k = round(n_horizontal ** 0.5)
    if k * k != n_horizontal:
        raise ValueError("n_horizontal must be a perfect square")
    step = area_m / k
    coords = [step / 2.0 + i * step for i in range(k)]
    horizontal = [(x, y) for x in coords for y in coords]
    return CandidateGrid(horizontal_m=tuple(horizontal),
                         vertical_m=tuple(float(a) for a in altitudes_m))


def build_scenario(n_ues: int = 170, area_m: float = 1000.0, n_dbs: int = 3,
                   seed: int = 0, sc_per_station: int = 300, total_sc: int = 1200,
                   n_sites: int = 36, altitudes_m=None,
                   channel: ChannelParams | None = None,
                   cluster: ClusterParams | None = None,
                   mbs_height_m: float = 25.0) -> Scenario:
    """Assemble the default evaluation world.

    One macro station at the area center (25 m mast), ``n_dbs`` full-duplex
    drones (initially parked at the center at the lowest candidate altitude;
    solvers place them), clustered users, and a 6x6 / 100..300 m candidate
    grid.
    """
    if altitudes_m is None:
        altitudes_m = tuple(range(100, 301, 20))
    channel = channel or ChannelParams()
    grid = build_grid(area_m, n_sites, altitudes_m)
    center = area_m / 2.0
    stations = [BaseStation(id=MBS_ID, kind=StationKind.MACRO,
                            position_m=(center, center, mbs_height_m),
                            sc_budget=sc_per_station, duplex=Duplex.HALF)]
    for j in range(n_dbs):
        stations.append(BaseStation(
            id=MBS_ID + 1 + j, kind=StationKind.DRONE,
            position_m=(center, center, grid.vertical_m[0]),
            sc_budget=sc_per_station,
            power_budget_w=channel.dbs_power_budget_w,
            duplex=Duplex.FULL))
    ues = generate_ues(n_ues, area_m, cluster=cluster, seed=seed)
    return Scenario(stations=tuple(stations), ues=tuple(ues), grid=grid,
                    channel=channel, total_sc=total_sc, seed=seed, area_m=area_m)


def with_ues(scenario: Scenario, n_ues: int, seed: int,
             cluster: ClusterParams | None = None) -> Scenario:
    """Same world, fresh user draw (used by sweep ensembles)."""
    ues = generate_ues(n_ues, scenario.area_m, cluster=cluster, seed=seed)
    return dataclasses.replace(scenario, ues=tuple(ues), seed=seed)


def with_altitudes(scenario: Scenario, altitudes_m) -> Scenario:
    """Same world with the vertical candidate set replaced."""
    grid = CandidateGrid(horizontal_m=scenario.grid.horizontal_m,
                         vertical_m=tuple(float(a) for a in altitudes_m))
    return dataclasses.replace(scenario, grid=grid)


def with_duplex(scenario: Scenario, duplex: Duplex) -> Scenario:
    """Same world with every drone's duplex mode replaced."""
    stations = tuple(dataclasses.replace(s, duplex=duplex)
                     if s.kind is StationKind.DRONE else s
                     for s in scenario.stations)
    return dataclasses.replace(scenario, stations=stations)


# ---------------------------------------------------------------------------
# JSON serialization.  Schema documented in docs/scenario_schema.md.
# ---------------------------------------------------------------------------

_TOP_KEYS = ("channel", "stations", "ues", "grid", "total_sc", "seed", "area_m")


def scenario_to_dict(s: Scenario) -> dict:
    return {
        "channel": dataclasses.asdict(s.channel),
        "stations": [
            {
                "id": st.id,
                "kind": st.kind.value,
                "position_m": list(st.position_m),
                "sc_budget": st.sc_budget,
                "power_budget_w": st.power_budget_w,
                "duplex": st.duplex.value,
            }
            for st in s.stations
        ],
        "ues": [
            {"id": u.id, "position_m": list(u.position_m),
             "rate_demand_bps": u.rate_demand_bps}
            for u in s.ues
        ],
        "grid": {
            "horizontal_m": [list(p) for p in s.grid.horizontal_m],
            "vertical_m": list(s.grid.vertical_m),
        },
        "total_sc": s.total_sc,
        "seed": s.seed,
        "area_m": s.area_m,
    }


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise SchemaError(f"missing required key '{key}' in {context}")
    return mapping[key]


def scenario_from_dict(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise SchemaError("scenario document must be a JSON object")
    unknown = sorted(set(data) - set(_TOP_KEYS))
    if unknown:
        warnings.warn(f"ignoring unknown scenario keys: {unknown}", stacklevel=2)
    try:
        channel = ChannelParams(**_require(data, "channel", "scenario"))
    except TypeError as exc:
        raise SchemaError(f"bad 'channel' section: {exc}") from exc
    stations = []
    for idx, st in enumerate(_require(data, "stations", "scenario")):
        ctx = f"stations[{idx}]"
        stations.append(BaseStation(
            id=int(_require(st, "id", ctx)),
            kind=StationKind(_require(st, "kind", ctx)),
            position_m=tuple(_require(st, "position_m", ctx)),
            sc_budget=int(_require(st, "sc_budget", ctx)),
            power_budget_w=st.get("power_budget_w"),
            duplex=Duplex(st.get("duplex", "half")),
        ))
    ues = []
    for idx, ue in enumerate(_require(data, "ues", "scenario")):
        ctx = f"ues[{idx}]"
        ues.append(UserEquipment(
            id=int(_require(ue, "id", ctx)),
            position_m=tuple(_require(ue, "position_m", ctx)),
            rate_demand_bps=float(_require(ue, "rate_demand_bps", ctx)),
        ))
    grid_doc = _require(data, "grid", "scenario")
    grid = CandidateGrid(
        horizontal_m=tuple(tuple(p) for p in _require(grid_doc, "horizontal_m", "grid")),
        vertical_m=tuple(_require(grid_doc, "vertical_m", "grid")),
    )
    try:
        return Scenario(stations=tuple(stations), ues=tuple(ues), grid=grid,
                        channel=channel,
                        total_sc=int(_require(data, "total_sc", "scenario")),
                        seed=int(_require(data, "seed", "scenario")),
                        area_m=float(_require(data, "area_m", "scenario")))
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc


def save_scenario(s: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(s), fh, indent=2)
        fh.write("\n")


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))
