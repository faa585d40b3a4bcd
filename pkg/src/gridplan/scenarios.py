"""Hourly time series ingestion and day-length scenario slicing.

A scenario is one day of hourly data: a node-by-hour demand matrix and a
generator-by-hour availability matrix. Key-day selection picks extreme days
(peak load, peak net load, peak and lowest renewable) for cheap studies.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ScenarioError
from .network import Network, ParameterBounds

__all__ = [
    "TimeSeriesTable",
    "Scenario",
    "ScenarioSet",
    "load_time_series",
    "slice_days",
    "select_key_days",
]


@dataclass(frozen=True)
class TimeSeriesTable:
    """Hourly profile columns keyed by profile id; all columns share length H."""

    hours: int
    columns: dict[str, np.ndarray]

    def profile(self, name: str, *, owner: str = "?") -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise ScenarioError(
                f"profile {name!r} referenced by {owner} is not in the time series table"
            ) from None


@dataclass(frozen=True)
class Scenario:
    """One day of data; scenario_id is the chronological day index."""

    scenario_id: int
    T: int
    demand: np.ndarray        # (n_nodes, T) MW
    availability: np.ndarray  # (n_generators, T) fraction of capacity


@dataclass(frozen=True)
class ScenarioSet:
    scenarios: tuple[Scenario, ...]

    def __post_init__(self):
        object.__setattr__(self, "scenarios", tuple(self.scenarios))
        if not self.scenarios:
            raise ScenarioError("scenario set must contain at least one scenario")
        T = self.scenarios[0].T
        if any(s.T != T for s in self.scenarios):
            raise ScenarioError("scenarios must share the same horizon T")

    @property
    def S(self) -> int:
        return len(self.scenarios)

    @property
    def T(self) -> int:
        return self.scenarios[0].T

    def __iter__(self):
        return iter(self.scenarios)

    def __getitem__(self, i: int) -> Scenario:
        return self.scenarios[i]


def load_time_series(path: str | Path, net: Network | None = None) -> TimeSeriesTable:
    """Parse an hourly CSV: first column ``hour`` (0-based), one column per profile.

    All values must be finite and nonnegative. When a network is given, the
    columns it references are classified and range-checked: availability
    profiles must lie in [0, 1].
    """
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"time series file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ScenarioError(f"{path}: empty file") from None
        if not header or header[0].strip() != "hour":
            raise ScenarioError(f"{path}: first column must be named 'hour'")
        names = [h.strip() for h in header[1:]]
        if len(set(names)) != len(names):
            raise ScenarioError(f"{path}: duplicate profile columns")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(names) + 1:
                raise ScenarioError(f"{path}:{lineno}: expected {len(names) + 1} cells, got {len(row)}")
            parsed = []
            for cell, col in zip(row, ["hour"] + names):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ScenarioError(f"{path}:{lineno}: column {col!r}: bad number {cell!r}") from None
            rows.append((lineno, parsed))

    if not rows:
        raise ScenarioError(f"{path}: no data rows")
    hours = np.array([r[1][0] for r in rows])
    if not np.array_equal(hours, np.arange(len(rows))):
        raise ScenarioError(f"{path}: 'hour' column must be 0..H-1 in order")
    data = np.array([r[1][1:] for r in rows], dtype=float)

    for j, col in enumerate(names):
        vals = data[:, j]
        bad = np.flatnonzero(~np.isfinite(vals))
        if bad.size:
            raise ScenarioError(f"{path}: column {col!r} hour {bad[0]}: non-finite value")
        bad = np.flatnonzero(vals < 0)
        if bad.size:
            raise ScenarioError(f"{path}: column {col!r} hour {bad[0]}: negative value {vals[bad[0]]}")

    table = TimeSeriesTable(hours=len(rows), columns={c: data[:, j].copy() for j, c in enumerate(names)})
    if net is not None:
        _check_against_network(table, net, where=str(path))
    return table


def _check_against_network(table: TimeSeriesTable, net: Network, where: str = "table") -> None:
    for load in net.loads:
        table.profile(load.demand_profile, owner=load.name)
    for gen in net.generators:
        if gen.availability_profile is None:
            continue
        col = table.profile(gen.availability_profile, owner=gen.name)
        bad = np.flatnonzero((col < 0) | (col > 1))
        if bad.size:
            raise ScenarioError(
                f"{where}: column {gen.availability_profile!r} hour {bad[0]}: "
                f"availability {col[bad[0]]} outside [0, 1]"
            )


def slice_days(table: TimeSeriesTable, net: Network, T: int = 24) -> ScenarioSet:
    """Cut the table into consecutive length-T scenarios; trailing hours are dropped."""
    if T < 1:
        raise ScenarioError("scenario length T must be at least 1")
    _check_against_network(table, net)
    H = table.hours
    S = H // T
    if S == 0:
        raise ScenarioError(f"table has {H} hours, fewer than one scenario of length {T}")
    if H % T:
        warnings.warn(f"dropping {H % T} trailing hours not filling a scenario", stacklevel=2)

    n_nodes = len(net.nodes)
    demand = np.zeros((n_nodes, H))
    for load in net.loads:
        demand[net.node_index(load.node)] += table.profile(load.demand_profile, owner=load.name)

    gens = net.generators
    availability = np.ones((len(gens), H))
    for g, gen in enumerate(gens):
        if gen.availability_profile is not None:
            availability[g] = table.profile(gen.availability_profile, owner=gen.name)

    scenarios = [
        Scenario(
            scenario_id=d,
            T=T,
            demand=demand[:, d * T:(d + 1) * T].copy(),
            availability=availability[:, d * T:(d + 1) * T].copy(),
        )
        for d in range(S)
    ]
    return ScenarioSet(scenarios=tuple(scenarios))


def _existing_renewable_output(net: Network, bounds: ParameterBounds,
                               scenario: Scenario) -> np.ndarray:
    """Hourly renewable output at existing capacity, summed over generators."""
    out = np.zeros(scenario.T)
    for g, gen in enumerate(net.generators):
        if gen.availability_profile is None:
            continue
        if gen.parameter_index is not None:
            cap = bounds.lower[gen.parameter_index]
        else:
            cap = gen.capacity or 0.0
        out += scenario.availability[g] * cap
    return out


def select_key_days(sset: ScenarioSet, net: Network, bounds: ParameterBounds,
                    k: int = 4) -> ScenarioSet:
    """Union of extreme days: top-k peak demand, peak net load, most and least renewable energy.

    Net load uses renewable output at existing capacity. Renewable ranking is
    by daily energy. Ties break toward the earlier day. Result size <= 4k.
    """
    if k < 1:
        raise ScenarioError("k must be at least 1")
    S = sset.S
    peak_demand = np.empty(S)
    peak_net_load = np.empty(S)
    renewable_energy = np.empty(S)
    for i, sc in enumerate(sset):
        total_demand = sc.demand.sum(axis=0)
        renewable = _existing_renewable_output(net, bounds, sc)
        peak_demand[i] = total_demand.max()
        peak_net_load[i] = (total_demand - renewable).max()
        renewable_energy[i] = renewable.sum()

    def top(metric: np.ndarray, reverse: bool) -> list[int]:
        key = (lambda d: (-metric[d], d)) if reverse else (lambda d: (metric[d], d))
        return sorted(range(S), key=key)[:k]

    chosen = set(top(peak_demand, True)) | set(top(peak_net_load, True))
    chosen |= set(top(renewable_energy, True)) | set(top(renewable_energy, False))
    return ScenarioSet(scenarios=tuple(sset[d] for d in sorted(chosen)))
