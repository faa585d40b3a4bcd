"""Electricity network model: nodes, devices, and the capacity parameter vector.

Capacities of expandable devices form a single vector ``eta`` of length K.
Each expandable device owns exactly one entry (MW for generators and lines,
MWh for batteries). Existing capacity is the lower bound of ``eta``;
investment cost is charged on expansion above it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import ClassVar, Union

import numpy as np

from .errors import NetworkError

NETWORK_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Generator:
    """Dispatchable or renewable generator attached to one node.

    A generator with an availability profile is treated as renewable: its
    hourly output limit is ``availability * capacity``. Without a profile the
    availability is 1.0 everywhere.
    """

    name: str
    node: str
    fuel_cost: float
    emissions_rate: float = 0.0
    availability_profile: str | None = None
    parameter_index: int | None = None
    capacity: float | None = None

    kind: ClassVar[str] = "generator"


@dataclass(frozen=True)
class TransportLine:
    """Loss-free transport link; flow is bounded by +/- capacity."""

    name: str
    node_from: str
    node_to: str
    parameter_index: int | None = None
    capacity: float | None = None

    kind: ClassVar[str] = "line"


@dataclass(frozen=True)
class Battery:
    """Energy storage sized by energy capacity (MWh) with fixed duration.

    Charge and discharge power are limited to ``capacity / duration``. The
    state of charge starts and ends each scenario at ``boundary_soc`` times
    the energy capacity, so scenarios are self-contained.
    """

    name: str
    node: str
    duration: float = 4.0
    charge_efficiency: float = 0.95
    discharge_efficiency: float = 0.95
    boundary_soc: float = 0.5
    parameter_index: int | None = None
    capacity: float | None = None

    kind: ClassVar[str] = "battery"


@dataclass(frozen=True)
class FixedLoad:
    """Inelastic demand with a shed penalty (value of lost load, $/MWh).

    Loads are never expandable; shedding at high penalty keeps every dispatch
    problem feasible regardless of installed capacity.
    """

    name: str
    node: str
    demand_profile: str
    shed_penalty: float = 1000.0

    kind: ClassVar[str] = "load"


Device = Union[Generator, TransportLine, Battery, FixedLoad]

_KIND_TO_CLS = {cls.kind: cls for cls in (Generator, TransportLine, Battery, FixedLoad)}


@dataclass(frozen=True)
class Network:
    """Immutable network: node names plus a device list in fixed order."""

    nodes: tuple[str, ...]
    devices: tuple[Device, ...]

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "devices", tuple(self.devices))

    @property
    def generators(self) -> tuple[Generator, ...]:
        return tuple(d for d in self.devices if isinstance(d, Generator))

    @property
    def lines(self) -> tuple[TransportLine, ...]:
        return tuple(d for d in self.devices if isinstance(d, TransportLine))

    @property
    def batteries(self) -> tuple[Battery, ...]:
        return tuple(d for d in self.devices if isinstance(d, Battery))

    @property
    def loads(self) -> tuple[FixedLoad, ...]:
        return tuple(d for d in self.devices if isinstance(d, FixedLoad))

    @property
    def parameter_count(self) -> int:
        """K: number of expandable devices."""
        return sum(1 for d in self.devices if d.kind != "load" and d.parameter_index is not None)

    def node_index(self, name: str) -> int:
        try:
            return self.nodes.index(name)
        except ValueError:
            raise NetworkError(f"unknown node {name!r}") from None

    def expandable_devices(self) -> list[Device]:
        """Devices owning a parameter slot, ordered by parameter index."""
        owned = [d for d in self.devices if getattr(d, "parameter_index", None) is not None]
        return sorted(owned, key=lambda d: d.parameter_index)

    def parameter_kinds(self) -> list[str]:
        return [d.kind for d in self.expandable_devices()]


@dataclass(frozen=True)
class ParameterBounds:
    """Elementwise box for the capacity vector: existing capacity to buildout limit."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if lower.shape != upper.shape or lower.ndim != 1:
            raise NetworkError("bounds must be 1-d vectors of equal length")
        if not (np.isfinite(lower).all() and np.isfinite(upper).all()):
            raise NetworkError("bounds must be finite")
        if (lower < 0).any():
            raise NetworkError("lower bounds must be nonnegative")
        if (lower > upper).any():
            raise NetworkError("lower bounds must not exceed upper bounds")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    def __len__(self) -> int:
        return self.lower.shape[0]


@dataclass(frozen=True)
class InvestmentCosts:
    """Annualized capital cost per unit of added capacity ($/MW or $/MWh)."""

    gamma: np.ndarray

    def __post_init__(self):
        gamma = np.asarray(self.gamma, dtype=float)
        if gamma.ndim != 1:
            raise NetworkError("gamma must be a 1-d vector")
        if not np.isfinite(gamma).all() or (gamma < 0).any():
            raise NetworkError("gamma must be finite and nonnegative")
        object.__setattr__(self, "gamma", gamma)

    def __len__(self) -> int:
        return self.gamma.shape[0]


def validate_network(net: Network) -> list[str]:
    """Check structural invariants; returns human-readable violations (empty if valid)."""
    violations: list[str] = []
    node_set = set(net.nodes)
    if len(node_set) != len(net.nodes):
        violations.append("network: duplicate node names")

    attached: set[str] = set()
    max_fuel = max((g.fuel_cost for g in net.generators), default=0.0)
    indices: dict[int, str] = {}

    for dev in net.devices:
        if isinstance(dev, TransportLine):
            endpoints = [dev.node_from, dev.node_to]
            if dev.node_from == dev.node_to:
                violations.append(f"{dev.name}: line endpoints must be distinct nodes")
        else:
            endpoints = [dev.node]
        for ep in endpoints:
            if ep not in node_set:
                violations.append(f"{dev.name}: references unknown node {ep!r}")
            attached.add(ep)

        idx = getattr(dev, "parameter_index", None)
        if isinstance(dev, FixedLoad):
            if dev.shed_penalty <= max_fuel:
                violations.append(
                    f"{dev.name}: shed_penalty must exceed the maximum fuel cost ({max_fuel})"
                )
            continue
        if idx is not None:
            if idx in indices:
                violations.append(
                    f"{dev.name}: parameter_index {idx} already owned by {indices[idx]}"
                )
            elif idx < 0:
                violations.append(f"{dev.name}: parameter_index must be nonnegative")
            else:
                indices[idx] = dev.name
        elif dev.capacity is None:
            violations.append(f"{dev.name}: fixed device needs an explicit capacity")
        elif dev.capacity < 0:
            violations.append(f"{dev.name}: capacity must be nonnegative")

        if isinstance(dev, Generator):
            if dev.fuel_cost < 0:
                violations.append(f"{dev.name}: fuel_cost must be nonnegative")
            if dev.emissions_rate < 0:
                violations.append(f"{dev.name}: emissions_rate must be nonnegative")
        if isinstance(dev, Battery):
            if dev.duration <= 0:
                violations.append(f"{dev.name}: duration must be positive")
            if not 0 < dev.charge_efficiency <= 1:
                violations.append(f"{dev.name}: charge_efficiency must be in (0, 1]")
            if not 0 < dev.discharge_efficiency <= 1:
                violations.append(f"{dev.name}: discharge_efficiency must be in (0, 1]")
            if not 0 <= dev.boundary_soc <= 1:
                violations.append(f"{dev.name}: boundary_soc must be in [0, 1]")

    if indices:
        expected = set(range(len(indices)))
        if set(indices) != expected:
            violations.append(
                f"network: parameter indices {sorted(indices)} are not 0..{len(indices) - 1}"
            )
    for node in net.nodes:
        if node not in attached:
            violations.append(f"{node}: node has no attached device")
    return violations


def project_parameters(eta: np.ndarray, bounds: ParameterBounds) -> np.ndarray:
    """Clamp a capacity vector into the bounds box (Euclidean projection)."""
    eta = np.asarray(eta, dtype=float)
    if eta.shape != bounds.lower.shape:
        raise NetworkError(f"expected {len(bounds)} parameters, got {eta.shape}")
    return np.clip(eta, bounds.lower, bounds.upper)


def investment_cost(eta: np.ndarray, gamma: InvestmentCosts, bounds: ParameterBounds) -> float:
    """Capital cost of the expansion above existing capacity, gamma . (eta - lower)."""
    eta = np.asarray(eta, dtype=float)
    if not (eta.shape == gamma.gamma.shape == bounds.lower.shape):
        raise NetworkError("eta, gamma, and bounds lengths disagree")
    return float(gamma.gamma @ (eta - bounds.lower))


def _device_to_dict(dev: Device) -> dict:
    rec = {"kind": dev.kind}
    for f in fields(dev):
        rec[f.name] = getattr(dev, f.name)
    return rec


def _device_from_dict(rec: dict) -> Device:
    rec = dict(rec)
    kind = rec.pop("kind", None)
    cls = _KIND_TO_CLS.get(kind)
    if cls is None:
        raise NetworkError(f"unknown device kind {kind!r}")
    try:
        return cls(**rec)
    except TypeError as exc:
        raise NetworkError(f"bad device record {rec.get('name', '?')!r}: {exc}") from exc


def network_to_dict(net: Network, bounds: ParameterBounds, costs: InvestmentCosts) -> dict:
    return {
        "version": NETWORK_FORMAT_VERSION,
        "nodes": list(net.nodes),
        "devices": [_device_to_dict(d) for d in net.devices],
        "bounds": {"lower": bounds.lower.tolist(), "upper": bounds.upper.tolist()},
        "investment_costs": {"gamma": costs.gamma.tolist()},
    }


def network_from_dict(doc: dict) -> tuple[Network, ParameterBounds, InvestmentCosts]:
    if doc.get("version") != NETWORK_FORMAT_VERSION:
        raise NetworkError(f"unsupported network format version {doc.get('version')!r}")
    for key in ("nodes", "devices", "bounds", "investment_costs"):
        if key not in doc:
            raise NetworkError(f"network document missing {key!r}")
    net = Network(
        nodes=tuple(doc["nodes"]),
        devices=tuple(_device_from_dict(r) for r in doc["devices"]),
    )
    bounds = ParameterBounds(
        lower=np.asarray(doc["bounds"]["lower"], dtype=float),
        upper=np.asarray(doc["bounds"]["upper"], dtype=float),
    )
    costs = InvestmentCosts(gamma=np.asarray(doc["investment_costs"]["gamma"], dtype=float))
    k = net.parameter_count
    if not (len(bounds) == len(costs) == k):
        raise NetworkError(
            f"bounds ({len(bounds)}) and gamma ({len(costs)}) must have length K={k}"
        )
    return net, bounds, costs


def save_network(path: str | Path, net: Network, bounds: ParameterBounds,
                 costs: InvestmentCosts) -> None:
    Path(path).write_text(json.dumps(network_to_dict(net, bounds, costs), indent=2))


def load_network(path: str | Path) -> tuple[Network, ParameterBounds, InvestmentCosts]:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise NetworkError(f"network file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise NetworkError(f"network file {path} is not valid JSON: {exc}") from exc
    return network_from_dict(doc)


def topology_fingerprint(net: Network) -> str:
    """Hash of the network structure: names, kinds, attachments, parameter slots.

    Numeric assumptions (costs, efficiencies, profiles) are deliberately
    excluded so that warm starts remain valid across assumption changes.
    """
    items = [list(net.nodes)]
    for dev in net.devices:
        if isinstance(dev, TransportLine):
            nodes = [dev.node_from, dev.node_to]
        else:
            nodes = [dev.node]
        items.append([dev.kind, dev.name, nodes, getattr(dev, "parameter_index", None)])
    items.append(net.parameter_count)
    blob = json.dumps(items, sort_keys=False).encode()
    return hashlib.sha256(blob).hexdigest()
