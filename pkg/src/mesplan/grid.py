"""Radial distribution network model.

A feeder is a tree rooted at the substation bus (id 0).  Every line is
identified with its child bus: line ``l`` connects ``from_bus`` (the parent,
closer to the root) to ``to_bus == l`` (the child).  Power flow variables for
a line live at the child end, so a line's flow is negative when power moves
toward the root under normal delivery.

All electrical quantities are in per-unit on ``Network.base_mva`` except
demand arrays, which are ingested in MW/MVAr and converted once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Bus",
    "Line",
    "Generator",
    "DemandProfile",
    "Network",
    "validate_radial",
    "children_of",
    "path_length",
]


@dataclass(frozen=True)
class Bus:
    """A network node.

    Attributes:
        id: Non-negative integer, unique per network.  The root is 0.
        shunt_conductance: Shunt G in p.u. (>= 0).
        shunt_susceptance: Shunt B in p.u. (>= 0).
        v_min: Lower bound on squared voltage magnitude (p.u.^2).
        v_max: Upper bound on squared voltage magnitude (p.u.^2).
        voll: Value of lost load at this bus, $/MWh (> 0).
    """

    id: int
    shunt_conductance: float = 0.0
    shunt_susceptance: float = 0.0
    v_min: float = 0.81
    v_max: float = 1.21
    voll: float = 5000.0

    def __post_init__(self):
        if self.id < 0:
            raise ValueError(f"bus id must be non-negative, got {self.id}")
        if self.v_min < 0 or self.v_max < self.v_min:
            raise ValueError(
                f"bus {self.id}: need 0 <= v_min <= v_max, "
                f"got [{self.v_min}, {self.v_max}]"
            )
        if self.voll <= 0:
            raise ValueError(f"bus {self.id}: voll must be positive, got {self.voll}")
        if self.shunt_conductance < 0 or self.shunt_susceptance < 0:
            raise ValueError(f"bus {self.id}: shunt terms must be non-negative")


@dataclass(frozen=True)
class Line:
    """A distribution line; its id equals its child (receiving-from-grid) bus.

    Attributes:
        id: Line identifier, must equal ``to_bus``.
        from_bus: Parent bus (nearer the root).
        to_bus: Child bus; flow variables are measured at this end.
        resistance: Series R in p.u. (> 0).
        reactance: Series X in p.u. (> 0).
        apparent_limit: Normal-operation MVA limit in p.u. (>= 0).
    """

    id: int
    from_bus: int
    to_bus: int
    resistance: float
    reactance: float
    apparent_limit: float

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise ValueError(f"line {self.id}: from_bus == to_bus == {self.from_bus}")
        if self.resistance <= 0 or self.reactance <= 0:
            raise ValueError(
                f"line {self.id}: resistance and reactance must be positive"
            )
        if self.apparent_limit < 0:
            raise ValueError(f"line {self.id}: apparent_limit must be >= 0")


@dataclass(frozen=True)
class Generator:
    """A dispatchable source attached to one bus (at most one per bus)."""

    bus: int
    p_min: float
    p_max: float
    q_min: float
    q_max: float
    marginal_cost: float  # $/MWh

    def __post_init__(self):
        if self.p_max < self.p_min:
            raise ValueError(f"generator at bus {self.bus}: p_max < p_min")
        if self.q_max < self.q_min:
            raise ValueError(f"generator at bus {self.bus}: q_max < q_min")
        if self.marginal_cost < 0:
            raise ValueError(f"generator at bus {self.bus}: negative marginal cost")


class DemandProfile:
    """Hourly active/reactive demand per bus, stored in MW/MVAr.

    ``active`` and ``reactive`` map bus id -> array of length ``horizon``.
    Buses absent from the maps have zero demand.
    """

    def __init__(self, active: Mapping[int, Sequence[float]],
                 reactive: Mapping[int, Sequence[float]]):
        self.active = {int(b): np.asarray(v, dtype=float) for b, v in active.items()}
        self.reactive = {int(b): np.asarray(v, dtype=float)
                         for b, v in reactive.items()}
        lengths = {len(v) for v in self.active.values()}
        lengths |= {len(v) for v in self.reactive.values()}
        if len(lengths) > 1:
            raise ValueError(f"demand arrays have mixed lengths {sorted(lengths)}")
        self.horizon = lengths.pop() if lengths else 0
        for name, table in (("active", self.active), ("reactive", self.reactive)):
            for b, arr in table.items():
                if not np.all(np.isfinite(arr)):
                    raise ValueError(f"{name} demand at bus {b} has non-finite entries")
                if name == "active" and np.any(arr < 0):
                    raise ValueError(f"active demand at bus {b} has negative entries")

    def p(self, bus: int) -> np.ndarray:
        return self.active.get(bus, np.zeros(self.horizon))

    def q(self, bus: int) -> np.ndarray:
        return self.reactive.get(bus, np.zeros(self.horizon))


class Network:
    """Immutable-by-convention container for one feeder.

    Derived structures (parent map, children map, depth) are computed once at
    construction and shared; nothing here is mutated after ``__init__``.
    """

    def __init__(self, buses: Iterable[Bus], lines: Iterable[Line],
                 generators: Iterable[Generator], demand: DemandProfile,
                 base_mva: float = 1.0):
        if base_mva <= 0:
            raise ValueError(f"base_mva must be positive, got {base_mva}")
        self.buses = tuple(sorted(buses, key=lambda b: b.id))
        self.lines = tuple(sorted(lines, key=lambda l: l.id))
        self.generators = tuple(sorted(generators, key=lambda g: g.bus))
        self.demand = demand
        self.base_mva = float(base_mva)

        self.bus_by_id = {b.id: b for b in self.buses}
        self.line_by_id = {l.id: l for l in self.lines}
        self.gen_by_bus = {}
        for g in self.generators:
            if g.bus in self.gen_by_bus:
                raise ValueError(f"more than one generator at bus {g.bus}")
            self.gen_by_bus[g.bus] = g

        # parent[child_bus] = parent_bus, children[bus] = sorted child line ids
        self.parent: dict[int, int] = {}
        self.children: dict[int, list[int]] = {b.id: [] for b in self.buses}
        for l in self.lines:
            if l.to_bus in self.parent:
                continue  # duplicate child; validate_radial will flag it
            self.parent[l.to_bus] = l.from_bus
            if l.from_bus in self.children:
                self.children[l.from_bus].append(l.id)
        for v in self.children.values():
            v.sort()
        self._depth = self._compute_depths()

    def _compute_depths(self) -> dict[int, int]:
        depth = {0: 0} if 0 in self.bus_by_id else {}
        frontier = [0] if depth else []
        while frontier:
            nxt = []
            for b in frontier:
                for lid in self.children.get(b, ()):  # line id == child bus id
                    child = self.line_by_id[lid].to_bus
                    if child not in depth:
                        depth[child] = depth[b] + 1
                        nxt.append(child)
            frontier = nxt
        return depth

    @property
    def horizon(self) -> int:
        return self.demand.horizon

    def depth(self, bus: int) -> int:
        return self._depth[bus]

    def subtree_buses(self, bus: int) -> list[int]:
        """All buses at or below ``bus`` in the tree (including ``bus``)."""
        out, stack = [], [bus]
        while stack:
            b = stack.pop()
            out.append(b)
            stack.extend(self.line_by_id[lid].to_bus for lid in self.children.get(b, ()))
        return sorted(out)


def validate_radial(network: Network) -> list[str]:
    """Structural diagnostics for a feeder; empty list means valid.

    Checks: root bus 0 present with a generator and zero demand, unique ids,
    line id == child bus id, no parallel/duplicate lines, every bus reachable
    from the root, no cycles, all line endpoints are known buses, and line
    count equals bus count minus one.  Violations are returned (not raised) so
    callers can report all problems at once.
    """
    problems: list[str] = []
    ids = [b.id for b in network.buses]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        problems.append(f"duplicate bus ids {dupes}")
    if 0 not in network.bus_by_id:
        problems.append("missing root bus 0")
        return problems  # everything else assumes a root

    if 0 not in network.gen_by_bus:
        problems.append("no generator at root bus 0")
    root_p = network.demand.p(0)
    root_q = network.demand.q(0)
    if np.any(root_p != 0) or np.any(root_q != 0):
        problems.append("nonzero demand at root bus 0")

    seen_pairs = set()
    child_seen = set()
    for l in network.lines:
        if l.from_bus not in network.bus_by_id:
            problems.append(f"line {l.id} references unknown bus {l.from_bus}")
        if l.to_bus not in network.bus_by_id:
            problems.append(f"line {l.id} references unknown bus {l.to_bus}")
        if l.id != l.to_bus:
            problems.append(f"line {l.id} id must equal its child bus {l.to_bus}")
        pair = frozenset((l.from_bus, l.to_bus))
        if pair in seen_pairs:
            problems.append(f"parallel or duplicate line between "
                            f"{min(pair)} and {max(pair)}")
        seen_pairs.add(pair)
        if l.to_bus == 0:
            problems.append(f"line {l.id} makes the root a child")
        if l.to_bus in child_seen:
            problems.append(f"bus {l.to_bus} has two parent lines")
        child_seen.add(l.to_bus)

    reachable = set(network._depth)
    for b in network.buses:
        if b.id not in reachable:
            problems.append(f"disconnected bus {b.id}")
    if len(network.lines) != len(network.buses) - 1:
        problems.append(
            f"{len(network.lines)} lines for {len(network.buses)} buses "
            f"(a tree needs {len(network.buses) - 1})"
        )
    return problems


def children_of(network: Network, bus: int) -> list[int]:
    """Line ids whose parent end is ``bus`` (the lines feeding its children)."""
    if bus not in network.bus_by_id:
        raise KeyError(f"unknown bus {bus}")
    return list(network.children[bus])


def path_length(network: Network, b1: int, b2: int) -> int:
    """Number of lines on the unique tree path between two buses."""
    for b in (b1, b2):
        if b not in network._depth:
            raise KeyError(f"bus {b} not connected to the root")
    if b1 == b2:
        return 0
    d1, d2 = network._depth[b1], network._depth[b2]
    hops = 0
    while d1 > d2:
        b1 = network.parent[b1]
        d1 -= 1
        hops += 1
    while d2 > d1:
        b2 = network.parent[b2]
        d2 -= 1
        hops += 1
    while b1 != b2:
        b1 = network.parent[b1]
        b2 = network.parent[b2]
        hops += 2
    return hops
