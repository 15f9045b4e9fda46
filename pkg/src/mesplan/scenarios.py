"""Operating scenarios: normal conditions plus disaster-driven line deratings."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .grid import Line, Network

__all__ = [
    "DisasterEvent",
    "Scenario",
    "ScenarioSet",
    "derated_limit",
    "validate",
]

PROBABILITY_TOL = 1e-9


@dataclass(frozen=True)
class DisasterEvent:
    """A capacity derating of one line from ``t_start`` to the end of horizon.

    ``alpha`` is the derating fraction: the line keeps ``(1 - alpha)`` of its
    apparent-power limit.  ``alpha = 1`` takes the line out entirely.
    Periods are 1-based hours, matching the planning horizon.
    """

    line: int
    t_start: int
    alpha: float = 1.0

    def __post_init__(self):
        if self.t_start < 1:
            raise ValueError(f"event on line {self.line}: t_start must be >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(
                f"event on line {self.line}: alpha must be in [0, 1], got {self.alpha}"
            )


@dataclass(frozen=True)
class Scenario:
    """One realization of operating conditions over the horizon."""

    id: int
    probability: float
    events: tuple[DisasterEvent, ...] = ()
    demand_override: Optional[Mapping[str, Mapping[int, Sequence[float]]]] = None

    def __post_init__(self):
        if not 0.0 < self.probability <= 1.0:
            raise ValueError(
                f"scenario {self.id}: probability must be in (0, 1], "
                f"got {self.probability}"
            )
        object.__setattr__(self, "events", tuple(self.events))

    @property
    def is_normal(self) -> bool:
        return not self.events

    def demand_p(self, network: Network, bus: int) -> np.ndarray:
        """Active demand in MW for this scenario (override-aware)."""
        if self.demand_override and bus in self.demand_override.get("active", {}):
            return np.asarray(self.demand_override["active"][bus], dtype=float)
        return network.demand.p(bus)

    def demand_q(self, network: Network, bus: int) -> np.ndarray:
        if self.demand_override and bus in self.demand_override.get("reactive", {}):
            return np.asarray(self.demand_override["reactive"][bus], dtype=float)
        return network.demand.q(bus)


class ScenarioSet:
    """Ordered collection of scenarios; the first must be the normal one."""

    def __init__(self, scenarios: Sequence[Scenario]):
        self.scenarios = tuple(sorted(scenarios, key=lambda s: s.id))
        if len({s.id for s in self.scenarios}) != len(self.scenarios):
            raise ValueError("duplicate scenario ids")

    def __iter__(self):
        return iter(self.scenarios)

    def __len__(self):
        return len(self.scenarios)

    def by_id(self, sid: int) -> Scenario:
        for s in self.scenarios:
            if s.id == sid:
                return s
        raise KeyError(f"no scenario with id {sid}")

    @property
    def normal(self) -> Scenario:
        return self.scenarios[0]

    def weights(self) -> np.ndarray:
        return np.array([s.probability for s in self.scenarios])


def derated_limit(scenario: Scenario, line: Line, t: int) -> float:
    """Apparent-power limit of ``line`` at hour ``t`` (1-based) under ``scenario``.

    Deratings from multiple events on the same line compound multiplicatively.
    """
    if t < 1:
        raise ValueError(f"period must be >= 1, got {t}")
    limit = line.apparent_limit
    for ev in scenario.events:
        if ev.line == line.id and t >= ev.t_start:
            limit *= (1.0 - ev.alpha)
    return limit


def validate(scenario_set: ScenarioSet, network: Network,
             horizon: Optional[int] = None) -> list[str]:
    """Consistency diagnostics for a scenario set against a network.

    Returns violation strings (empty means valid): probabilities must sum to
    one within 1e-9, the first scenario must be event-free (normal
    operations), every event must reference a known line, and event start
    times must fall inside the horizon.
    """
    problems: list[str] = []
    horizon = network.horizon if horizon is None else horizon
    total = float(sum(s.probability for s in scenario_set))
    if abs(total - 1.0) > PROBABILITY_TOL:
        problems.append(f"probabilities sum to {total:g}")
    if len(scenario_set) == 0:
        problems.append("empty scenario set")
        return problems
    if not scenario_set.normal.is_normal:
        problems.append(
            f"first scenario {scenario_set.normal.id} has events; the "
            f"lowest-id scenario must describe normal operations"
        )
    for s in scenario_set:
        for ev in s.events:
            if ev.line not in network.line_by_id:
                problems.append(f"scenario {s.id}: unknown line {ev.line}")
            if not 1 <= ev.t_start <= horizon:
                problems.append(
                    f"scenario {s.id}: event on line {ev.line} starts at "
                    f"{ev.t_start}, outside horizon 1..{horizon}"
                )
        if s.demand_override:
            for key in s.demand_override:
                if key not in ("active", "reactive"):
                    problems.append(f"scenario {s.id}: unknown override key {key!r}")
    return problems
