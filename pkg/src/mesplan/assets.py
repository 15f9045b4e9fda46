"""Mobile energy storage units, fleet limits and road transit times."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .grid import Network, path_length

__all__ = [
    "MobileEsUnit",
    "TransitModel",
    "Fleet",
    "investment_cost",
    "transit_time",
    "degradation_cost",
]


@dataclass(frozen=True)
class MobileEsUnit:
    """One truck-mounted storage unit.

    Power ratings are grid-side MW; ``energy_rating`` and ``initial_soc`` are
    MWh.  ``degradation_slope`` is the linearized cycling-wear slope in
    percent of capacity per MWh of grid-side throughput; it prices wear at
    ``|slope/100| * price_power * 1000`` dollars per MWh moved, charging and
    discharging alike.  ``power_factor_param`` bounds reactive output to
    ``[-k * p, k * p]`` around the active injection/draw.
    """

    id: int
    power_rating: float            # MW, grid side
    energy_rating: float           # MWh
    eta_ch: float = 0.9
    eta_dis: float = 0.9
    degradation_slope: float = 0.0
    price_power: float = 1000.0    # $/kW of power rating
    price_energy: float = 50.0     # $/kWh of energy rating
    power_factor_param: float = 0.48
    initial_soc: float = 0.5       # MWh

    def __post_init__(self):
        if self.power_rating <= 0 or self.energy_rating <= 0:
            raise ValueError(f"unit {self.id}: ratings must be positive")
        for name in ("eta_ch", "eta_dis"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"unit {self.id}: {name} must be in (0, 1], got {v}")
        if self.degradation_slope < 0:
            raise ValueError(f"unit {self.id}: degradation_slope must be >= 0")
        if self.price_power < 0 or self.price_energy < 0:
            raise ValueError(f"unit {self.id}: prices must be >= 0")
        if self.power_factor_param < 0:
            raise ValueError(f"unit {self.id}: power_factor_param must be >= 0")
        if not 0 <= self.initial_soc <= self.energy_rating:
            raise ValueError(
                f"unit {self.id}: initial_soc {self.initial_soc} outside "
                f"[0, {self.energy_rating}]"
            )

    def capital_cost(self) -> float:
        """Installed cost in dollars (ratings are MW/MWh, prices $/kW, $/kWh)."""
        return 1000.0 * (self.price_power * self.power_rating
                         + self.price_energy * self.energy_rating)


@dataclass(frozen=True)
class TransitModel:
    """Road travel time between candidate buses, in whole hours.

    ``rule`` is ``"formula"`` (travel time = min(|b1 - b2|, tree distance in
    lines)) or ``"matrix"`` with an explicit symmetric ``hours`` table.  An
    optional ``overrides`` table gives a different matrix for specific
    periods; absent periods fall back to the time-invariant rule.
    """

    rule: str = "formula"
    hours: Optional[Mapping[frozenset, int]] = None
    overrides: Optional[Mapping[int, Mapping[frozenset, int]]] = None

    def __post_init__(self):
        if self.rule not in ("formula", "matrix"):
            raise ValueError(f"unknown transit rule {self.rule!r}")
        if self.rule == "matrix" and not self.hours:
            raise ValueError("matrix transit rule needs an hours table")
        for table in [self.hours or {}] + list((self.overrides or {}).values()):
            for pair, h in table.items():
                if h != int(h) or h < 0:
                    raise ValueError(f"transit hours for {sorted(pair)} must be a "
                                     f"non-negative integer, got {h}")


class Fleet:
    """The candidate storage units plus siting limits.

    ``hosting_limits`` maps bus id -> max units parked there simultaneously;
    buses not listed default to the fleet size (non-binding).
    """

    def __init__(self, units: Sequence[MobileEsUnit], transit: TransitModel,
                 hosting_limits: Optional[Mapping[int, int]] = None):
        self.units = tuple(sorted(units, key=lambda u: u.id))
        if len({u.id for u in self.units}) != len(self.units):
            raise ValueError("duplicate unit ids in fleet")
        self.transit = transit
        self.hosting_limits = dict(hosting_limits or {})
        for b, n in self.hosting_limits.items():
            if n < 0 or n != int(n):
                raise ValueError(f"hosting limit at bus {b} must be a "
                                 f"non-negative integer, got {n}")

    def __len__(self):
        return len(self.units)

    def hosting_limit(self, bus: int) -> int:
        return int(self.hosting_limits.get(bus, len(self.units)))


def investment_cost(units: Sequence[MobileEsUnit], install: Sequence[float]) -> float:
    """Total capital cost ($) of the selected units.

    ``install`` holds one 0/1 (or fractional, during relaxations) decision per
    unit, in unit order.
    """
    if len(install) != len(units):
        raise ValueError(
            f"{len(install)} install decisions for {len(units)} units"
        )
    return float(sum(u.capital_cost() * xi for u, xi in zip(units, install)))


def transit_time(model: TransitModel, network: Network, b1: int, b2: int,
                 t: Optional[int] = None) -> int:
    """Travel time in whole hours between two buses (0 when b1 == b2)."""
    if b1 == b2:
        return 0
    pair = frozenset((b1, b2))
    if t is not None and model.overrides and t in model.overrides:
        table = model.overrides[t]
        if pair in table:
            return int(table[pair])
    if model.rule == "matrix":
        try:
            return int(model.hours[pair])
        except KeyError:
            raise KeyError(f"no transit entry for buses {b1} and {b2}") from None
    return min(abs(b1 - b2), path_length(network, b1, b2))


def degradation_cost(unit: MobileEsUnit, p_charge: float, p_discharge: float) -> float:
    """Cycling-wear cost in $ for one hour at the given grid-side powers (MW)."""
    if p_charge < 0 or p_discharge < 0:
        raise ValueError("charge/discharge power must be non-negative")
    rate = abs(unit.degradation_slope / 100.0) * unit.price_power * 1000.0
    return rate * (p_charge + p_discharge)
