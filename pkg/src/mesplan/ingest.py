"""JSON ingestion for networks, fleets and scenario sets.

Two document kinds are understood:

* a network document holding ``base_mva``, ``buses``, ``lines``,
  ``generators``, ``demand`` (per-bus hourly MW/MVAr arrays), plus the fleet
  sections ``storage_units``, ``transit`` and ``hosting_limits``;
* a scenario document holding a ``scenarios`` list.

Schema problems raise :class:`SchemaError` carrying a dotted field path
(``lines[3].resistance``); malformed JSON raises it with the decoder's
line/column.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Optional

from .assets import Fleet, MobileEsUnit, TransitModel
from .grid import Bus, DemandProfile, Generator, Line, Network, validate_radial
from .scenarios import DisasterEvent, Scenario, ScenarioSet
from .scenarios import validate as validate_scenarios

__all__ = ["SchemaError", "load_network", "load_scenarios"]


class SchemaError(ValueError):
    """An input document failed validation; ``path`` points at the field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def _read_json(path) -> Any:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SchemaError(str(path), f"cannot read file ({exc})") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(
            f"{path}:{exc.lineno}:{exc.colno}", f"invalid JSON ({exc.msg})"
        ) from exc


def _get(doc: dict, key: str, where: str, kind=None, required=True, default=None):
    if key not in doc:
        if required:
            raise SchemaError(f"{where}.{key}" if where else key, "missing field")
        return default
    value = doc[key]
    if kind is not None and not isinstance(value, kind):
        names = kind.__name__ if isinstance(kind, type) else "/".join(
            k.__name__ for k in kind)
        raise SchemaError(f"{where}.{key}" if where else key,
                          f"expected {names}, got {type(value).__name__}")
    return value


def _num(doc: dict, key: str, where: str, required=True, default=None) -> float:
    value = _get(doc, key, where, kind=(int, float), required=required,
                 default=default)
    if isinstance(value, bool):
        raise SchemaError(f"{where}.{key}", "expected a number, got bool")
    return value


def _build(factory, where: str, **kwargs):
    """Construct a model object, converting ValueError into SchemaError."""
    try:
        return factory(**kwargs)
    except ValueError as exc:
        raise SchemaError(where, str(exc)) from exc


def _parse_demand(doc: dict, where: str) -> DemandProfile:
    tables = {}
    for key in ("active", "reactive"):
        raw = _get(doc, key, where, kind=dict, required=False, default={})
        table = {}
        for bus_key, arr in raw.items():
            try:
                bus = int(bus_key)
            except ValueError:
                raise SchemaError(f"{where}.{key}.{bus_key}",
                                  "bus key must be an integer") from None
            if not isinstance(arr, list) or not all(
                    isinstance(v, (int, float)) and not isinstance(v, bool)
                    for v in arr):
                raise SchemaError(f"{where}.{key}.{bus_key}",
                                  "expected an array of numbers")
            table[bus] = arr
        tables[key] = table
    return _build(DemandProfile, where, active=tables["active"],
                  reactive=tables["reactive"])


def _parse_transit(doc: Optional[dict], where: str) -> TransitModel:
    if doc is None:
        return TransitModel(rule="formula")
    rule = _get(doc, "rule", where, kind=str, required=False, default="formula")
    hours = None
    raw = _get(doc, "hours", where, kind=dict, required=False)
    if raw is not None:
        hours = {}
        for pair_key, h in raw.items():
            parts = pair_key.replace("-", ",").split(",")
            if len(parts) != 2:
                raise SchemaError(f"{where}.hours.{pair_key}",
                                  'pair key must look like "3,7"')
            try:
                pair = frozenset((int(parts[0]), int(parts[1])))
            except ValueError:
                raise SchemaError(f"{where}.hours.{pair_key}",
                                  "pair key must hold two integers") from None
            if not isinstance(h, int) or isinstance(h, bool):
                raise SchemaError(f"{where}.hours.{pair_key}",
                                  "hours must be an integer")
            hours[pair] = h
    return _build(TransitModel, where, rule=rule, hours=hours)


def load_network(path) -> tuple[Network, Fleet]:
    """Load a network document; returns the feeder and its candidate fleet.

    Raises :class:`SchemaError` on any structural problem, including
    violations reported by :func:`mesplan.grid.validate_radial`.
    """
    doc = _read_json(path)
    if not isinstance(doc, dict):
        raise SchemaError(str(path), "top level must be an object")

    base_mva = _num(doc, "base_mva", "", required=False, default=1.0)

    buses = []
    for i, raw in enumerate(_get(doc, "buses", "", kind=list)):
        where = f"buses[{i}]"
        if not isinstance(raw, dict):
            raise SchemaError(where, "expected an object")
        buses.append(_build(
            Bus, where,
            id=int(_num(raw, "id", where)),
            shunt_conductance=_num(raw, "shunt_conductance", where,
                                   required=False, default=0.0),
            shunt_susceptance=_num(raw, "shunt_susceptance", where,
                                   required=False, default=0.0),
            v_min=_num(raw, "v_min", where, required=False, default=0.81),
            v_max=_num(raw, "v_max", where, required=False, default=1.21),
            voll=_num(raw, "voll", where, required=False, default=5000.0),
        ))

    lines = []
    for i, raw in enumerate(_get(doc, "lines", "", kind=list)):
        where = f"lines[{i}]"
        if not isinstance(raw, dict):
            raise SchemaError(where, "expected an object")
        to_bus = int(_num(raw, "to_bus", where))
        lines.append(_build(
            Line, where,
            id=int(_num(raw, "id", where, required=False, default=to_bus)),
            from_bus=int(_num(raw, "from_bus", where)),
            to_bus=to_bus,
            resistance=_num(raw, "resistance", where),
            reactance=_num(raw, "reactance", where),
            apparent_limit=_num(raw, "apparent_limit", where),
        ))

    generators = []
    for i, raw in enumerate(_get(doc, "generators", "", kind=list)):
        where = f"generators[{i}]"
        if not isinstance(raw, dict):
            raise SchemaError(where, "expected an object")
        generators.append(_build(
            Generator, where,
            bus=int(_num(raw, "bus", where)),
            p_min=_num(raw, "p_min", where, required=False, default=0.0),
            p_max=_num(raw, "p_max", where),
            q_min=_num(raw, "q_min", where, required=False, default=0.0),
            q_max=_num(raw, "q_max", where, required=False, default=0.0),
            marginal_cost=_num(raw, "marginal_cost", where),
        ))

    demand = _parse_demand(_get(doc, "demand", "", kind=dict), "demand")
    network = _build(Network, "network", buses=buses, lines=lines,
                     generators=generators, demand=demand, base_mva=base_mva)
    problems = validate_radial(network)
    if problems:
        raise SchemaError("network", "; ".join(problems))

    units = []
    for i, raw in enumerate(_get(doc, "storage_units", "", kind=list,
                                 required=False, default=[])):
        where = f"storage_units[{i}]"
        if not isinstance(raw, dict):
            raise SchemaError(where, "expected an object")
        units.append(_build(
            MobileEsUnit, where,
            id=int(_num(raw, "id", where)),
            power_rating=_num(raw, "power_rating", where),
            energy_rating=_num(raw, "energy_rating", where),
            eta_ch=_num(raw, "eta_ch", where, required=False, default=0.9),
            eta_dis=_num(raw, "eta_dis", where, required=False, default=0.9),
            degradation_slope=_num(raw, "degradation_slope", where,
                                   required=False, default=0.0),
            price_power=_num(raw, "price_power", where,
                             required=False, default=1000.0),
            price_energy=_num(raw, "price_energy", where,
                              required=False, default=50.0),
            power_factor_param=_num(raw, "power_factor_param", where,
                                    required=False, default=0.48),
            initial_soc=_num(raw, "initial_soc", where, required=False,
                             default=0.5),
        ))

    transit = _parse_transit(
        _get(doc, "transit", "", kind=dict, required=False), "transit")

    hosting = {}
    raw_hosting = _get(doc, "hosting_limits", "", kind=dict, required=False,
                       default={})
    default_limit = None
    for key, value in raw_hosting.items():
        if not isinstance(value, int) or isinstance(value, bool):
            raise SchemaError(f"hosting_limits.{key}", "expected an integer")
        if key == "default":
            default_limit = value
            continue
        try:
            hosting[int(key)] = value
        except ValueError:
            raise SchemaError(f"hosting_limits.{key}",
                              'keys must be bus ids or "default"') from None
    if default_limit is not None:
        for b in network.bus_by_id:
            hosting.setdefault(b, default_limit)

    fleet = _build(Fleet, "storage_units", units=units, transit=transit,
                   hosting_limits=hosting)
    return network, fleet


def load_scenarios(path, network: Network,
                   horizon: Optional[int] = None) -> ScenarioSet:
    """Load a scenario document and validate it against ``network``."""
    doc = _read_json(path)
    if not isinstance(doc, dict):
        raise SchemaError(str(path), "top level must be an object")
    scenarios = []
    for i, raw in enumerate(_get(doc, "scenarios", "", kind=list)):
        where = f"scenarios[{i}]"
        if not isinstance(raw, dict):
            raise SchemaError(where, "expected an object")
        events = []
        for j, ev in enumerate(_get(raw, "events", where, kind=list,
                                    required=False, default=[])):
            ev_where = f"{where}.events[{j}]"
            if not isinstance(ev, dict):
                raise SchemaError(ev_where, "expected an object")
            events.append(_build(
                DisasterEvent, ev_where,
                line=int(_num(ev, "line", ev_where)),
                t_start=int(_num(ev, "t_start", ev_where)),
                alpha=_num(ev, "alpha", ev_where, required=False, default=1.0),
            ))
        override = _get(raw, "demand_override", where, kind=dict, required=False)
        if override is not None:
            override = {
                key: {int(b): arr for b, arr in table.items()}
                for key, table in override.items()
            }
        scenarios.append(_build(
            Scenario, where,
            id=int(_num(raw, "id", where)),
            probability=_num(raw, "probability", where),
            events=tuple(events),
            demand_override=override,
        ))
    try:
        scenario_set = ScenarioSet(scenarios)
    except ValueError as exc:
        raise SchemaError("scenarios", str(exc)) from exc
    problems = validate_scenarios(scenario_set, network, horizon=horizon)
    if problems:
        raise SchemaError("scenarios", "; ".join(problems))
    return scenario_set
