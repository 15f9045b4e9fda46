import json

import pytest

from mesplan import fixture_path
from mesplan.ingest import SchemaError, load_network, load_scenarios


def _doc():
    """Minimal valid network document, mutated per test."""
    return {
        "base_mva": 1.0,
        "buses": [{"id": 0, "v_min": 1.0, "v_max": 1.0}, {"id": 1}],
        "lines": [{"from_bus": 0, "to_bus": 1, "resistance": 0.01,
                   "reactance": 0.01, "apparent_limit": 1.0}],
        "generators": [{"bus": 0, "p_max": 5.0, "q_min": -5.0, "q_max": 5.0,
                        "marginal_cost": 40.0}],
        "demand": {"active": {"1": [0.2, 0.2]},
                   "reactive": {"1": [0.05, 0.05]}},
        "storage_units": [{"id": 1, "power_rating": 0.1,
                           "energy_rating": 0.2, "initial_soc": 0.1}],
    }


def _write(tmp_path, doc, name="net.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def test_roundtrip_minimal(tmp_path):
    net, fleet = load_network(_write(tmp_path, _doc()))
    assert [b.id for b in net.buses] == [0, 1]
    assert net.horizon == 2
    assert len(fleet) == 1
    # line id defaults to the child bus
    assert net.lines[0].id == 1
    # transit defaults to the distance formula, hosting to fleet size
    assert fleet.transit.rule == "formula"
    assert fleet.hosting_limit(1) == 1


def test_invalid_json_reports_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"buses": [,]}')
    with pytest.raises(SchemaError) as err:
        load_network(p)
    assert ":1:" in err.value.path  # file:line:col


def test_missing_file(tmp_path):
    with pytest.raises(SchemaError, match="cannot read"):
        load_network(tmp_path / "nope.json")


def test_missing_field_path(tmp_path):
    doc = _doc()
    del doc["lines"][0]["resistance"]
    with pytest.raises(SchemaError) as err:
        load_network(_write(tmp_path, doc))
    assert err.value.path == "lines[0].resistance"


def test_bool_is_not_a_number(tmp_path):
    doc = _doc()
    doc["buses"][1]["voll"] = True
    with pytest.raises(SchemaError, match="bool"):
        load_network(_write(tmp_path, doc))


def test_domain_error_becomes_schema_error(tmp_path):
    doc = _doc()
    doc["lines"][0]["resistance"] = -0.5
    with pytest.raises(SchemaError) as err:
        load_network(_write(tmp_path, doc))
    assert err.value.path == "lines[0]"


def test_structural_problems_reported_together(tmp_path):
    doc = _doc()
    doc["buses"].append({"id": 7})  # disconnected and breaks the line count
    with pytest.raises(SchemaError) as err:
        load_network(_write(tmp_path, doc))
    msg = str(err.value)
    assert "disconnected bus 7" in msg and "lines for" in msg


def test_transit_pair_keys(tmp_path):
    doc = _doc()
    doc["transit"] = {"rule": "matrix", "hours": {"0,1": 2, "1-0": 2}}
    net, fleet = load_network(_write(tmp_path, doc))
    assert fleet.transit.hours == {frozenset((0, 1)): 2}

    doc["transit"] = {"rule": "matrix", "hours": {"0:1": 2}}
    with pytest.raises(SchemaError, match="pair key"):
        load_network(_write(tmp_path, doc))

    doc["transit"] = {"rule": "matrix", "hours": {"0,1": 1.5}}
    with pytest.raises(SchemaError, match="integer"):
        load_network(_write(tmp_path, doc))


def test_hosting_default_expansion(tmp_path):
    doc = _doc()
    doc["hosting_limits"] = {"default": 0, "1": 1}
    net, fleet = load_network(_write(tmp_path, doc))
    assert fleet.hosting_limit(0) == 0
    assert fleet.hosting_limit(1) == 1

    doc["hosting_limits"] = {"elsewhere": 1}
    with pytest.raises(SchemaError, match="bus ids"):
        load_network(_write(tmp_path, doc))


def test_scenarios_roundtrip(tmp_path):
    net, _ = load_network(_write(tmp_path, _doc()))
    sdoc = {"scenarios": [
        {"id": 1, "probability": 0.8, "events": []},
        {"id": 2, "probability": 0.2,
         "events": [{"line": 1, "t_start": 2, "alpha": 0.5}],
         "demand_override": {"active": {"1": [0.4, 0.4]}}},
    ]}
    ss = load_scenarios(_write(tmp_path, sdoc, "scen.json"), net)
    assert len(ss) == 2
    assert ss.by_id(2).events[0].alpha == 0.5
    assert ss.by_id(2).demand_p(net, 1)[0] == pytest.approx(0.4)


def test_scenarios_validation_enforced(tmp_path):
    net, _ = load_network(_write(tmp_path, _doc()))
    sdoc = {"scenarios": [
        {"id": 1, "probability": 0.8, "events": []},
        {"id": 2, "probability": 0.1, "events": []},
    ]}
    with pytest.raises(SchemaError, match="probabilities sum"):
        load_scenarios(_write(tmp_path, sdoc, "scen.json"), net)
    sdoc = {"scenarios": [
        {"id": 1, "probability": 0.5,
         "events": [{"line": 1, "t_start": 1}]},
        {"id": 2, "probability": 0.5, "events": []},
    ]}
    with pytest.raises(SchemaError):
        load_scenarios(_write(tmp_path, sdoc, "scen.json"), net)


def test_bundled_fixtures_load():
    for net_name, scen_name in (("micro3.json", "micro3_scenarios.json"),
                                ("feeder15.json", "case1_scenarios.json"),
                                ("feeder15s.json", "case2_scenarios.json")):
        net, fleet = load_network(fixture_path(net_name))
        ss = load_scenarios(fixture_path(scen_name), net)
        assert len(fleet) >= 1 and len(ss) >= 2
