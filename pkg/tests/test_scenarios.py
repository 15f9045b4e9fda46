import numpy as np
import pytest

from mesplan.grid import Bus, DemandProfile, Generator, Line, Network
from mesplan.scenarios import (DisasterEvent, Scenario, ScenarioSet,
                               derated_limit, validate)


@pytest.fixture()
def net():
    buses = [Bus(0, v_min=1, v_max=1), Bus(1), Bus(2)]
    lines = [Line(1, 0, 1, 0.01, 0.01, 0.8),
             Line(2, 1, 2, 0.01, 0.01, 0.5)]
    return Network(buses, lines, [Generator(0, 0, 5, -5, 5, 40.0)],
                   DemandProfile({1: [0.2, 0.2, 0.2, 0.2]},
                                 {1: [0.05, 0.05, 0.05, 0.05]}))


def _pair(events2=()):
    return ScenarioSet([Scenario(1, 0.6, ()),
                        Scenario(2, 0.4, tuple(events2))])


def test_event_validation():
    with pytest.raises(ValueError, match="t_start"):
        DisasterEvent(line=1, t_start=0, alpha=0.5)
    with pytest.raises(ValueError, match="alpha"):
        DisasterEvent(line=1, t_start=1, alpha=1.5)


def test_scenario_probability_window():
    with pytest.raises(ValueError, match="probability"):
        Scenario(1, 0.0, ())
    with pytest.raises(ValueError, match="probability"):
        Scenario(1, 1.5, ())


def test_is_normal():
    assert Scenario(1, 1.0, ()).is_normal
    assert not Scenario(2, 1.0, (DisasterEvent(1, 2, 0.5),)).is_normal


def test_scenario_set_sorts_and_indexes():
    ss = ScenarioSet([Scenario(2, 0.4, (DisasterEvent(1, 2, 1.0),)),
                      Scenario(1, 0.6, ())])
    assert [s.id for s in ss] == [1, 2]
    assert ss.by_id(2).probability == 0.4
    assert ss.normal.id == 1
    assert len(ss) == 2
    assert np.allclose(ss.weights(), [0.6, 0.4])


def test_derated_limit_steps_down_at_onset(net):
    scen = Scenario(2, 1.0, (DisasterEvent(2, 3, 0.6),))
    line = net.line_by_id[2]
    assert derated_limit(scen, line, 1) == pytest.approx(0.5)
    assert derated_limit(scen, line, 2) == pytest.approx(0.5)
    assert derated_limit(scen, line, 3) == pytest.approx(0.2)
    assert derated_limit(scen, line, 4) == pytest.approx(0.2)
    with pytest.raises(ValueError, match="period"):
        derated_limit(scen, line, 0)


def test_derated_limit_compounds_same_line(net):
    scen = Scenario(2, 1.0, (DisasterEvent(2, 1, 0.5),
                             DisasterEvent(2, 3, 0.5)))
    line = net.line_by_id[2]
    assert derated_limit(scen, line, 2) == pytest.approx(0.25)
    assert derated_limit(scen, line, 3) == pytest.approx(0.125)


def test_full_trip_gives_zero_limit(net):
    scen = Scenario(2, 1.0, (DisasterEvent(1, 2, 1.0),))
    assert derated_limit(scen, net.line_by_id[1], 4) == 0.0


def test_demand_override(net):
    scen = Scenario(2, 1.0, (DisasterEvent(1, 1, 0.1),),
                    demand_override={"active": {1: [0.3, 0.3, 0.3, 0.3]}})
    assert np.allclose(scen.demand_p(net, 1), 0.3)
    # untouched quantities fall through to the base profile
    assert np.allclose(scen.demand_q(net, 1), 0.05)
    assert np.allclose(scen.demand_p(net, 2), 0.0)


def test_validate_accepts_good_set(net):
    ss = _pair([DisasterEvent(2, 2, 1.0)])
    assert validate(ss, net) == []


def test_validate_probability_sum(net):
    ss = ScenarioSet([Scenario(1, 0.6, ()), Scenario(2, 0.3, ())])
    assert any("probabilities sum" in p for p in validate(ss, net))


def test_validate_first_scenario_must_be_normal(net):
    ss = ScenarioSet([Scenario(1, 0.5, (DisasterEvent(1, 1, 0.5),)),
                      Scenario(2, 0.5, ())])
    assert any("normal" in p.lower() or "event" in p.lower()
               for p in validate(ss, net))


def test_validate_unknown_line_and_late_onset(net):
    ss = _pair([DisasterEvent(9, 2, 1.0)])
    assert any("unknown line" in p or "line 9" in p for p in validate(ss, net))
    late = _pair([DisasterEvent(2, 99, 1.0)])
    assert any("horizon" in p for p in validate(late, net))


def test_validate_respects_horizon_argument(net):
    ss = _pair([DisasterEvent(2, 4, 1.0)])
    assert validate(ss, net) == []
    assert any("horizon" in p for p in validate(ss, net, horizon=2))


def test_fixture_scenario_sets_are_valid(micro3, feeder15, feeder15s):
    for net, _, scens in (micro3, feeder15, feeder15s):
        assert validate(scens, net) == []
        assert scens.normal.is_normal
