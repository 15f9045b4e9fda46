import numpy as np
import pytest

from mesplan.grid import (Bus, DemandProfile, Generator, Line, Network,
                          children_of, path_length, validate_radial)


def _tiny(lines=None, generators=None, demand=None, buses=None):
    """Three-bus chain 0 - 1 - 2 with a root generator, tweakable."""
    if buses is None:
        buses = [Bus(0, v_min=1.0, v_max=1.0), Bus(1), Bus(2)]
    if lines is None:
        lines = [Line(1, 0, 1, 0.01, 0.01, 1.0),
                 Line(2, 1, 2, 0.01, 0.01, 1.0)]
    if generators is None:
        generators = [Generator(0, 0.0, 5.0, -5.0, 5.0, 40.0)]
    if demand is None:
        demand = DemandProfile({1: [0.2, 0.2]}, {1: [0.05, 0.05]})
    return Network(buses, lines, generators, demand)


def test_valid_network_has_no_problems():
    assert validate_radial(_tiny()) == []


def test_bus_rejects_bad_voltage_window():
    with pytest.raises(ValueError, match="v_min"):
        Bus(3, v_min=0.9, v_max=0.5)


def test_bus_rejects_nonpositive_voll():
    with pytest.raises(ValueError, match="voll"):
        Bus(3, voll=0.0)


def test_line_rejects_self_loop_and_bad_impedance():
    with pytest.raises(ValueError, match="from_bus"):
        Line(1, 1, 1, 0.01, 0.01, 1.0)
    with pytest.raises(ValueError, match="positive"):
        Line(1, 0, 1, 0.0, 0.01, 1.0)
    with pytest.raises(ValueError, match="apparent_limit"):
        Line(1, 0, 1, 0.01, 0.01, -1.0)


def test_generator_bound_ordering():
    with pytest.raises(ValueError, match="p_max"):
        Generator(0, 1.0, 0.5, -1.0, 1.0, 10.0)


def test_demand_profile_rejects_mixed_lengths():
    with pytest.raises(ValueError, match="mixed lengths"):
        DemandProfile({1: [0.1, 0.2]}, {1: [0.1]})


def test_demand_profile_rejects_negative_active():
    with pytest.raises(ValueError, match="negative"):
        DemandProfile({1: [-0.1, 0.2]}, {})
    # negative *reactive* demand is physical (capacitive load) and allowed
    DemandProfile({1: [0.1, 0.2]}, {1: [-0.1, -0.2]})


def test_demand_default_is_zero_vector():
    net = _tiny()
    assert np.array_equal(net.demand.p(2), np.zeros(2))
    assert net.horizon == 2


def test_duplicate_generator_bus_rejected():
    with pytest.raises(ValueError, match="more than one generator"):
        _tiny(generators=[Generator(0, 0, 5, -5, 5, 40.0),
                          Generator(0, 0, 1, -1, 1, 10.0)])


def test_line_id_must_match_child_bus():
    net = _tiny(lines=[Line(1, 0, 1, 0.01, 0.01, 1.0),
                       Line(5, 1, 2, 0.01, 0.01, 1.0)],
                buses=[Bus(0, v_min=1.0, v_max=1.0), Bus(1), Bus(2), Bus(5)])
    problems = validate_radial(net)
    assert any("must equal its child bus" in p for p in problems)


def test_missing_root_is_fatal_short_circuit():
    net = _tiny(buses=[Bus(1), Bus(2), Bus(3)],
                lines=[Line(2, 1, 2, 0.01, 0.01, 1.0),
                       Line(3, 2, 3, 0.01, 0.01, 1.0)],
                generators=[], demand=DemandProfile({}, {}))
    assert validate_radial(net) == ["missing root bus 0"]


def test_root_demand_flagged():
    net = _tiny(demand=DemandProfile({0: [0.1, 0.1], 1: [0.2, 0.2]}, {}))
    assert any("root bus 0" in p and "demand" in p
               for p in validate_radial(net))


def test_two_parents_flagged():
    net = _tiny(buses=[Bus(0, v_min=1, v_max=1), Bus(1), Bus(2), Bus(3)],
                lines=[Line(1, 0, 1, 0.01, 0.01, 1.0),
                       Line(2, 0, 2, 0.01, 0.01, 1.0),
                       Line(3, 1, 3, 0.01, 0.01, 1.0),
                       Line(3, 2, 3, 0.01, 0.01, 1.0)])
    problems = validate_radial(net)
    assert any("two parent lines" in p for p in problems)
    assert any("lines for" in p for p in problems)  # count check fires too


def test_disconnected_bus_flagged():
    net = _tiny(buses=[Bus(0, v_min=1, v_max=1), Bus(1), Bus(2), Bus(9)],
                lines=[Line(1, 0, 1, 0.01, 0.01, 1.0),
                       Line(2, 1, 2, 0.01, 0.01, 1.0)])
    problems = validate_radial(net)
    assert any("disconnected bus 9" in p for p in problems)


def test_children_and_depth():
    net = _tiny()
    assert children_of(net, 0) == [1]
    assert children_of(net, 1) == [2]
    assert children_of(net, 2) == []
    assert net.depth(0) == 0 and net.depth(2) == 2
    with pytest.raises(KeyError):
        children_of(net, 42)


def test_subtree_buses():
    net = _tiny()
    assert net.subtree_buses(0) == [0, 1, 2]
    assert net.subtree_buses(1) == [1, 2]
    assert net.subtree_buses(2) == [2]


@pytest.mark.parametrize("b1,b2,hops", [(0, 0, 0), (0, 1, 1), (0, 2, 2),
                                        (2, 0, 2), (1, 2, 1)])
def test_path_length_chain(b1, b2, hops):
    assert path_length(_tiny(), b1, b2) == hops


def test_path_length_forked():
    # 0 -> 1 -> 2 and 0 -> 3; the path 2..3 crosses the root
    net = _tiny(buses=[Bus(0, v_min=1, v_max=1), Bus(1), Bus(2), Bus(3)],
                lines=[Line(1, 0, 1, 0.01, 0.01, 1.0),
                       Line(2, 1, 2, 0.01, 0.01, 1.0),
                       Line(3, 0, 3, 0.01, 0.01, 1.0)])
    assert path_length(net, 2, 3) == 3
    assert path_length(net, 1, 3) == 2


def test_path_length_unknown_bus_raises():
    with pytest.raises(KeyError):
        path_length(_tiny(), 0, 17)


def test_fixture_networks_validate(micro3, feeder15, feeder15s):
    for net, _, _ in (micro3, feeder15, feeder15s):
        assert validate_radial(net) == []
