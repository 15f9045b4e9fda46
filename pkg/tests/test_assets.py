import pytest

from mesplan.assets import (Fleet, MobileEsUnit, TransitModel,
                            degradation_cost, investment_cost, transit_time)
from mesplan.grid import Bus, DemandProfile, Generator, Line, Network


@pytest.fixture()
def unit():
    return MobileEsUnit(id=1, power_rating=0.2, energy_rating=0.5,
                        degradation_slope=0.003, initial_soc=0.25)


@pytest.fixture()
def chain4():
    buses = [Bus(0, v_min=1, v_max=1), Bus(1), Bus(2), Bus(3)]
    lines = [Line(1, 0, 1, 0.01, 0.01, 1.0),
             Line(2, 1, 2, 0.01, 0.01, 1.0),
             Line(3, 2, 3, 0.01, 0.01, 1.0)]
    return Network(buses, lines, [Generator(0, 0, 5, -5, 5, 40.0)],
                   DemandProfile({1: [0.1]}, {}))


def test_capital_cost(unit):
    # $/kW * MW and $/kWh * MWh both pick up a factor of 1000
    assert unit.capital_cost() == pytest.approx(
        1000.0 * (1000.0 * 0.2 + 50.0 * 0.5))


def test_unit_validation_messages():
    with pytest.raises(ValueError, match="ratings"):
        MobileEsUnit(1, 0.0, 0.5)
    with pytest.raises(ValueError, match="eta_ch"):
        MobileEsUnit(1, 0.1, 0.5, eta_ch=1.2)
    with pytest.raises(ValueError, match="initial_soc"):
        MobileEsUnit(1, 0.1, 0.5, initial_soc=0.6)
    with pytest.raises(ValueError, match="degradation"):
        MobileEsUnit(1, 0.1, 0.5, degradation_slope=-1.0)


def test_investment_cost_sums_selected(unit):
    other = MobileEsUnit(2, 0.1, 0.2, initial_soc=0.1)
    total = investment_cost([unit, other], [1.0, 0.0])
    assert total == pytest.approx(unit.capital_cost())
    # fractional relaxation values are fine, mismatched lengths are not
    assert investment_cost([unit, other], [0.5, 0.5]) == pytest.approx(
        0.5 * (unit.capital_cost() + other.capital_cost()))
    with pytest.raises(ValueError, match="install decisions"):
        investment_cost([unit], [1.0, 0.0])


def test_fleet_rejects_duplicate_ids(unit):
    with pytest.raises(ValueError, match="duplicate unit ids"):
        Fleet([unit, MobileEsUnit(1, 0.3, 0.4, initial_soc=0.2)],
              TransitModel())


def test_fleet_hosting_default_is_fleet_size(unit):
    fleet = Fleet([unit, MobileEsUnit(2, 0.1, 0.2, initial_soc=0.1)],
                  TransitModel(), hosting_limits={3: 1, 7: 0})
    assert fleet.hosting_limit(3) == 1
    assert fleet.hosting_limit(7) == 0
    assert fleet.hosting_limit(99) == 2  # unlisted -> non-binding
    with pytest.raises(ValueError, match="hosting limit"):
        Fleet([unit], TransitModel(), hosting_limits={1: -2})


def test_transit_formula_rule(chain4):
    model = TransitModel(rule="formula")
    # min(bus id gap, tree hops); on a chain they coincide
    assert transit_time(model, chain4, 0, 3) == 3
    assert transit_time(model, chain4, 3, 1) == 2
    assert transit_time(model, chain4, 2, 2) == 0


def test_transit_formula_uses_smaller_of_gap_and_hops():
    # fork: 0 -> 1, 0 -> 9; id gap 8 but only 2 hops through the root
    buses = [Bus(0, v_min=1, v_max=1), Bus(1), Bus(9)]
    lines = [Line(1, 0, 1, 0.01, 0.01, 1.0), Line(9, 0, 9, 0.01, 0.01, 1.0)]
    net = Network(buses, lines, [Generator(0, 0, 5, -5, 5, 40.0)],
                  DemandProfile({1: [0.1]}, {}))
    assert transit_time(TransitModel(rule="formula"), net, 1, 9) == 2


def test_transit_matrix_rule(chain4):
    model = TransitModel(rule="matrix",
                         hours={frozenset((0, 1)): 2, frozenset((1, 3)): 4})
    assert transit_time(model, chain4, 1, 0) == 2
    assert transit_time(model, chain4, 3, 1) == 4
    with pytest.raises(KeyError, match="no transit entry"):
        transit_time(model, chain4, 0, 3)


def test_transit_overrides_beat_base_rule(chain4):
    model = TransitModel(rule="formula",
                         overrides={5: {frozenset((0, 1)): 7}})
    assert transit_time(model, chain4, 0, 1, t=5) == 7
    assert transit_time(model, chain4, 0, 1, t=4) == 1
    assert transit_time(model, chain4, 0, 1) == 1  # no period given


def test_transit_model_validation():
    with pytest.raises(ValueError, match="unknown transit rule"):
        TransitModel(rule="teleport")
    with pytest.raises(ValueError, match="hours table"):
        TransitModel(rule="matrix")
    with pytest.raises(ValueError, match="non-negative integer"):
        TransitModel(rule="matrix", hours={frozenset((0, 1)): -3})


def test_degradation_cost(unit):
    # 0.003 %/MWh slope on a $1000/kW unit -> $30 per MWh moved
    assert degradation_cost(unit, 0.5, 0.25) == pytest.approx(30.0 * 0.75)
    assert degradation_cost(unit, 0.0, 0.0) == 0.0
    with pytest.raises(ValueError, match="non-negative"):
        degradation_cost(unit, -0.1, 0.0)
