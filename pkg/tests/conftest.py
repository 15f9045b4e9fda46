"""Shared fixtures.

Expensive end-to-end solves are session-scoped so the acceptance tests and
the unit tests can share one planning run instead of repeating it.
"""

import os

import pytest

from mesplan import fixture_path
from mesplan.ingest import load_network, load_scenarios

# keep subprocess fan-out modest on shared CI boxes unless the caller says
# otherwise; individual tests override where worker count is the point
os.environ.setdefault("PLANNER_THREADS", "2")


@pytest.fixture(scope="session")
def micro3():
    net, fleet = load_network(fixture_path("micro3.json"))
    scens = load_scenarios(fixture_path("micro3_scenarios.json"), net)
    return net, fleet, scens


@pytest.fixture(scope="session")
def feeder15():
    net, fleet = load_network(fixture_path("feeder15.json"))
    scens = load_scenarios(fixture_path("case1_scenarios.json"), net)
    return net, fleet, scens


@pytest.fixture(scope="session")
def feeder15s():
    net, fleet = load_network(fixture_path("feeder15s.json"))
    scens = load_scenarios(fixture_path("case2_scenarios.json"), net)
    return net, fleet, scens


@pytest.fixture(scope="session")
def gamma():
    return 1.0 / 3650.0
