"""Siting, routing and dispatch planning for mobile energy storage on radial feeders.

The package solves a two-stage stochastic program: install decisions are made
once, then per-scenario placement/routing and dispatch respond to disasters
that derate distribution lines.  Power flow uses a second-order-cone
relaxation of the branch-flow equations; the mixed-integer solver is an
in-package branch-and-bound over an LP outer approximation of the cones, and
scenario decomposition uses progressive hedging with an extensive-form
brute-force twin for validation.
"""

from .assets import Fleet, MobileEsUnit, TransitModel
from .grid import Bus, DemandProfile, Generator, Line, Network
from .scenarios import DisasterEvent, Scenario, ScenarioSet

__version__ = "0.1.0"

__all__ = [
    "Bus", "Line", "Generator", "DemandProfile", "Network",
    "MobileEsUnit", "TransitModel", "Fleet",
    "DisasterEvent", "Scenario", "ScenarioSet",
    "__version__",
]


def fixture_path(name: str):
    """Absolute path of a bundled example dataset (see ``mesplan/fixtures``)."""
    from pathlib import Path

    p = Path(__file__).parent / "fixtures" / name
    if not p.exists():
        available = sorted(q.name for q in p.parent.glob("*.json"))
        raise FileNotFoundError(f"no fixture {name!r}; available: {available}")
    return p
