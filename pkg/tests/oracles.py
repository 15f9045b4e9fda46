"""Independent re-implementations used to cross-check the optimizer.

Everything here is written from first principles on purpose: plain
loops over the network description for route legality, and cvxpy with
an interior-point conic solver for dispatch.  A bug in the package's
model builder or in the LP/branch-and-bound engine therefore cannot
cancel out against itself when the tests compare the two routes.
"""
from __future__ import annotations

import itertools
from collections import deque
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from mesplan.assets import Fleet
from mesplan.grid import Network
from mesplan.scenarios import ScenarioSet, derated_limit
from mesplan.solver import SolverConfig, solve_mip
from mesplan.solver.cones import CutPool

Position = Optional[int]
Route = Tuple[Position, ...]


def tree_hops(network: Network, b1: int, b2: int) -> int:
    """Edge count between two buses, BFS over the undirected line graph."""
    if b1 == b2:
        return 0
    adj: Dict[int, List[int]] = {b.id: [] for b in network.buses}
    for ln in network.lines:
        adj[ln.from_bus].append(ln.to_bus)
        adj[ln.to_bus].append(ln.from_bus)
    seen = {b1: 0}
    queue = deque([b1])
    while queue:
        cur = queue.popleft()
        for nxt in adj[cur]:
            if nxt not in seen:
                seen[nxt] = seen[cur] + 1
                if nxt == b2:
                    return seen[nxt]
                queue.append(nxt)
    raise KeyError(f"bus {b2} not reachable from {b1}")


def travel_periods(network: Network, fleet: Fleet, b1: int, b2: int) -> int:
    """Relocation dead time between two buses, from the fleet's rule."""
    if b1 == b2:
        return 0
    model = fleet.transit
    if model.rule == "matrix":
        return int(model.hours[frozenset((b1, b2))])
    return int(min(abs(b1 - b2), tree_hops(network, b1, b2)))


def hostable_buses(network: Network, fleet: Fleet) -> List[int]:
    return [b.id for b in network.buses if fleet.hosting_limit(b.id) >= 1]


def route_is_legal(network: Network, fleet: Fleet, route: Sequence[Position],
                   stationary: bool) -> bool:
    """Mirror of the placement logic, re-derived rather than reused.

    A unit that is at b1 in period t and somewhere else (or nowhere) in
    t+1 has left b1; it cannot surface at any other bus b2 until the
    travel time between b1 and b2 has fully elapsed.
    """
    T = len(route)
    if stationary:
        return all(p == route[0] for p in route)
    for t in range(T - 1):
        b1 = route[t]
        if b1 is None or route[t + 1] == b1:
            continue
        for tau in range(1, T - t):
            b2 = route[t + tau]
            if b2 is None or b2 == b1:
                continue
            if tau <= travel_periods(network, fleet, b1, b2):
                return False
    return True


def legal_routes(network: Network, fleet: Fleet, horizon: int, *,
                 stationary: bool, start: object = "any") -> List[Route]:
    """All position sequences a single unit may take, brute force."""
    options: List[Position] = [None] + hostable_buses(network, fleet)
    if stationary:
        raw: Iterable[Route] = (tuple([c] * horizon) for c in options)
    else:
        raw = itertools.product(options, repeat=horizon)
    out = []
    for route in raw:
        if start != "any" and route[0] != start:
            continue
        if route_is_legal(network, fleet, route, stationary):
            out.append(tuple(route))
    return out


def placement_patterns(network: Network, fleet: Fleet,
                       scenario_set: ScenarioSet, horizon: int,
                       placement_mode: str = "mobile"):
    """Every joint (install, per-scenario route) pattern for one unit.

    Routes are tied across scenarios in the first period; normal-
    operations scenarios (and every scenario in stationary mode) may
    not move at all.  Yields (x_value, {scenario_id: route}) pairs.
    """
    if len(fleet.units) != 1:
        raise ValueError("pattern enumeration is written for one unit")
    scens = list(scenario_set)
    idle = {s.id: tuple([None] * horizon) for s in scens}
    yield 0, idle
    if placement_mode == "none":
        yield 1, idle
        return
    per_start: Dict[Position, List[Dict[int, Route]]] = {}
    for start in [None] + hostable_buses(network, fleet):
        choices = []
        for s in scens:
            stationary = s.is_normal or placement_mode == "stationary"
            choices.append(legal_routes(network, fleet, horizon,
                                        stationary=stationary, start=start))
        combos = []
        for picked in itertools.product(*choices):
            combos.append({s.id: r for s, r in zip(scens, picked)})
        per_start[start] = combos
    for start, combos in per_start.items():
        for routes in combos:
            yield 1, routes


def pattern_bounds(model, x_value: int, routes: Dict[int, Route]):
    """Bound vectors that pin every binary to one placement pattern."""
    meta = model.meta
    lb = model.lb.copy()
    ub = model.ub.copy()
    for c in meta.x_cols:
        lb[c] = ub[c] = float(x_value)
    for si, sid in enumerate(meta.scenario_ids):
        route = routes[sid]
        for ti in range(meta.horizon):
            for bi, b in enumerate(meta.bus_ids):
                c = meta.u_cols[0, bi, ti, si]
                if c < 0:
                    continue
                want = 1.0 if route[ti] == b else 0.0
                if want > ub[c] + 1e-12 or want < lb[c] - 1e-12:
                    return None
                lb[c] = ub[c] = want
    return lb, ub


def enumerate_minimum(model, patterns, config: Optional[SolverConfig] = None):
    """Best objective over explicitly enumerated placement patterns.

    Each pattern leaves only the continuous dispatch free, so a single
    root relaxation (plus cone tightening) decides it.  Returns the
    best objective, the winning pattern, and how many patterns were
    actually solved.
    """
    cfg = config or SolverConfig()
    pool = CutPool(model.n_cols)
    best = np.inf
    best_pattern = None
    solved = 0
    for x_value, routes in patterns:
        fixed = pattern_bounds(model, x_value, routes)
        if fixed is None:
            continue
        rep = solve_mip(model.with_bounds(*fixed), cfg, cut_pool=pool)
        if rep.status == "infeasible":
            continue
        solved += 1
        if rep.objective < best - 1e-12:
            best = rep.objective
            best_pattern = (x_value, routes)
    return best, best_pattern, solved


def conic_dispatch(network: Network, fleet: Fleet, scenario_set: ScenarioSet,
                   gamma: float, horizon: int, x_value: int,
                   routes: Dict[int, Route]) -> float:
    """Interior-point dispatch cost for a fixed placement pattern.

    Builds the power-flow relaxation directly in cvxpy with true
    second-order cone constraints (no cutting planes), so it shares no
    code with the package's model builder or solver.
    """
    import cvxpy as cp

    base = network.base_mva
    T = horizon
    weights = {s.id: s.probability for s in scenario_set}
    unit = fleet.units[0]
    capital = unit.capital_cost() * x_value
    terms = [gamma * capital]
    constraints = []

    for scen in scenario_set:
        w = weights[scen.id]
        route = routes[scen.id]
        v = {}
        flows = {}
        for bus in network.buses:
            v[bus.id] = cp.Variable(T)
            constraints += [v[bus.id] >= bus.v_min, v[bus.id] <= bus.v_max]
        for ln in network.lines:
            fp, fq, a = cp.Variable(T), cp.Variable(T), cp.Variable(T)
            flows[ln.id] = (fp, fq, a)
            hyp = float(np.hypot(ln.resistance, ln.reactance))
            for ti in range(T):
                cap = derated_limit(scen, ln, ti + 1) / base
                constraints += [fp[ti] >= -cap, fp[ti] <= cap,
                                fq[ti] >= -cap, fq[ti] <= cap,
                                a[ti] >= 0.0, a[ti] <= 2.0 * cap / hyp]
                child = v[ln.to_bus][ti]
                parent = v[ln.from_bus][ti]
                constraints.append(
                    child - 2 * ln.resistance * fp[ti]
                    - 2 * ln.reactance * fq[ti]
                    + (ln.resistance ** 2 + ln.reactance ** 2) * a[ti]
                    - parent == 0)
                if cap > 0.0:
                    constraints.append(
                        cp.SOC(cap, cp.hstack([fp[ti], fq[ti]])))
                    constraints.append(cp.SOC(cap, cp.hstack(
                        [fp[ti] - ln.resistance * a[ti],
                         fq[ti] - ln.reactance * a[ti]])))
                    constraints.append(cp.SOC(
                        a[ti] + child,
                        cp.hstack([2 * fp[ti], 2 * fq[ti], a[ti] - child])))

        present = np.zeros((len(network.buses), T))
        for ti in range(T):
            if route[ti] is not None:
                bi = [b.id for b in network.buses].index(route[ti])
                present[bi, ti] = 1.0 * x_value
        pch = cp.Variable((len(network.buses), T), nonneg=True)
        pdis = cp.Variable((len(network.buses), T), nonneg=True)
        qch = cp.Variable((len(network.buses), T))
        qdis = cp.Variable((len(network.buses), T))
        e = cp.Variable(T)
        kq = unit.power_factor_param
        ch_coef = unit.eta_ch * base
        dis_coef = base / unit.eta_dis
        constraints += [
            cp.multiply(ch_coef, pch) <= unit.power_rating * present,
            cp.multiply(dis_coef, pdis) <= unit.power_rating * present,
            qch <= kq * pch, qch >= -kq * pch,
            qdis <= kq * pdis, qdis >= -kq * pdis,
            e >= 0.0, e <= unit.energy_rating,
        ]
        net_charge = ch_coef * cp.sum(pch, axis=0) \
            - dis_coef * cp.sum(pdis, axis=0)
        constraints.append(e[0] == unit.initial_soc + net_charge[0])
        if T > 1:
            constraints.append(e[1:] == e[:-1] + net_charge[1:])

        deg_rate = abs(unit.degradation_slope / 100.0) \
            * unit.price_power * 1000.0 * base
        terms.append(w * deg_rate * cp.sum(pch + pdis))

        for bi, bus in enumerate(network.buses):
            gen = network.gen_by_bus.get(bus.id)
            dp = scen.demand_p(network, bus.id)[:T] / base
            dq = scen.demand_q(network, bus.id)[:T] / base
            pg = qg = None
            if gen is not None:
                pg = cp.Variable(T)
                qg = cp.Variable(T)
                constraints += [pg >= gen.p_min / base, pg <= gen.p_max / base,
                                qg >= gen.q_min / base, qg <= gen.q_max / base]
                terms.append(w * gen.marginal_cost * base * cp.sum(pg))
            pls = qls = None
            if bus.id != 0 and (dp.any() or dq.any()):
                pls = cp.Variable(T, nonneg=True)
                qls = cp.Variable(T)
                constraints += [pls <= dp,
                                qls >= np.minimum(0.0, dq),
                                qls <= np.maximum(0.0, dq)]
                terms.append(w * bus.voll * base * cp.sum(pls))
            children = network.children[bus.id]
            for comp, imp, shunt, dem, g_v, ls_v, dis_v, ch_v in (
                    ("p", "resistance",
                     bus.shunt_conductance, dp, pg, pls, pdis, pch),
                    ("q", "reactance",
                     -bus.shunt_susceptance, dq, qg, qls, qdis, qch)):
                for ti in range(T):
                    expr = 0
                    if bus.id != 0:
                        expr = expr + flows[bus.id][0 if comp == "p" else 1][ti]
                    for cl in children:
                        ln = network.line_by_id[cl]
                        f_child = flows[cl][0 if comp == "p" else 1][ti]
                        expr = expr - f_child + getattr(ln, imp) * flows[cl][2][ti]
                    if g_v is not None:
                        expr = expr - g_v[ti]
                    if ls_v is not None:
                        expr = expr - ls_v[ti]
                    if shunt != 0.0:
                        expr = expr + shunt * v[bus.id][ti]
                    expr = expr - dis_v[bi, ti] + ch_v[bi, ti]
                    constraints.append(expr == -dem[ti])

    problem = cp.Problem(cp.Minimize(cp.sum(terms)), constraints)
    problem.solve(solver=cp.CLARABEL)
    if problem.status not in ("optimal", "optimal_inaccurate"):
        raise RuntimeError(f"conic dispatch ended with {problem.status}")
    return float(problem.value)
