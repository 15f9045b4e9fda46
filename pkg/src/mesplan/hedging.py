"""Progressive-hedging decomposition over the scenario subproblems.

The coupled plan variables (install decisions plus first-period placements)
are driven to consensus across scenarios with linearized proximal penalties;
everything else stays scenario-local.  A converged (or iteration-capped)
consensus is rounded to a concrete plan and each scenario is re-solved once
with the plan frozen, which is what the reported objective is computed from.
"""

from __future__ import annotations

import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .grid import Network
from .assets import Fleet
from .scenarios import ScenarioSet
from .formulation import (MipModel, PhPenalty, apply_ph_penalty,
                          build_extensive_form, build_scenario_model,
                          evaluate_solution, SolutionAudit)
from .solver.bnb import SolveReport, SolverConfig, solve_mip
from .solver.cones import CutPool

DEFAULT_GAMMA = 1.0 / 3650.0     # daily share of a ten-year installed cost

RHO_POLICIES = ("fixed", "cost-proportional")

_CONSERVATION_TOL = 1e-9


class PhScenarioInfeasible(RuntimeError):
    """A scenario subproblem has no feasible dispatch."""

    def __init__(self, scenario_id: int, stage: str):
        self.scenario_id = scenario_id
        self.stage = stage
        super().__init__(
            f"scenario {scenario_id} infeasible during {stage}")


@dataclass
class PhConfig:
    """Knobs for the hedging loop itself (subproblem knobs live in solver)."""

    rho: float = 1.0                      # penalty weight for the fixed policy
    rho_policy: str = "fixed"             # fixed | cost-proportional
    eps: float = 1e-4                     # consensus threshold on g
    max_iterations: int = 200
    install_threshold: float = 0.5        # round install on summed consensus
    workers: Optional[int] = None         # None -> $PLANNER_THREADS or 4
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.rho < 0:
            raise ValueError(f"rho must be nonnegative, got {self.rho}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.rho_policy not in RHO_POLICIES:
            raise ValueError(f"unknown rho policy {self.rho_policy!r}")
        if not 0 < self.install_threshold <= 1:
            raise ValueError("install_threshold must lie in (0, 1]")

    def resolved_workers(self, n_scenarios: int) -> int:
        w = self.workers
        if w is None:
            w = int(os.environ.get("PLANNER_THREADS", "4"))
        return max(1, min(w, n_scenarios))


@dataclass
class PhIterate:
    """One row of the hedging trace."""

    iteration: int
    g: float                       # probability-weighted consensus mismatch
    objective: float               # unpenalized cost of the current iterates
    conservation: float            # max |sum_s w_s m_s| over hedged columns


@dataclass
class PhState:
    """Mutable loop state; kept on the report for inspection."""

    iteration: int
    multipliers: dict[int, np.ndarray]     # sid -> m over hedged columns
    consensus: np.ndarray                  # weighted mean of hedged columns
    g_history: list[float]
    incumbents: dict[int, np.ndarray]      # sid -> full solution vector

    def check(self):
        if self.consensus.size:
            lo, hi = self.consensus.min(), self.consensus.max()
            if lo < -1e-9 or hi > 1 + 1e-9:
                raise AssertionError(
                    f"consensus left [0,1]: min={lo:.3e} max={hi:.3e}")
        if any(g < 0 for g in self.g_history):
            raise AssertionError("negative consensus mismatch recorded")


@dataclass
class PhReport:
    status: str                            # converged | heuristic
    objective: float
    install: dict[int, bool]               # unit id -> build it?
    home_bus: dict[int, Optional[int]]     # unit id -> first-period bus
    iterations: int                        # penalized solve rounds performed
    g_final: float
    trace: list[PhIterate]
    scenario_reports: dict[int, SolveReport]
    scenario_objectives: dict[int, float]
    scenario_audits: dict[int, SolutionAudit]
    scenario_ids: list[int]
    weights: dict[int, float]
    wall_time: float
    models: dict[int, MipModel] = field(repr=False, default_factory=dict)
    state: Optional[PhState] = field(repr=False, default=None)


def rho_policy(model: MipModel, policy: str, value: float = 1.0) -> np.ndarray:
    """Penalty weight for each hedged column of ``model``.

    ``fixed`` uses ``value`` everywhere; ``cost-proportional`` charges each
    column the amortized installed cost of the unit it belongs to, which puts
    the penalty on the same scale as the install term it competes with.
    """
    if policy not in RHO_POLICIES:
        raise ValueError(f"unknown rho policy {policy!r}")
    meta = model.meta
    if meta is None:
        raise ValueError("model carries no metadata")
    hedged = meta.hedged_columns()
    if policy == "fixed":
        if value == 0.0:
            warnings.warn("rho of zero disables the proximal term; "
                          "hedging will not move toward consensus",
                          stacklevel=2)
        return np.full(hedged.size, float(value))
    K = len(meta.unit_ids)
    B = len(meta.bus_ids)
    rho = np.empty(hedged.size)
    # layout matches hedged_columns(): installs first, then first-period
    # placements flattened unit-major
    for j in range(hedged.size):
        ki = j if j < K else (j - K) // B
        rho[j] = meta.gamma * _unit_capital(model, ki)
    return rho


def _unit_capital(model: MipModel, ki: int) -> float:
    # investment columns carry gamma * capital as their objective coefficient
    return float(model.cost_coef[model.meta.x_cols[ki]]) / model.meta.gamma


def _hedged_index(model: MipModel) -> np.ndarray:
    cols = model.meta.hedged_columns()
    if cols.size != len(model.meta.unit_ids) * (1 + len(model.meta.bus_ids)):
        raise AssertionError("hedged column layout is ragged across buses")
    return cols


def _solve_subproblem(model: MipModel, cfg: SolverConfig, pool: CutPool,
                      warm: Optional[np.ndarray]):
    report = solve_mip(model, cfg, cut_pool=pool, warm_start=warm)
    return report, pool


def _run_round(executor, jobs):
    """jobs: list of (model, cfg, pool, warm) in scenario order."""
    if executor is None:
        return [_solve_subproblem(*j) for j in jobs]
    futures = [executor.submit(_solve_subproblem, *j) for j in jobs]
    return [f.result() for f in futures]


def ph_solve(network: Network, fleet: Fleet, scenario_set: ScenarioSet,
             horizon: Optional[int] = None, config: Optional[PhConfig] = None,
             gamma: float = DEFAULT_GAMMA,
             placement_mode: str = "mobile") -> PhReport:
    """Plan by scenario decomposition with proximal consensus penalties.

    Subproblems are independent (no cross-scenario rows); agreement on the
    install and first-period placement columns is achieved by the multiplier
    updates.  After the mismatch ``g`` drops below ``config.eps`` the
    consensus is rounded — a unit is built when its summed placement weight
    reaches the install threshold and parked at its heaviest bus (lowest id
    on ties) — and every scenario is re-solved once without penalties under
    the frozen plan.  Hitting the iteration cap instead returns the same
    rounded construction flagged ``heuristic``.
    """
    cfg = config or PhConfig()
    t0 = time.perf_counter()
    scenarios = list(scenario_set)
    sids = [s.id for s in scenarios]
    weights = {s.id: s.probability for s in scenarios}
    _check_probabilities(weights)

    models: dict[int, MipModel] = {}
    pools: dict[int, CutPool] = {}
    for scen in scenarios:
        m = build_scenario_model(network, fleet, scen, gamma, horizon,
                                 placement_mode)
        models[scen.id] = m
        pools[scen.id] = CutPool(m.n_cols)

    first = models[sids[0]]
    h_cols = _hedged_index(first)
    for sid in sids[1:]:
        other = _hedged_index(models[sid])
        if other.shape != h_cols.shape:
            raise AssertionError("scenario models disagree on hedged columns")
    rho = rho_policy(first, cfg.rho_policy, cfg.rho)

    w_vec = np.array([weights[sid] for sid in sids])
    state = PhState(iteration=0,
                    multipliers={sid: np.zeros(h_cols.size) for sid in sids},
                    consensus=np.zeros(h_cols.size),
                    g_history=[], incumbents={})
    trace: list[PhIterate] = []

    n_workers = cfg.resolved_workers(len(sids))
    executor = (ProcessPoolExecutor(max_workers=n_workers)
                if n_workers > 1 else None)
    status = "heuristic"
    iterations = 0
    try:
        for it in range(cfg.max_iterations + 1):
            jobs = []
            for sid in sids:
                base = models[sid]
                if it == 0:
                    job_model = base
                else:
                    m_s = state.multipliers[sid]
                    pens = [PhPenalty(int(h_cols[j]), float(m_s[j]),
                                      float(state.consensus[j]), float(rho[j]))
                            for j in range(h_cols.size)]
                    job_model = apply_ph_penalty(base, pens)
                jobs.append((job_model, cfg.solver, pools[sid],
                             state.incumbents.get(sid)))

            for sid, (rep, pool) in zip(sids, _run_round(executor, jobs)):
                if rep.status == "infeasible":
                    raise PhScenarioInfeasible(sid, f"iteration {it}")
                pools[sid] = pool
                state.incumbents[sid] = rep.x

            u_mat = np.stack([state.incumbents[sid][h_cols] for sid in sids])
            state.consensus = np.clip(w_vec @ u_mat, 0.0, 1.0)
            g = float(sum(w_vec[i] * np.linalg.norm(u_mat[i] - state.consensus)
                          for i in range(len(sids))))
            state.g_history.append(g)
            state.iteration = it
            iterations = it

            # multipliers follow the new iterates; the weighted sum stays at
            # zero because rho is identical across scenarios column by column
            for i, sid in enumerate(sids):
                state.multipliers[sid] = state.multipliers[sid] + \
                    rho * (u_mat[i] - state.consensus)
            drift = np.abs(sum(w_vec[i] * state.multipliers[sid]
                               for i, sid in enumerate(sids))).max() \
                if sids else 0.0
            if drift > _CONSERVATION_TOL:
                raise AssertionError(
                    f"multiplier conservation violated: {drift:.3e}")

            est = sum(weights[sid] *
                      models[sid].objective_value(state.incumbents[sid])
                      for sid in sids)
            trace.append(PhIterate(it, g, float(est), float(drift)))
            state.check()

            if g < cfg.eps:
                status = "converged"
                break

        install, home = _round_consensus(first, state.consensus,
                                         cfg.install_threshold)
        final_jobs = []
        for sid in sids:
            base = models[sid]
            lb, ub = _fixed_bounds(base, install, home)
            final_jobs.append((base.with_bounds(lb, ub), cfg.solver,
                               pools[sid], state.incumbents.get(sid)))
        reports: dict[int, SolveReport] = {}
        for sid, (rep, pool) in zip(sids, _run_round(executor, final_jobs)):
            if rep.status == "infeasible" or rep.x is None:
                raise PhScenarioInfeasible(sid, "final re-solve")
            pools[sid] = pool
            reports[sid] = rep
    finally:
        if executor is not None:
            executor.shutdown()

    audits = {sid: evaluate_solution(models[sid], reports[sid].x)
              for sid in sids}
    objective = float(sum(weights[sid] * reports[sid].objective
                          for sid in sids))
    return PhReport(
        status=status, objective=objective, install=install, home_bus=home,
        iterations=iterations, g_final=state.g_history[-1], trace=trace,
        scenario_reports=reports,
        scenario_objectives={sid: reports[sid].objective for sid in sids},
        scenario_audits=audits, scenario_ids=sids, weights=weights,
        wall_time=time.perf_counter() - t0, models=models, state=state)


def _round_consensus(model: MipModel, consensus: np.ndarray,
                     threshold: float):
    """Consensus vector -> concrete install set and first-period homes."""
    meta = model.meta
    K, B = len(meta.unit_ids), len(meta.bus_ids)
    install: dict[int, bool] = {}
    home: dict[int, Optional[int]] = {}
    placement = consensus[K:].reshape(K, B)
    for ki, k in enumerate(meta.unit_ids):
        mass = float(placement[ki].sum())
        build = mass >= threshold
        install[k] = build
        if not build:
            home[k] = None
            continue
        best = placement[ki].max()
        candidates = [meta.bus_ids[bi] for bi in range(B)
                      if placement[ki, bi] >= best - 1e-12]
        home[k] = min(candidates)
    return install, home


def _fixed_bounds(model: MipModel, install: dict[int, bool],
                  home: dict[int, Optional[int]]):
    """Bounds that freeze the install set and first-period placements."""
    meta = model.meta
    lb = model.lb.copy()
    ub = model.ub.copy()
    for ki, k in enumerate(meta.unit_ids):
        xc = int(meta.x_cols[ki])
        val = 1.0 if install[k] else 0.0
        if val > model.ub[xc] or val < model.lb[xc]:
            raise PhScenarioInfeasible(
                meta.scenario_ids[0],
                f"rounded install for unit {k} conflicts with bounds")
        lb[xc] = ub[xc] = val
        for bi, b in enumerate(meta.bus_ids):
            uc = int(meta.u_cols[ki, bi, 0, 0])
            want = 1.0 if (install[k] and home[k] == b) else 0.0
            if want > model.ub[uc]:
                raise PhScenarioInfeasible(
                    meta.scenario_ids[0],
                    f"unit {k} cannot start at bus {b} (hosting bound)")
            lb[uc] = ub[uc] = want
    return lb, ub


def _check_probabilities(weights: dict[int, float]):
    total = sum(weights.values())
    if abs(total - 1.0) > 1e-9:
        raise ValueError(
            f"scenario probabilities sum to {total:.12g}, expected 1; "
            "renormalize the set before planning on it")


def bf_solve(network: Network, fleet: Fleet, scenario_set: ScenarioSet,
             horizon: Optional[int] = None,
             config: Optional[SolverConfig] = None,
             gamma: float = DEFAULT_GAMMA,
             placement_mode: str = "mobile") -> SolveReport:
    """Brute force: one extensive-form model through the exact solver."""
    _check_probabilities({s.id: s.probability for s in scenario_set})
    model = build_extensive_form(network, fleet, scenario_set, gamma,
                                 horizon, placement_mode)
    return solve_mip(model, config or SolverConfig())


@dataclass
class Comparison:
    """PH-versus-brute-force summary, renderable as CSV or aligned text."""

    rows: list[dict[str, str]]

    HEADER = ("method", "objective", "relative_gap", "wall_time_s",
              "iterations", "status")

    def _columns(self, walls: bool) -> tuple[str, ...]:
        if walls:
            return self.HEADER
        return tuple(h for h in self.HEADER if h != "wall_time_s")

    def to_csv(self, walls: bool = True) -> str:
        cols = self._columns(walls)
        lines = [",".join(cols)]
        for row in self.rows:
            lines.append(",".join(row[h] for h in cols))
        return "\n".join(lines) + "\n"

    def to_text(self, walls: bool = True) -> str:
        cols = self._columns(walls)
        widths = [max(len(h), *(len(r[h]) for r in self.rows)) for h in cols]
        def fmt(vals):
            return "  ".join(v.ljust(w) for v, w in zip(vals, widths)).rstrip()
        out = [fmt(cols), fmt(["-" * w for w in widths])]
        out.extend(fmt([r[h] for h in cols]) for r in self.rows)
        return "\n".join(out) + "\n"


def compare_runs(ph: PhReport, bf: SolveReport,
                 bf_scenario_ids: Optional[Sequence[int]] = None) -> Comparison:
    """Tabulate the two routes against each other.

    ``bf_scenario_ids`` (when the caller knows them) must match the hedged
    run's scenario set; a mismatch is an error, not a row.
    """
    if bf_scenario_ids is not None and list(bf_scenario_ids) != ph.scenario_ids:
        raise ValueError(
            f"mismatched fixtures: hedged run saw scenarios {ph.scenario_ids},"
            f" brute force saw {list(bf_scenario_ids)}")
    denom = max(abs(bf.objective), 1e-12)
    gap = abs(ph.objective - bf.objective) / denom
    rows = [
        {"method": "ph", "objective": f"{ph.objective:.6f}",
         "relative_gap": f"{gap:.3e}", "wall_time_s": f"{ph.wall_time:.2f}",
         "iterations": str(ph.iterations), "status": ph.status},
        {"method": "bf", "objective": f"{bf.objective:.6f}",
         "relative_gap": "0", "wall_time_s": f"{bf.wall_time:.2f}",
         "iterations": str(bf.nodes), "status": bf.status},
    ]
    return Comparison(rows)
