"""Command-line driver: load a feeder and scenario set, plan, emit reports.

Everything the solver produces funnels into one in-memory description of the
plan (``PlanSolution``); the text and CSV renderings are both generated from
it so the two can never drift apart.  All CSV output is UTF-8 with ``.``
decimals, and repeated runs with the same configuration are byte-identical —
wall-clock information lives only in ``metadata.json``.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .ingest import SchemaError, load_network, load_scenarios
from .formulation import (MipModel, build_extensive_form, evaluate_solution)
from .hedging import (DEFAULT_GAMMA, PhConfig, PhReport, PhScenarioInfeasible,
                      bf_solve, compare_runs, ph_solve)
from .solver.bnb import SolveReport, SolverConfig, solve_mip
from .solver.export import export_model

MODES = ("ph", "bf", "both", "opf-only")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INFEASIBLE = 2
EXIT_HEURISTIC = 3


@dataclass
class RunConfig:
    network: Path
    scenarios: Path
    mode: str
    out: Path
    gamma: float = DEFAULT_GAMMA
    rho: str = "cost"              # float literal or "cost"
    eps: float = 1e-4
    max_iterations: int = 200
    horizon: Optional[int] = None
    gap: float = 1e-4
    time_limit: Optional[float] = None
    export_lp: bool = False
    seed: int = 0                  # reserved; the pipeline is deterministic

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        for p in (self.network, self.scenarios):
            if not Path(p).exists():
                raise FileNotFoundError(f"input not found: {p}")

    def solver_config(self) -> SolverConfig:
        return SolverConfig(gap_tol=self.gap, time_limit=self.time_limit)

    def ph_config(self) -> PhConfig:
        if self.rho == "cost":
            policy, value = "cost-proportional", 1.0
        else:
            policy, value = "fixed", float(self.rho)
        return PhConfig(rho=value, rho_policy=policy, eps=self.eps,
                        max_iterations=self.max_iterations,
                        solver=self.solver_config())

    def run_id(self) -> str:
        """Deterministic tag for exported files (no timestamps)."""
        blob = "|".join([Path(self.network).name, Path(self.scenarios).name,
                         self.mode, repr(self.gamma), str(self.rho),
                         repr(self.eps), str(self.horizon)])
        return hashlib.sha256(blob.encode()).hexdigest()[:10]


# --------------------------------------------------------------------------
# decoded plan
# --------------------------------------------------------------------------


@dataclass
class UnitTrack:
    """One unit's trajectory in one scenario: position labels plus SoC."""

    unit_id: int
    labels: list[str]              # bus id as text, "T" in transit, "-" absent
    soc_mwh: list[float]
    charge_mw: list[float]         # grid-side draw, summed over buses
    discharge_mw: list[float]


@dataclass
class ScenarioPlan:
    scenario_id: int
    weight: float
    tracks: list[UnitTrack]
    lost_load_mwh: float
    shed_by_bus: dict[int, float]
    operating_cost: float
    generation_cost: float
    shed_cost: float
    degradation_cost: float


@dataclass
class PlanSolution:
    """One configuration's plan, decoded from the model and solution vector."""

    label: str                     # mobile | stationary | no-es | opf
    objective: float
    amortized_investment: float
    install: dict[int, bool]
    home_bus: dict[int, Optional[int]]
    scenarios: dict[int, ScenarioPlan] = field(default_factory=dict)
    status: str = "optimal"


def _track_labels(placed: list[Optional[int]]) -> list[str]:
    """Bus ids; 'T' only while travelling between two distinct stops."""
    out = []
    for ti, at in enumerate(placed):
        if at is not None:
            out.append(str(at))
            continue
        prev = next((p for p in reversed(placed[:ti]) if p is not None), None)
        nxt = next((p for p in placed[ti + 1:] if p is not None), None)
        moving = prev is not None and nxt is not None and prev != nxt
        out.append("T" if moving else "-")
    return out


def decode_plan(model: MipModel, x: np.ndarray, label: str,
                status: str = "optimal") -> PlanSolution:
    """Turn a solution vector into trajectories, SoC and cost tables."""
    meta = model.meta
    audit = evaluate_solution(model, x)
    base = meta.base_mva
    K, B, T = len(meta.unit_ids), len(meta.bus_ids), meta.horizon

    install = {}
    home: dict[int, Optional[int]] = {}
    for ki, k in enumerate(meta.unit_ids):
        built = x[meta.x_cols[ki]] > 0.5
        install[k] = bool(built)
        home[k] = None
        if built:
            first = x[meta.u_cols[ki, :, 0, 0]]
            if first.max() > 0.5:
                home[k] = meta.bus_ids[int(np.argmax(first))]

    plan = PlanSolution(label=label, objective=audit.objective,
                        amortized_investment=audit.amortized_investment,
                        install=install, home_bus=home, status=status)
    for si, sid in enumerate(meta.scenario_ids):
        tracks = []
        for ki, k in enumerate(meta.unit_ids):
            placed: list[Optional[int]] = []
            for ti in range(T):
                uu = x[meta.u_cols[ki, :, ti, si]]
                bi = int(np.argmax(uu))
                placed.append(meta.bus_ids[bi] if uu[bi] > 0.5 else None)
            soc = [float(x[meta.e_cols[ki, ti, si]]) for ti in range(T)]
            ch = (x[meta.pch_cols[ki, :, :, si]].sum(axis=0) * base)
            dis = (x[meta.pdis_cols[ki, :, :, si]].sum(axis=0) * base)
            tracks.append(UnitTrack(
                unit_id=k, labels=_track_labels(placed),
                soc_mwh=[round(v, 6) for v in soc],
                charge_mw=[round(float(v), 6) for v in ch],
                discharge_mw=[round(float(v), 6) for v in dis]))
        plan.scenarios[sid] = ScenarioPlan(
            scenario_id=sid, weight=meta.weights.get(sid, 1.0), tracks=tracks,
            lost_load_mwh=round(audit.shed_mwh.get(sid, 0.0), 6),
            shed_by_bus={b: round(v, 6) for b, v in
                         sorted(audit.shed_mwh_by_bus.get(sid, {}).items())},
            operating_cost=round(audit.operating_cost.get(sid, 0.0), 6),
            generation_cost=round(audit.generation_cost.get(sid, 0.0), 6),
            shed_cost=round(audit.shed_cost.get(sid, 0.0), 6),
            degradation_cost=round(audit.degradation_cost.get(sid, 0.0), 6))
    return plan


def decode_ph_plan(report: PhReport) -> PlanSolution:
    """Merge per-scenario hedging solutions into one plan description."""
    plans = []
    for sid in report.scenario_ids:
        model = report.models[sid]
        x = report.scenario_reports[sid].x
        plans.append(decode_plan(model, x, "mobile"))
    merged = PlanSolution(
        label="mobile", objective=report.objective,
        amortized_investment=plans[0].amortized_investment,
        install=dict(report.install), home_bus=dict(report.home_bus),
        status=report.status)
    for sid, plan in zip(report.scenario_ids, plans):
        sp = plan.scenarios[sid]
        sp.weight = report.weights[sid]
        merged.scenarios[sid] = sp
    return merged


# --------------------------------------------------------------------------
# report rendering
# --------------------------------------------------------------------------


def emit_routing_table(solution: PlanSolution) -> tuple[str, str]:
    """Per scenario and unit: position row and SoC row; CSV twin.

    Returns ``(text, csv)`` rendered from the same rows.
    """
    csv_lines = ["scenario,unit,period,bus,in_transit,soc_mwh"]
    text_lines = []
    for sid in sorted(solution.scenarios):
        sp = solution.scenarios[sid]
        for tr in sp.tracks:
            for ti, lab in enumerate(tr.labels):
                bus = "" if lab in ("T", "-") else lab
                flag = "1" if lab == "T" else "0"
                csv_lines.append(
                    f"{sid},{tr.unit_id},{ti + 1},{bus},{flag},"
                    f"{tr.soc_mwh[ti]:.6f}")
            pos = " ".join(f"{lab:>4}" for lab in tr.labels)
            soc = " ".join(f"{v:4.2f}" for v in tr.soc_mwh)
            text_lines.append(f"s{sid} unit{tr.unit_id} pos: {pos}")
            text_lines.append(f"s{sid} unit{tr.unit_id} soc: {soc}")
    return "\n".join(text_lines) + "\n", "\n".join(csv_lines) + "\n"


def emit_lostload_table(solutions: Sequence[PlanSolution]) -> tuple[str, str]:
    """Lost load per scenario and objective for each configuration."""
    labels = [s.label for s in solutions]
    sids = sorted({sid for s in solutions for sid in s.scenarios})
    csv_lines = ["configuration,scenario,lost_load_mwh,objective"]
    for sol in solutions:
        for sid in sids:
            sp = sol.scenarios.get(sid)
            shed = sp.lost_load_mwh if sp else 0.0
            csv_lines.append(
                f"{sol.label},{sid},{shed:.6f},{sol.objective:.6f}")

    width = max(12, *(len(l) for l in labels)) + 2
    head = "scenario".ljust(10) + "".join(l.rjust(width) for l in labels)
    text_lines = [head, "-" * len(head)]
    for sid in sids:
        row = f"s{sid}".ljust(10)
        for sol in solutions:
            sp = sol.scenarios.get(sid)
            row += f"{(sp.lost_load_mwh if sp else 0.0):.4f}".rjust(width)
        text_lines.append(row)
    row = "objective".ljust(10)
    for sol in solutions:
        row += f"{sol.objective:.2f}".rjust(width)
    text_lines.append(row)
    return "\n".join(text_lines) + "\n", "\n".join(csv_lines) + "\n"


def _solution_json(solutions: Sequence[PlanSolution]) -> str:
    doc = {}
    for sol in solutions:
        entry = {
            "objective": round(sol.objective, 6),
            "amortized_investment": round(sol.amortized_investment, 6),
            "status": sol.status,
            "install": {str(k): v for k, v in sorted(sol.install.items())},
            "home_bus": {str(k): v for k, v in sorted(sol.home_bus.items())},
            "scenarios": {},
        }
        for sid in sorted(sol.scenarios):
            sp = sol.scenarios[sid]
            entry["scenarios"][str(sid)] = {
                "weight": sp.weight,
                "lost_load_mwh": sp.lost_load_mwh,
                "shed_by_bus": {str(b): v for b, v in sp.shed_by_bus.items()},
                "operating_cost": sp.operating_cost,
                "generation_cost": sp.generation_cost,
                "shed_cost": sp.shed_cost,
                "degradation_cost": sp.degradation_cost,
                "units": [
                    {"unit": tr.unit_id, "position": tr.labels,
                     "soc_mwh": tr.soc_mwh, "charge_mw": tr.charge_mw,
                     "discharge_mw": tr.discharge_mw}
                    for tr in sp.tracks
                ],
            }
        doc[sol.label] = entry
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _trace_csv(report: PhReport) -> str:
    lines = ["iteration,g,objective_estimate"]
    for row in report.trace:
        lines.append(f"{row.iteration},{row.g:.9e},{row.objective:.6f}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# driver
# --------------------------------------------------------------------------


def _write(path: Path, content: str):
    path.write_text(content, encoding="utf-8")


def _comparator_plans(net, fleet, scens, cfg: RunConfig) -> list[PlanSolution]:
    """Solve the no-storage and stationary references on the same fixture."""
    plans = []
    for mode, label in (("none", "no-es"), ("stationary", "stationary")):
        model = build_extensive_form(net, fleet, scens, cfg.gamma,
                                     cfg.horizon, mode)
        rep = solve_mip(model, cfg.solver_config())
        if rep.status == "infeasible":
            raise PhScenarioInfeasible(-1, f"{label} comparator")
        plans.append(decode_plan(model, rep.x, label, rep.status))
    return plans


def run(config: RunConfig) -> int:
    """Execute one planning run and write its artifacts."""
    t_start = datetime.datetime.now(datetime.timezone.utc)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        net, fleet = load_network(config.network)
        scens = load_scenarios(config.scenarios, net, horizon=config.horizon)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    meta: dict = {
        "version": __version__,
        "started_utc": t_start.isoformat(),
        "mode": config.mode,
        "network": str(config.network),
        "scenarios": str(config.scenarios),
        "gamma": config.gamma,
        "rho": config.rho,
        "eps": config.eps,
        "seed": config.seed,
        "workers": int(os.environ.get("PLANNER_THREADS", "4")),
        "run_id": config.run_id(),
    }
    exit_code = EXIT_OK
    solutions: list[PlanSolution] = []
    ph_report: Optional[PhReport] = None
    bf_report: Optional[SolveReport] = None

    try:
        if config.mode == "opf-only":
            model = build_extensive_form(net, fleet, scens, config.gamma,
                                         config.horizon, "none")
            rep = solve_mip(model, config.solver_config())
            if rep.status == "infeasible":
                print("error: dispatch infeasible", file=sys.stderr)
                return EXIT_INFEASIBLE
            solutions.append(decode_plan(model, rep.x, "opf", rep.status))
            meta["wall_time_s"] = rep.wall_time
            if config.export_lp:
                export_model(model, "lp-file",
                             out / f"{config.run_id()}_opf.lp")
        else:
            if config.mode in ("ph", "both"):
                ph_report = ph_solve(net, fleet, scens, config.horizon,
                                     config.ph_config(), gamma=config.gamma)
                solutions.append(decode_ph_plan(ph_report))
                _write(out / "ph_trace.csv", _trace_csv(ph_report))
                meta["ph"] = {
                    "status": ph_report.status,
                    "iterations": ph_report.iterations,
                    "g_final": ph_report.g_final,
                    "wall_time_s": ph_report.wall_time,
                }
                if ph_report.status != "converged":
                    exit_code = EXIT_HEURISTIC
                if config.export_lp:
                    for sid, m in ph_report.models.items():
                        export_model(m, "lp-file",
                                     out / f"{config.run_id()}_{sid}.lp")
            if config.mode in ("bf", "both"):
                model = build_extensive_form(net, fleet, scens, config.gamma,
                                             config.horizon, "mobile")
                bf_report = solve_mip(model, config.solver_config())
                if bf_report.status == "infeasible":
                    print("error: extensive form infeasible", file=sys.stderr)
                    return EXIT_INFEASIBLE
                meta["bf"] = {
                    "status": bf_report.status,
                    "nodes": bf_report.nodes,
                    "wall_time_s": bf_report.wall_time,
                }
                if config.mode == "bf":
                    solutions.append(
                        decode_plan(model, bf_report.x, "mobile",
                                    bf_report.status))
                if config.export_lp and config.mode == "bf":
                    export_model(model, "lp-file",
                                 out / f"{config.run_id()}_ef.lp")
            if config.mode == "both":
                table = compare_runs(ph_report, bf_report,
                                     bf_scenario_ids=[s.id for s in scens])
                # wall clocks live in metadata.json so reruns stay
                # byte-identical
                _write(out / "comparison.csv", table.to_csv(walls=False))
                _write(out / "comparison.txt", table.to_text(walls=False))

            solutions = _comparator_plans(net, fleet, scens, config) \
                + solutions
            text, csv = emit_routing_table(solutions[-1])
            _write(out / "routing.txt", text)
            _write(out / "routing.csv", csv)
    except PhScenarioInfeasible as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE

    text, csv = emit_lostload_table(solutions)
    _write(out / "lostload.txt", text)
    _write(out / "lostload.csv", csv)
    _write(out / "solution.json", _solution_json(solutions))

    meta["finished_utc"] = datetime.datetime.now(
        datetime.timezone.utc).isoformat()
    _write(out / "metadata.json", json.dumps(meta, indent=2, sort_keys=True)
           + "\n")
    return exit_code


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors, which this tool reserves for
    # infeasibility; remap to the configuration-error code
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="plan", description=__doc__.splitlines()[0])
    p.add_argument("--network", required=True, type=Path,
                   help="feeder description (JSON)")
    p.add_argument("--scenarios", required=True, type=Path,
                   help="scenario set (JSON)")
    p.add_argument("--mode", required=True, choices=MODES)
    p.add_argument("--out", required=True, type=Path,
                   help="directory for run artifacts")
    p.add_argument("--gamma", type=float, default=DEFAULT_GAMMA,
                   help="daily capital recovery factor "
                        "(default 1/3650)")
    p.add_argument("--rho", default="cost",
                   help="hedging penalty weight: a number, or 'cost' for "
                        "amortized-capital scaling (default)")
    p.add_argument("--eps", type=float, default=1e-4,
                   help="hedging consensus threshold")
    p.add_argument("--max-iterations", type=int, default=200)
    p.add_argument("--horizon", type=int, default=None,
                   help="trim the planning horizon to this many periods")
    p.add_argument("--gap", type=float, default=1e-4,
                   help="relative optimality gap per solve")
    p.add_argument("--time-limit", type=float, default=None,
                   help="wall-clock cap per solve (seconds)")
    p.add_argument("--export-lp", action="store_true",
                   help="write each solved model in LP format")
    p.add_argument("--seed", type=int, default=0,
                   help="reserved; the pipeline is deterministic")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.rho != "cost":
        try:
            float(args.rho)
        except ValueError:
            print(f"error: --rho must be a number or 'cost', got "
                  f"{args.rho!r}", file=sys.stderr)
            return EXIT_CONFIG
    try:
        config = RunConfig(
            network=args.network, scenarios=args.scenarios, mode=args.mode,
            out=args.out, gamma=args.gamma, rho=args.rho, eps=args.eps,
            max_iterations=args.max_iterations, horizon=args.horizon,
            gap=args.gap, time_limit=args.time_limit,
            export_lp=args.export_lp, seed=args.seed)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
