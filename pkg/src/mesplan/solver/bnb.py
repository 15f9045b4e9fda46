"""Branch-and-bound over the LP outer approximation of the cone rows.

Search order is best-bound; branching picks the most fractional binary
(closest to one half, lowest column index on ties).  Every LP-feasible node
is separated against the cone rows, and an incumbent is accepted only when it
is integral and cone-clean.  Cuts accumulate in a global pool that remains
valid across nodes and across repeated solves of the same model.

Two primal heuristics run during the search: plain rounding of the node
relaxation, and a trajectory-repair pass that snaps each unit's fractional
placements to a transit-feasible route before re-solving the dispatch LP.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..formulation import MipModel, SENSE_EQ, SENSE_GE, SENSE_LE
from .cones import ConeSystem, CutPool, seed_initial_cuts, separate_cones
from .lp import solve_lp

__all__ = ["SolverConfig", "SolveReport", "solve_mip"]


@dataclass(frozen=True)
class SolverConfig:
    gap_tol: float = 1e-4            # relative incumbent/bound gap
    cone_tol: float = 1e-6           # absolute cone violation accepted
    int_tol: float = 1e-6
    feas_tol: float = 1e-9           # LP primal/dual tolerance
    node_limit: Optional[int] = None
    time_limit: Optional[float] = None
    heuristic_freq: int = 10         # nodes between heuristic passes
    max_cone_rounds: int = 2         # re-solves per fractional node
    propagation_passes: int = 12
    initial_cut_count: int = 8
    lp_method: str = "highs-ds"
    branch_rule: str = "fractional"  # fractional | staged (install, then by period)


@dataclass
class SolveReport:
    status: str                      # optimal | gap-limit | iteration-limit | infeasible
    objective: float
    x: Optional[np.ndarray]
    best_bound: float
    mip_gap: float
    nodes: int
    lp_solves: int
    cuts: int
    max_cone_violation: float
    wall_time: float
    incumbent_source: str = ""


@dataclass
class _Node:
    bound: float
    parent: Optional["_Node"]
    col: int = -1        # branched column (-1 at root)
    val: int = 0
    depth: int = 0


class _Propagator:
    """Activity-based bound tightening restricted to binary columns.

    Continuous columns never change bounds during the search, so their
    contribution to each row's minimum activity is precomputed once.
    """

    def __init__(self, model: MipModel):
        A = model.A.tocsr()
        binary = model.is_binary
        rows_i, cols_j, vals = [], [], []
        cont_min, rhs_list = [], []
        lb, ub = model.lb, model.ub

        def emit(row_idx, sign):
            start, end = A.indptr[row_idx], A.indptr[row_idx + 1]
            cols = A.indices[start:end]
            coef = sign * A.data[start:end]
            mask = binary[cols]
            if not mask.any():
                return
            local = len(rhs_list)
            cont_cols, cont_coef = cols[~mask], coef[~mask]
            cmin = np.where(cont_coef > 0, cont_coef * lb[cont_cols],
                            cont_coef * ub[cont_cols]).sum()
            cont_min.append(cmin)
            rhs_list.append(sign * model.row_rhs[row_idx])
            for c, v in zip(cols[mask], coef[mask]):
                rows_i.append(local)
                cols_j.append(c)
                vals.append(v)

        for i in range(model.n_rows):
            s = model.row_sense[i]
            if s in (SENSE_LE, SENSE_EQ):
                emit(i, 1.0)
            if s in (SENSE_GE, SENSE_EQ):
                emit(i, -1.0)

        self.entry_row = np.asarray(rows_i, dtype=np.int64)
        self.entry_col = np.asarray(cols_j, dtype=np.int64)
        self.entry_val = np.asarray(vals)
        self.cont_min = np.asarray(cont_min)
        self.rhs = np.asarray(rhs_list)
        self.n_rows = len(rhs_list)
        self._pos = self.entry_val > 0

    def run(self, lb: np.ndarray, ub: np.ndarray, passes: int) -> bool:
        """Tighten ``lb``/``ub`` in place; False means proven infeasible."""
        if self.n_rows == 0:
            return True
        tol = 1e-9
        for _ in range(passes):
            contrib = np.where(self._pos, self.entry_val * lb[self.entry_col],
                               self.entry_val * ub[self.entry_col])
            row_min = self.cont_min.copy()
            np.add.at(row_min, self.entry_row, contrib)
            if np.any(row_min > self.rhs + 1e-7):
                return False
            slack = (self.rhs - row_min)[self.entry_row]
            # raising a positive-coefficient binary from its lower bound (or
            # dropping a negative one from its upper bound) consumes slack
            cap = np.where(
                self._pos, lb[self.entry_col] + slack / self.entry_val, 1.0)
            floor = np.where(
                ~self._pos, ub[self.entry_col] + slack / self.entry_val, 0.0)
            new_ub = np.where(cap < 1.0 - tol, 0.0, 1.0)
            new_lb = np.where(floor > tol, 1.0, 0.0)
            before = (lb[self.entry_col].sum(), ub[self.entry_col].sum())
            np.minimum.at(ub, self.entry_col, new_ub)
            np.maximum.at(lb, self.entry_col, new_lb)
            if np.any(lb > ub + tol):
                return False
            after = (lb[self.entry_col].sum(), ub[self.entry_col].sum())
            if before == after:
                break
        return True


class _Search:
    def __init__(self, model: MipModel, config: SolverConfig,
                 pool: Optional[CutPool]):
        model.freeze()
        self.model = model
        self.cfg = config
        self.pool = pool if pool is not None else CutPool(model.n_cols)
        seed_initial_cuts(model, self.pool, config.initial_cut_count)
        self.system = ConeSystem(model)
        self.prop = _Propagator(model)
        self.bin_cols = np.flatnonzero(model.is_binary)
        self.branch_rank = self._staged_ranks()
        self.incumbent: Optional[np.ndarray] = None
        self.incumbent_obj = np.inf
        self.incumbent_source = ""
        self.lp_solves = 0
        self.nodes = 0
        self.t0 = time.perf_counter()
        self._heur_cache: set = set()

    # ---- plumbing -------------------------------------------------------

    def _staged_ranks(self) -> np.ndarray:
        """Branch priority per column: install decisions first, placements
        in period order (scenario-major), everything else last.  Routing
        decisions cascade forward through the transit rows, so fixing the
        earliest unresolved placement prunes the deepest."""
        rank = np.full(self.model.n_cols, np.inf)
        meta = self.model.meta
        if meta is None:
            rank[self.bin_cols] = np.arange(len(self.bin_cols))
            return rank
        nxt = 0
        for c in meta.x_cols:
            rank[c] = nxt
            nxt += 1
        K, B, T, S = meta.u_cols.shape
        for si in range(S):
            for ti in range(T):
                for ki in range(K):
                    for bi in range(B):
                        rank[meta.u_cols[ki, bi, ti, si]] = nxt
                        nxt += 1
        leftovers = self.bin_cols[~np.isfinite(rank[self.bin_cols])]
        rank[leftovers] = nxt + np.arange(len(leftovers))
        return rank

    def _lp(self, lb, ub):
        self.lp_solves += 1
        cut_m, cut_r = self.pool.matrix()
        res = solve_lp(self.model, lb=lb, ub=ub, cut_matrix=cut_m,
                       cut_rhs=cut_r, method=self.cfg.lp_method,
                       feas_tol=self.cfg.feas_tol)
        if res.status == "optimal":
            self.pool.age(res.x)
        return res

    def _node_bounds(self, node: _Node):
        lb, ub = self.model.lb.copy(), self.model.ub.copy()
        walk = node
        while walk is not None and walk.col >= 0:
            if walk.val:
                lb[walk.col] = 1.0
            else:
                ub[walk.col] = 0.0
            walk = walk.parent
        return lb, ub

    def _timed_out(self) -> bool:
        return (self.cfg.time_limit is not None and
                time.perf_counter() - self.t0 > self.cfg.time_limit)

    def _accept(self, x: np.ndarray, obj: float, source: str):
        if obj < self.incumbent_obj - 1e-12:
            self.incumbent = x.copy()
            self.incumbent_obj = obj
            self.incumbent_source = source

    # ---- node processing --------------------------------------------------

    def _solve_with_cones(self, lb, ub, prune_at: float,
                          fractional_cap: Optional[int]):
        """LP + separation loop.  Returns (status, x, obj); status one of
        'infeasible', 'pruned', 'clean', 'fractional'."""
        rounds = 0
        while True:
            res = self._lp(lb, ub)
            if res.status != "optimal":
                return "infeasible", None, np.inf
            if res.objective >= prune_at - 1e-9:
                return "pruned", res.x, res.objective
            frac = self._fractional(res.x)
            cap = fractional_cap if frac.size else 400
            added = separate_cones(self.system, res.x, self.pool,
                                   self.cfg.cone_tol)
            if added and (cap is None or rounds < cap):
                rounds += 1
                if rounds >= 400:
                    raise RuntimeError("cone separation failed to converge")
                continue
            if added:
                return "fractional", res.x, res.objective
            return ("fractional" if frac.size else "clean",
                    res.x, res.objective)

    def _fractional(self, x) -> np.ndarray:
        xb = x[self.bin_cols]
        return self.bin_cols[np.abs(xb - np.round(xb)) > self.cfg.int_tol]

    # ---- heuristics ---------------------------------------------------------

    def _fix_and_polish(self, assign: dict[int, int], source: str) -> None:
        """Fix the given binaries, solve to cone-cleanliness, maybe accept."""
        key = (source, tuple(sorted(assign.items())))
        if key in self._heur_cache:
            return
        self._heur_cache.add(key)
        lb, ub = self.model.lb.copy(), self.model.ub.copy()
        for col, val in assign.items():
            if val:
                lb[col] = 1.0
            else:
                ub[col] = 0.0
        if np.any(lb > ub):
            return
        if not self.prop.run(lb, ub, self.cfg.propagation_passes):
            return
        status, x, obj = self._solve_with_cones(
            lb, ub, self.incumbent_obj, fractional_cap=None)
        if status == "clean":
            self._accept(x, obj, source)

    def _round_heuristic(self, x: np.ndarray):
        assign = {int(c): int(round(x[c])) for c in self.bin_cols}
        self._fix_and_polish(assign, "rounding")

    def _trajectory_heuristic(self, x: np.ndarray):
        meta = self.model.meta
        if meta is None:
            return self._round_heuristic(x)
        assign: dict[int, int] = {}
        K, B, T, S = meta.u_cols.shape
        placed = np.zeros((B, T, S), dtype=np.int64)  # hosting usage
        for ki in range(K):
            xcol = int(meta.x_cols[ki])
            install = x[xcol] >= 0.5 or self.model.lb[xcol] >= 0.5
            assign[xcol] = int(install)
            uk = x[meta.u_cols[ki].reshape(-1)].reshape(B, T, S)
            if not install:
                uk = np.zeros_like(uk)
            # a common first-period home when scenarios are linked
            home = -1
            if install:
                score = uk[:, 0, :] @ np.array(
                    [meta.weights[s] for s in meta.scenario_ids])
                if score.max() > 1e-6:
                    home = int(np.argmax(score))
            for si in range(S):
                route = self._repair_route(uk[:, :, si], home, meta, si)
                for ti in range(T):
                    for bi in range(B):
                        want = 1 if route[ti] == bi else 0
                        if want and placed[bi, ti, si] >= meta.hosting_caps[bi]:
                            want = 0
                        if want:
                            placed[bi, ti, si] += 1
                        assign[int(meta.u_cols[ki, bi, ti, si])] = want
        self._fix_and_polish(assign, "trajectory")

    def _repair_route(self, frac: np.ndarray, home: int, meta, si) -> list[int]:
        """Snap fractional per-period placements to a transit-feasible route.

        ``frac`` is [B, T]; returns one bus position (or -1) per period.
        """
        B, T = frac.shape
        sid = meta.scenario_ids[si]
        stationary = (meta.placement_mode == "stationary" or
                      (meta.kind == "extensive" and sid == meta.normal_sid) or
                      (meta.kind == "scenario" and sid == meta.normal_sid))
        desired = [int(np.argmax(frac[:, ti])) if frac[:, ti].max() > 0.3
                   else -1 for ti in range(T)]
        if home >= 0:
            desired[0] = home
        if stationary:
            return [desired[0]] * T
        route = [-1] * T
        pos = desired[0]
        route[0] = pos
        ti = 1
        while ti < T:
            want = desired[ti]
            if want == pos or want == -1:
                route[ti] = pos  # a -1 wish is cheapest served by parking
                ti += 1
                continue
            if pos == -1:
                pos = want      # free placement after an absent stretch
                route[ti] = pos
                ti += 1
                continue
            steps = int(meta.transit_steps[pos, want])
            if ti + steps < T:
                for _ in range(steps):
                    route[ti] = -1
                    ti += 1
                pos = want
                route[ti] = pos
                ti += 1
            else:
                route[ti] = pos  # not enough hours left; cancel the move
                ti += 1
        return route

    # ---- main loop ----------------------------------------------------------

    def run(self, warm_start: Optional[np.ndarray]) -> SolveReport:
        cfg = self.cfg
        if warm_start is not None:
            assign = {int(c): int(round(warm_start[c])) for c in self.bin_cols}
            self._fix_and_polish(assign, "warm-start")

        heap: list[tuple[float, int, _Node]] = []
        seq = 0
        root = _Node(bound=-np.inf, parent=None)
        heapq.heappush(heap, (root.bound, seq, root))
        limit_hit = False

        while heap:
            if cfg.node_limit is not None and self.nodes >= cfg.node_limit:
                limit_hit = True
                break
            if self._timed_out():
                limit_hit = True
                break
            bound, _, node = heapq.heappop(heap)
            # best-bound order: the popped bound is the global lower bound
            if self.incumbent is not None and self._gap(bound) <= cfg.gap_tol:
                seq += 1
                heapq.heappush(heap, (bound, seq, node))
                break
            if bound >= self.incumbent_obj - 1e-9:
                continue
            self.nodes += 1
            lb, ub = self._node_bounds(node)
            if not self.prop.run(lb, ub, cfg.propagation_passes):
                continue
            status, x, obj = self._solve_with_cones(
                lb, ub, self.incumbent_obj, cfg.max_cone_rounds)
            if status in ("infeasible", "pruned"):
                continue
            if status == "clean":
                self._accept(x, obj, "node")
                continue
            if self.nodes == 1 or (cfg.heuristic_freq and
                                   self.nodes % cfg.heuristic_freq == 0):
                self._trajectory_heuristic(x)
                if self.nodes == 1:
                    self._round_heuristic(x)
            frac = self._fractional(x)
            if cfg.branch_rule == "staged":
                branch_col = int(frac[int(np.argmin(self.branch_rank[frac]))])
            else:
                scores = np.abs(x[frac] - 0.5)
                branch_col = int(frac[int(np.argmin(scores))])
            # inherit the parent bound: parking aged cuts may let a child's
            # own LP dip below it, but the parent bound remains valid here
            child_bound = max(obj, bound)
            for val in (0, 1):
                seq += 1
                child = _Node(bound=child_bound, parent=node, col=branch_col,
                              val=val, depth=node.depth + 1)
                heapq.heappush(heap, (child.bound, seq, child))

        if heap:
            best_bound = min(min(b for b, _, _ in heap), self.incumbent_obj)
        else:
            best_bound = self.incumbent_obj
        gap = self._gap(best_bound)

        if self.incumbent is None:
            status = "iteration-limit" if limit_hit else "infeasible"
        elif gap <= cfg.gap_tol:
            status = "optimal"
        else:
            status = "gap-limit"
        max_cone = (self.system.max_violation(self.incumbent)
                    if self.incumbent is not None else np.inf)
        return SolveReport(
            status=status,
            objective=self.incumbent_obj,
            x=self.incumbent,
            best_bound=best_bound,
            mip_gap=gap,
            nodes=self.nodes,
            lp_solves=self.lp_solves,
            cuts=len(self.pool),
            max_cone_violation=float(max_cone),
            wall_time=time.perf_counter() - self.t0,
            incumbent_source=self.incumbent_source,
        )

    def _gap(self, best_bound: float) -> float:
        if self.incumbent is None:
            return np.inf
        if not np.isfinite(best_bound):
            return np.inf
        return (self.incumbent_obj - best_bound) / max(
            abs(self.incumbent_obj), 1e-9)


def solve_mip(model: MipModel, config: Optional[SolverConfig] = None,
              cut_pool: Optional[CutPool] = None,
              warm_start: Optional[np.ndarray] = None) -> SolveReport:
    """Solve a frozen model to the configured gap.

    ``cut_pool`` may be shared across repeated solves of the same model (the
    cuts are tangents to fixed cones, hence globally valid).  ``warm_start``
    is a full-length solution vector whose binary part seeds the incumbent
    after a feasibility polish.
    """
    search = _Search(model, config or SolverConfig(), cut_pool)
    return search.run(warm_start)
