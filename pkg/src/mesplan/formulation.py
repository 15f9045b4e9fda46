"""Mixed-integer model assembly for the two-stage siting/routing problem.

The model minimizes amortized investment plus (expected) daily operating cost
subject to storage dynamics, unit mobility with road transit delays, and a
second-order-cone relaxation of branch power flow on the radial feeder.

Conventions
-----------
* Line flows ``fp``/``fq`` are measured at the child end of each line and are
  positive when the child exports toward its parent, so ordinary delivery to
  loads shows up as negative flow.  ``a`` is the squared current magnitude,
  ``v`` the squared voltage magnitude.
* All power columns are per-unit on ``network.base_mva``; stored energy is in
  MWh; objective coefficients are dollars per day.
* Periods are 1-based hours ``1..horizon``; scenario ids follow the input.

Cone rows are kept symbolic (:class:`ConeRow`); the LP part of the model never
contains them.  The branch-and-bound solver enforces them by cutting planes,
and :func:`evaluate_solution` audits them directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .assets import Fleet, transit_time
from .grid import Network
from .scenarios import Scenario, ScenarioSet, derated_limit

__all__ = [
    "VarIndex",
    "AffineExpr",
    "ConeRow",
    "PhPenalty",
    "ModelMeta",
    "MipModel",
    "SolutionAudit",
    "build_scenario_model",
    "build_extensive_form",
    "apply_ph_penalty",
    "evaluate_solution",
]

SENSE_LE, SENSE_EQ, SENSE_GE = -1, 0, 1
CIRCLE, ROTATED = "circle", "rotated"

PLACEMENT_MODES = ("mobile", "stationary", "none")


class VarIndex:
    """Bijection between human-readable column names and column indices."""

    def __init__(self):
        self._by_name: dict[str, int] = {}
        self._names: list[str] = []

    def add(self, name: str) -> int:
        if name in self._by_name:
            raise ValueError(f"duplicate column name {name}")
        idx = len(self._names)
        self._by_name[name] = idx
        self._names.append(name)
        return idx

    def col(self, name: str) -> int:
        return self._by_name[name]

    def name(self, col: int) -> str:
        return self._names[col]

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def __len__(self) -> int:
        return len(self._names)


@dataclass(frozen=True)
class AffineExpr:
    """Sparse affine expression ``sum(coefs * x[cols]) + const``."""

    cols: tuple[int, ...]
    coefs: tuple[float, ...]
    const: float = 0.0

    def value(self, x: np.ndarray) -> float:
        return float(np.dot(x[list(self.cols)], self.coefs) + self.const)


@dataclass(frozen=True)
class ConeRow:
    """One conic restriction, enforced outside the LP.

    * ``kind == "circle"``: ``hypot(w1, w2) <= rhs`` (derated apparent limit).
    * ``kind == "rotated"``: ``w1^2 + w2^2 <= x[a_col] * x[v_col]`` where
      ``w1``/``w2`` are the plain flow coordinates; ``rhs`` is unused.
    """

    kind: str
    name: str
    w1: AffineExpr
    w2: AffineExpr
    rhs: float = 0.0
    a_col: int = -1
    v_col: int = -1

    def violation(self, x: np.ndarray) -> float:
        """Positive when violated; the rotated form uses the equivalent
        second-order cone ``||(2 w1, 2 w2, a - v)|| <= a + v``."""
        w1, w2 = self.w1.value(x), self.w2.value(x)
        if self.kind == CIRCLE:
            return math.hypot(w1, w2) - self.rhs
        a, v = float(x[self.a_col]), float(x[self.v_col])
        return math.sqrt(4 * w1 * w1 + 4 * w2 * w2 + (a - v) ** 2) - (a + v)


@dataclass(frozen=True)
class PhPenalty:
    """Linearized proximal term for one hedged binary column.

    Adds ``multiplier * x_c + (weight / 2) * (x_c - consensus)^2`` to the
    objective; for a binary column the quadratic is replaced exactly by
    ``(weight / 2) * ((1 - 2 * consensus) * x_c + consensus^2)``.
    """

    column: int
    multiplier: float
    consensus: float
    weight: float

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError(f"penalty weight must be >= 0, got {self.weight}")
        if not -1e-9 <= self.consensus <= 1 + 1e-9:
            raise ValueError(
                f"consensus must lie in [0, 1], got {self.consensus}")


@dataclass
class ModelMeta:
    """Structural lookup tables shared by the solver, hedging and reports.

    Index arrays are positional: ``u_cols[k_idx, b_idx, t_idx, s_idx]`` etc.,
    with ``unit_ids``/``bus_ids``/``scenario_ids`` mapping positions back to
    input identifiers.  A value of -1 marks an absent column.
    """

    kind: str                      # "scenario" | "extensive"
    placement_mode: str
    gamma: float
    horizon: int
    base_mva: float
    unit_ids: list[int]
    bus_ids: list[int]
    line_ids: list[int]
    scenario_ids: list[int]
    weights: dict[int, float]
    normal_sid: int
    x_cols: np.ndarray             # [K]
    u_cols: np.ndarray             # [K, B, T, S]
    e_cols: np.ndarray             # [K, T, S]
    pch_cols: np.ndarray           # [K, B, T, S]
    pdis_cols: np.ndarray
    qch_cols: np.ndarray
    qdis_cols: np.ndarray
    pg_cols: np.ndarray            # [B, T, S] (-1 where no generator)
    qg_cols: np.ndarray
    pls_cols: np.ndarray           # [B, T, S] (-1 where no sheddable demand)
    qls_cols: np.ndarray
    v_cols: np.ndarray             # [B, T, S]
    fp_cols: np.ndarray            # [L, T, S]
    fq_cols: np.ndarray
    a_cols: np.ndarray
    transit_steps: np.ndarray      # [B, B] whole hours
    hosting_caps: np.ndarray       # [B]
    line_child_pos: np.ndarray     # [L] position of each line's child bus
    demand_p_mw: np.ndarray        # [B, T, S] demand actually used (MW)

    def hedged_columns(self) -> np.ndarray:
        """Install columns plus every first-period placement column."""
        first = self.u_cols[:, :, 0, :].reshape(-1)
        return np.concatenate([self.x_cols, first[first >= 0]])

    def s_pos(self, sid: int) -> int:
        return self.scenario_ids.index(sid)


class MipModel:
    """A bounded LP with binary markers plus symbolic cone rows.

    Built incrementally with :meth:`add_col`/:meth:`add_row`, then
    :meth:`freeze` compiles the rows into CSR matrices.  Frozen models are
    treated as immutable except for objective swaps via
    :meth:`with_objective` (which share all structural arrays).
    """

    def __init__(self):
        self.varindex = VarIndex()
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._obj: list[float] = []
        self._binary: list[bool] = []
        self._tag: list[str] = []
        self._tag_sid: list[int] = []
        self._coo_i: list[int] = []
        self._coo_j: list[int] = []
        self._coo_v: list[float] = []
        self._sense: list[int] = []
        self._rhs: list[float] = []
        self._row_names: list[str] = []
        self.cones: list[ConeRow] = []
        self.obj_offset = 0.0
        self.meta: Optional[ModelMeta] = None
        self.frozen = False

    # ----- construction -------------------------------------------------

    def add_col(self, name: str, lb: float, ub: float, obj: float = 0.0,
                binary: bool = False, tag: str = "", sid: int = -1) -> int:
        if self.frozen:
            raise RuntimeError("model is frozen")
        if not (np.isfinite(lb) and np.isfinite(ub)) or lb > ub + 1e-12:
            raise ValueError(f"column {name}: bad bounds [{lb}, {ub}]")
        idx = self.varindex.add(name)
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self._obj.append(float(obj))
        self._binary.append(bool(binary))
        self._tag.append(tag)
        self._tag_sid.append(sid)
        return idx

    def add_row(self, cols: Sequence[int], vals: Sequence[float], sense: int,
                rhs: float, name: str) -> int:
        if self.frozen:
            raise RuntimeError("model is frozen")
        i = len(self._sense)
        self._coo_i.extend([i] * len(cols))
        self._coo_j.extend(cols)
        self._coo_v.extend(vals)
        self._sense.append(sense)
        self._rhs.append(float(rhs))
        self._row_names.append(name)
        return i

    def add_cone(self, cone: ConeRow):
        if self.frozen:
            raise RuntimeError("model is frozen")
        self.cones.append(cone)

    def freeze(self):
        if self.frozen:
            return self
        n, m = len(self._lb), len(self._sense)
        self.n_cols, self.n_rows = n, m
        self.lb = np.array(self._lb)
        self.ub = np.array(self._ub)
        self.obj = np.array(self._obj)
        self.is_binary = np.array(self._binary, dtype=bool)
        self.cost_tag = np.array(self._tag, dtype=object)
        self.cost_sid = np.array(self._tag_sid, dtype=np.int64)
        self.A = sp.csr_matrix(
            (np.array(self._coo_v),
             (np.array(self._coo_i, dtype=np.int64),
              np.array(self._coo_j, dtype=np.int64))),
            shape=(m, n))
        self.A.sum_duplicates()
        self.A.sort_indices()
        self.row_sense = np.array(self._sense, dtype=np.int8)
        self.row_rhs = np.array(self._rhs)
        self.row_names = self._row_names
        le = np.flatnonzero(self.row_sense == SENSE_LE)
        ge = np.flatnonzero(self.row_sense == SENSE_GE)
        eq = np.flatnonzero(self.row_sense == SENSE_EQ)
        self.le_rows, self.ge_rows, self.eq_rows = le, ge, eq
        blocks = []
        if le.size:
            blocks.append(self.A[le])
        if ge.size:
            blocks.append(-self.A[ge])
        self.A_ub_base = sp.vstack(blocks, format="csr") if blocks else None
        self.b_ub_base = np.concatenate(
            [self.row_rhs[le], -self.row_rhs[ge]]) if blocks else np.zeros(0)
        self.A_eq = self.A[eq] if eq.size else None
        self.b_eq = self.row_rhs[eq] if eq.size else np.zeros(0)
        # true-cost coefficients, preserved across objective swaps so audits
        # of penalized twins still decompose real dollars
        self.cost_coef = self.obj.copy()
        for attr in ("_lb", "_ub", "_obj", "_binary", "_tag", "_tag_sid",
                     "_coo_i", "_coo_j", "_coo_v", "_sense", "_rhs"):
            setattr(self, attr, None)
        self.frozen = True
        return self

    def with_objective(self, obj: np.ndarray, offset: float) -> "MipModel":
        """Copy sharing every structural array but carrying a new objective."""
        if not self.frozen:
            raise RuntimeError("freeze the model before swapping objectives")
        clone = MipModel.__new__(MipModel)
        clone.__dict__.update(self.__dict__)
        clone.obj = np.asarray(obj, dtype=float)
        if clone.obj.shape != (self.n_cols,):
            raise ValueError("objective length mismatch")
        clone.obj_offset = float(offset)
        return clone

    def with_bounds(self, lb: np.ndarray, ub: np.ndarray) -> "MipModel":
        """Copy sharing every structural array but carrying new bounds."""
        if not self.frozen:
            raise RuntimeError("freeze the model before swapping bounds")
        lb = np.asarray(lb, dtype=float)
        ub = np.asarray(ub, dtype=float)
        if lb.shape != (self.n_cols,) or ub.shape != (self.n_cols,):
            raise ValueError("bounds length mismatch")
        if np.any(lb > ub + 1e-12):
            raise ValueError("crossed bounds")
        clone = MipModel.__new__(MipModel)
        clone.__dict__.update(self.__dict__)
        clone.lb, clone.ub = lb, ub
        return clone

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.obj @ x) + self.obj_offset


# --------------------------------------------------------------------------
# builders
# --------------------------------------------------------------------------


def _scenario_caps_pu(network: Network, scenario: Scenario,
                      horizon: int) -> np.ndarray:
    """Derated apparent limits [L, T] in per-unit for one scenario."""
    caps = np.empty((len(network.lines), horizon))
    for li, line in enumerate(network.lines):
        for t in range(1, horizon + 1):
            caps[li, t - 1] = derated_limit(scenario, line, t) / network.base_mva
    return caps


def _build(network: Network, fleet: Fleet, scenarios: Sequence[Scenario],
           weights: dict[int, float], kind: str, gamma: float,
           horizon: Optional[int], placement_mode: str) -> MipModel:
    if placement_mode not in PLACEMENT_MODES:
        raise ValueError(f"unknown placement mode {placement_mode!r}")
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    T = network.horizon if horizon is None else int(horizon)
    if not 1 <= T <= network.horizon:
        raise ValueError(f"horizon {T} outside 1..{network.horizon}")
    base = network.base_mva
    buses = [b.id for b in network.buses]
    lines = [l.id for l in network.lines]
    units = [u.id for u in fleet.units]
    sids = [s.id for s in scenarios]
    is_normal = {s.id: s.is_normal for s in scenarios}
    normal_ids = [s.id for s in scenarios if s.is_normal]
    normal_sid = normal_ids[0] if normal_ids else -1
    K, B, L, S = len(units), len(buses), len(lines), len(sids)
    bpos = {b: i for i, b in enumerate(buses)}
    # buses whose hosting cap is zero can never receive a unit; fixing the
    # placement columns there (instead of leaning on the hosting rows alone)
    # keeps the branch-and-bound tree small
    host_ok = np.array([fleet.hosting_limit(b) >= 1 for b in buses])

    m = MipModel()

    # ---- investment columns (shared across scenarios) -------------------
    x_cols = np.empty(K, dtype=np.int64)
    for ki, unit in enumerate(fleet.units):
        ub = 0.0 if placement_mode == "none" else 1.0
        x_cols[ki] = m.add_col(
            f"x[{unit.id}]", 0.0, ub, obj=gamma * unit.capital_cost(),
            binary=True, tag="investment", sid=-1)

    shape_kbts = (K, B, T, S)
    u_cols = np.full(shape_kbts, -1, dtype=np.int64)
    e_cols = np.full((K, T, S), -1, dtype=np.int64)
    pch_cols = np.full(shape_kbts, -1, dtype=np.int64)
    pdis_cols = np.full(shape_kbts, -1, dtype=np.int64)
    qch_cols = np.full(shape_kbts, -1, dtype=np.int64)
    qdis_cols = np.full(shape_kbts, -1, dtype=np.int64)
    pg_cols = np.full((B, T, S), -1, dtype=np.int64)
    qg_cols = np.full((B, T, S), -1, dtype=np.int64)
    pls_cols = np.full((B, T, S), -1, dtype=np.int64)
    qls_cols = np.full((B, T, S), -1, dtype=np.int64)
    v_cols = np.full((B, T, S), -1, dtype=np.int64)
    fp_cols = np.full((L, T, S), -1, dtype=np.int64)
    fq_cols = np.full((L, T, S), -1, dtype=np.int64)
    a_cols = np.full((L, T, S), -1, dtype=np.int64)
    demand_p = np.zeros((B, T, S))

    for si, scen in enumerate(scenarios):
        sid = scen.id
        w = weights[sid] if kind == "extensive" else 1.0
        caps = _scenario_caps_pu(network, scen, T)

        # demand actually applied in this scenario (MW), trimmed to horizon
        dp = np.zeros((B, T))
        dq = np.zeros((B, T))
        for bi, b in enumerate(buses):
            dp[bi] = scen.demand_p(network, b)[:T]
            dq[bi] = scen.demand_q(network, b)[:T]
        demand_p[:, :, si] = dp

        for ki, unit in enumerate(fleet.units):
            k = unit.id
            pch_ub = unit.power_rating / (unit.eta_ch * base)
            pdis_ub = unit.power_rating * unit.eta_dis / base
            u_up = 0.0 if placement_mode == "none" else 1.0
            for ti in range(T):
                t = ti + 1
                e_cols[ki, ti, si] = m.add_col(
                    f"e[{k},{t},{sid}]", 0.0, unit.energy_rating)
                for bi, b in enumerate(buses):
                    can_host = host_ok[bi]
                    u_cols[ki, bi, ti, si] = m.add_col(
                        f"u[{k},{b},{t},{sid}]", 0.0,
                        u_up if can_host else 0.0, binary=True)
                    deg = w * abs(unit.degradation_slope / 100.0) * \
                        unit.price_power * 1000.0 * base
                    p_hi = pch_ub if can_host else 0.0
                    d_hi = pdis_ub if can_host else 0.0
                    pch_cols[ki, bi, ti, si] = m.add_col(
                        f"pch[{k},{b},{t},{sid}]", 0.0, p_hi, obj=deg,
                        tag="degradation", sid=sid)
                    pdis_cols[ki, bi, ti, si] = m.add_col(
                        f"pdis[{k},{b},{t},{sid}]", 0.0, d_hi, obj=deg,
                        tag="degradation", sid=sid)
                    kq = unit.power_factor_param
                    qch_cols[ki, bi, ti, si] = m.add_col(
                        f"qch[{k},{b},{t},{sid}]", -kq * p_hi, kq * p_hi)
                    qdis_cols[ki, bi, ti, si] = m.add_col(
                        f"qdis[{k},{b},{t},{sid}]", -kq * d_hi, kq * d_hi)

        for bi, b in enumerate(buses):
            bus = network.bus_by_id[b]
            gen = network.gen_by_bus.get(b)
            for ti in range(T):
                t = ti + 1
                v_cols[bi, ti, si] = m.add_col(
                    f"v[{b},{t},{sid}]", bus.v_min, bus.v_max)
                if gen is not None:
                    pg_cols[bi, ti, si] = m.add_col(
                        f"pg[{b},{t},{sid}]", gen.p_min / base,
                        gen.p_max / base, obj=w * gen.marginal_cost * base,
                        tag="generation", sid=sid)
                    qg_cols[bi, ti, si] = m.add_col(
                        f"qg[{b},{t},{sid}]", gen.q_min / base,
                        gen.q_max / base)
                if b != 0 and (dp[bi].any() or dq[bi].any()):
                    pls_cols[bi, ti, si] = m.add_col(
                        f"pls[{b},{t},{sid}]", 0.0, dp[bi, ti] / base,
                        obj=w * bus.voll * base, tag="shed", sid=sid)
                    qls_cols[bi, ti, si] = m.add_col(
                        f"qls[{b},{t},{sid}]", min(0.0, dq[bi, ti] / base),
                        max(0.0, dq[bi, ti] / base))

        for li, line in enumerate(lines):
            ln = network.line_by_id[line]
            for ti in range(T):
                t = ti + 1
                cap = caps[li, ti]
                fp_cols[li, ti, si] = m.add_col(
                    f"fp[{line},{t},{sid}]", -cap, cap)
                fq_cols[li, ti, si] = m.add_col(
                    f"fq[{line},{t},{sid}]", -cap, cap)
                # from the parent-end circle: a*|(R,X)| <= |f - a(R,X)| + |f|
                a_ub = 2.0 * cap / float(np.hypot(ln.resistance,
                                                  ln.reactance))
                a_cols[li, ti, si] = m.add_col(
                    f"a[{line},{t},{sid}]", 0.0, a_ub)

        # ---- storage rows ----
        for ki, unit in enumerate(fleet.units):
            k = unit.id
            ch_coef = unit.eta_ch * base          # pu -> MWh per hour
            dis_coef = base / unit.eta_dis
            for ti in range(T):
                t = ti + 1
                cols = [e_cols[ki, ti, si]]
                vals = [1.0]
                rhs = 0.0
                if ti == 0:
                    rhs = unit.initial_soc
                else:
                    cols.append(e_cols[ki, ti - 1, si])
                    vals.append(-1.0)
                for bi in range(B):
                    cols.extend([pch_cols[ki, bi, ti, si],
                                 pdis_cols[ki, bi, ti, si]])
                    vals.extend([-ch_coef, dis_coef])
                m.add_row(cols, vals, SENSE_EQ, rhs, f"soc[{k},{t},{sid}]")
                for bi, b in enumerate(buses):
                    u_c = u_cols[ki, bi, ti, si]
                    m.add_row([pch_cols[ki, bi, ti, si], u_c],
                              [ch_coef, -unit.power_rating],
                              SENSE_LE, 0.0, f"chgcap[{k},{b},{t},{sid}]")
                    m.add_row([pdis_cols[ki, bi, ti, si], u_c],
                              [dis_coef, -unit.power_rating],
                              SENSE_LE, 0.0, f"discap[{k},{b},{t},{sid}]")
                    kq = unit.power_factor_param
                    m.add_row([qch_cols[ki, bi, ti, si],
                               pch_cols[ki, bi, ti, si]],
                              [1.0, -kq], SENSE_LE, 0.0,
                              f"qchhi[{k},{b},{t},{sid}]")
                    m.add_row([qch_cols[ki, bi, ti, si],
                               pch_cols[ki, bi, ti, si]],
                              [-1.0, -kq], SENSE_LE, 0.0,
                              f"qchlo[{k},{b},{t},{sid}]")
                    m.add_row([qdis_cols[ki, bi, ti, si],
                               pdis_cols[ki, bi, ti, si]],
                              [1.0, -kq], SENSE_LE, 0.0,
                              f"qdishi[{k},{b},{t},{sid}]")
                    m.add_row([qdis_cols[ki, bi, ti, si],
                               pdis_cols[ki, bi, ti, si]],
                              [-1.0, -kq], SENSE_LE, 0.0,
                              f"qdislo[{k},{b},{t},{sid}]")

        # ---- power flow rows ----
        for li, line in enumerate(lines):
            ln = network.line_by_id[line]
            child, parent = bpos[ln.to_bus], bpos[ln.from_bus]
            R, X = ln.resistance, ln.reactance
            for ti in range(T):
                t = ti + 1
                m.add_row(
                    [v_cols[child, ti, si], fp_cols[li, ti, si],
                     fq_cols[li, ti, si], a_cols[li, ti, si],
                     v_cols[parent, ti, si]],
                    [1.0, -2.0 * R, -2.0 * X, R * R + X * X, -1.0],
                    SENSE_EQ, 0.0, f"vdrop[{line},{t},{sid}]")
                cap = caps[li, ti]
                if cap > 0.0:
                    fp_c, fq_c = fp_cols[li, ti, si], fq_cols[li, ti, si]
                    a_c = a_cols[li, ti, si]
                    m.add_cone(ConeRow(
                        CIRCLE, f"fwcap[{line},{t},{sid}]",
                        AffineExpr((fp_c,), (1.0,)),
                        AffineExpr((fq_c,), (1.0,)), rhs=cap))
                    m.add_cone(ConeRow(
                        CIRCLE, f"bwcap[{line},{t},{sid}]",
                        AffineExpr((fp_c, a_c), (1.0, -R)),
                        AffineExpr((fq_c, a_c), (1.0, -X)), rhs=cap))
                    m.add_cone(ConeRow(
                        ROTATED, f"loss[{line},{t},{sid}]",
                        AffineExpr((fp_c,), (1.0,)),
                        AffineExpr((fq_c,), (1.0,)),
                        a_col=a_c, v_col=v_cols[child, ti, si]))

        line_pos = {l: i for i, l in enumerate(lines)}
        for bi, b in enumerate(buses):
            bus = network.bus_by_id[b]
            child_lines = [line_pos[l] for l in network.children[b]]
            own = line_pos[b] if b != 0 else None
            for ti in range(T):
                t = ti + 1
                for comp, fcols, imp, shunt, shunt_sign, g_arr, ls_arr, \
                        dis_arr, ch_arr, rhs in (
                        ("p", fp_cols, 'resistance', bus.shunt_conductance,
                         1.0, pg_cols, pls_cols, pdis_cols, pch_cols,
                         -dp[bi, ti] / base),
                        ("q", fq_cols, 'reactance', bus.shunt_susceptance,
                         -1.0, qg_cols, qls_cols, qdis_cols, qch_cols,
                         -dq[bi, ti] / base)):
                    cols, vals = [], []
                    if own is not None:
                        cols.append(fcols[own, ti, si])
                        vals.append(1.0)
                    for lj in child_lines:
                        imped = getattr(network.line_by_id[lines[lj]], imp)
                        cols.extend([fcols[lj, ti, si], a_cols[lj, ti, si]])
                        vals.extend([-1.0, imped])
                    if g_arr[bi, ti, si] >= 0:
                        cols.append(g_arr[bi, ti, si])
                        vals.append(-1.0)
                    if ls_arr[bi, ti, si] >= 0:
                        cols.append(ls_arr[bi, ti, si])
                        vals.append(-1.0)
                    if shunt != 0.0:
                        cols.append(v_cols[bi, ti, si])
                        vals.append(shunt_sign * shunt)
                    for ki in range(K):
                        cols.extend([dis_arr[ki, bi, ti, si],
                                     ch_arr[ki, bi, ti, si]])
                        vals.extend([-1.0, 1.0])
                    m.add_row(cols, vals, SENSE_EQ, rhs,
                              f"{comp}bal[{b},{t},{sid}]")

        # ---- mobility rows ----
        for ki, unit in enumerate(fleet.units):
            k = unit.id
            for ti in range(T):
                t = ti + 1
                m.add_row(
                    list(u_cols[ki, :, ti, si]) + [x_cols[ki]],
                    [1.0] * B + [-1.0], SENSE_LE, 0.0,
                    f"mobility[{k},{t},{sid}]")
        for bi, b in enumerate(buses):
            cap_b = fleet.hosting_limit(b)
            for ti in range(T):
                t = ti + 1
                m.add_row(list(u_cols[:, bi, ti, si]), [1.0] * K, SENSE_LE,
                          float(cap_b), f"hosting[{b},{t},{sid}]")

        tie_all_periods = is_normal[sid] or placement_mode == "stationary"
        if tie_all_periods:
            for ki, unit in enumerate(fleet.units):
                for bi, b in enumerate(buses):
                    for ti in range(1, T):
                        m.add_row(
                            [u_cols[ki, bi, ti, si], u_cols[ki, bi, 0, si]],
                            [1.0, -1.0], SENSE_EQ, 0.0,
                            f"stationary[{unit.id},{b},{ti + 1},{sid}]")

        if not is_normal[sid] and placement_mode == "mobile":
            # transit dead time after leaving b1: no other bus for T^d hours
            for ki, unit in enumerate(fleet.units):
                k = unit.id
                for b1i, b1 in enumerate(buses):
                    if not host_ok[b1i]:
                        continue
                    for b2i, b2 in enumerate(buses):
                        if b1i == b2i or not host_ok[b2i]:
                            continue
                        steps = transit_time(fleet.transit, network, b1, b2)
                        if steps <= 0:
                            continue
                        for ti in range(T - 1):
                            t = ti + 1
                            for tau in range(1, min(steps, T - t) + 1):
                                m.add_row(
                                    [u_cols[ki, b1i, ti, si],
                                     u_cols[ki, b1i, ti + 1, si],
                                     u_cols[ki, b2i, ti + tau, si]],
                                    [1.0, -1.0, 1.0], SENSE_LE, 1.0,
                                    f"delay[{k},{b1},{b2},{t},{tau},{sid}]")

    # ---- cross-scenario coupling (extensive form only) -------------------
    if kind == "extensive":
        # stationary mode already ties every period to the first inside each
        # scenario, so first-period equality is always enough here
        s1 = 0
        for si in range(1, S):
            sid = sids[si]
            for ki, unit in enumerate(fleet.units):
                for bi, b in enumerate(buses):
                    m.add_row(
                        [u_cols[ki, bi, 0, si], u_cols[ki, bi, 0, s1]],
                        [1.0, -1.0], SENSE_EQ, 0.0,
                        f"link[{unit.id},{b},1,{sid}]")

    transit_steps = np.zeros((B, B), dtype=np.int64)
    for b1i, b1 in enumerate(buses):
        for b2i, b2 in enumerate(buses):
            if b1 != b2:
                transit_steps[b1i, b2i] = transit_time(
                    fleet.transit, network, b1, b2)

    m.meta = ModelMeta(
        kind=kind, placement_mode=placement_mode, gamma=gamma, horizon=T,
        base_mva=base, unit_ids=units, bus_ids=buses, line_ids=lines,
        scenario_ids=sids, weights=dict(weights), normal_sid=normal_sid,
        x_cols=x_cols, u_cols=u_cols, e_cols=e_cols, pch_cols=pch_cols,
        pdis_cols=pdis_cols, qch_cols=qch_cols, qdis_cols=qdis_cols,
        pg_cols=pg_cols, qg_cols=qg_cols, pls_cols=pls_cols,
        qls_cols=qls_cols, v_cols=v_cols, fp_cols=fp_cols, fq_cols=fq_cols,
        a_cols=a_cols, transit_steps=transit_steps,
        hosting_caps=np.array([fleet.hosting_limit(b) for b in buses]),
        line_child_pos=np.array([bpos[network.line_by_id[l].to_bus]
                                 for l in lines]),
        demand_p_mw=demand_p,
    )
    return m.freeze()


def build_scenario_model(network: Network, fleet: Fleet, scenario: Scenario,
                         gamma: float, horizon: Optional[int] = None,
                         placement_mode: str = "mobile") -> MipModel:
    """Single-scenario subproblem: amortized investment plus this scenario's
    unweighted operating cost (the decomposition objective)."""
    return _build(network, fleet, [scenario], {scenario.id: 1.0}, "scenario",
                  gamma, horizon, placement_mode)


def build_extensive_form(network: Network, fleet: Fleet,
                         scenario_set: ScenarioSet, gamma: float,
                         horizon: Optional[int] = None,
                         placement_mode: str = "mobile") -> MipModel:
    """All scenarios in one model with probability-weighted operating cost and
    first-period placements linked to the normal scenario."""
    weights = {s.id: s.probability for s in scenario_set}
    return _build(network, fleet, list(scenario_set), weights, "extensive",
                  gamma, horizon, placement_mode)


def apply_ph_penalty(model: MipModel, penalties: Sequence[PhPenalty]) -> MipModel:
    """Return a twin of ``model`` carrying the hedging proximal objective."""
    if not model.frozen:
        model.freeze()
    obj = model.obj.copy()
    offset = model.obj_offset
    for pen in penalties:
        if not model.is_binary[pen.column]:
            raise ValueError(
                f"hedged column {model.varindex.name(pen.column)} is not binary")
        obj[pen.column] += pen.multiplier + \
            0.5 * pen.weight * (1.0 - 2.0 * pen.consensus)
        offset += 0.5 * pen.weight * pen.consensus ** 2
    return model.with_objective(obj, offset)


# --------------------------------------------------------------------------
# independent audit
# --------------------------------------------------------------------------


@dataclass
class SolutionAudit:
    """Feasibility and cost report computed directly from model data."""

    objective: float
    investment_cost: float          # un-amortized dollars
    amortized_investment: float
    operating_cost: dict[int, float]       # sid -> $
    generation_cost: dict[int, float]
    shed_cost: dict[int, float]
    degradation_cost: dict[int, float]
    shed_mwh: dict[int, float]              # sid -> MWh over the horizon
    shed_mwh_by_bus: dict[int, dict[int, float]]   # sid -> bus -> MWh
    max_row_violation: float
    max_bound_violation: float
    max_cone_violation: float
    max_integrality_violation: float
    worst_rows: list[tuple[str, float]]
    cone_violations: dict[str, float]

    def feasible(self, tol: float = 1e-6) -> bool:
        return max(self.max_row_violation, self.max_bound_violation,
                   self.max_cone_violation,
                   self.max_integrality_violation) <= tol


def evaluate_solution(model: MipModel, x: np.ndarray,
                      worst: int = 10) -> SolutionAudit:
    """Audit ``x`` against every row, bound, cone and the tagged objective.

    The costs are rebuilt from per-column tags rather than read from the
    solver, so this doubles as the independent check required on final plans.
    """
    if not model.frozen:
        model.freeze()
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n_cols,):
        raise ValueError(f"solution length {x.shape} != {model.n_cols} columns")
    meta = model.meta

    r = model.A @ x - model.row_rhs
    viol = np.where(model.row_sense == SENSE_EQ, np.abs(r),
                    np.where(model.row_sense == SENSE_LE, r, -r))
    viol = np.maximum(viol, 0.0)
    order = np.argsort(viol)[::-1][:worst]
    worst_rows = [(model.row_names[i], float(viol[i])) for i in order
                  if viol[i] > 0]
    bound_viol = np.maximum(model.lb - x, x - model.ub)
    int_viol = np.abs(x[model.is_binary] - np.round(x[model.is_binary])) \
        if model.is_binary.any() else np.zeros(1)

    cone_viol = {c.name: c.violation(x) for c in model.cones}
    max_cone = max(cone_viol.values(), default=0.0)

    weights = meta.weights if meta is not None else {}
    gamma = meta.gamma if meta is not None else 1.0

    inv = 0.0
    per_sid = {sid: {"generation": 0.0, "shed": 0.0, "degradation": 0.0}
               for sid in (meta.scenario_ids if meta else [])}
    tags = model.cost_tag
    sids_col = model.cost_sid
    for j in np.flatnonzero(tags != ""):
        tag = tags[j]
        if tag == "investment":
            inv += model.cost_coef[j] / gamma * x[j]
        else:
            sid = int(sids_col[j])
            w = weights.get(sid, 1.0) if meta and meta.kind == "extensive" else 1.0
            parts = per_sid.setdefault(
                sid, {"generation": 0.0, "shed": 0.0, "degradation": 0.0})
            parts[tag] += model.cost_coef[j] / w * x[j]

    oc = {sid: sum(parts.values()) for sid, parts in per_sid.items()}
    if meta is not None and meta.kind == "extensive":
        objective = gamma * inv + sum(weights[sid] * oc[sid] for sid in oc)
    else:
        objective = gamma * inv + sum(oc.values())

    shed_mwh = {}
    shed_by_bus = {}
    if meta is not None:
        for si, sid in enumerate(meta.scenario_ids):
            table = {}
            for bi, b in enumerate(meta.bus_ids):
                cols = meta.pls_cols[bi, :, si]
                have = cols >= 0
                mwh = float(x[cols[have]].sum() * meta.base_mva)
                if mwh:
                    table[b] = mwh
            shed_by_bus[sid] = table
            shed_mwh[sid] = float(sum(table.values()))

    return SolutionAudit(
        objective=objective,
        investment_cost=inv,
        amortized_investment=gamma * inv,
        operating_cost=oc,
        generation_cost={s: p["generation"] for s, p in per_sid.items()},
        shed_cost={s: p["shed"] for s, p in per_sid.items()},
        degradation_cost={s: p["degradation"] for s, p in per_sid.items()},
        shed_mwh=shed_mwh,
        shed_mwh_by_bus=shed_by_bus,
        max_row_violation=float(viol.max(initial=0.0)),
        max_bound_violation=float(bound_viol.max(initial=0.0)),
        max_cone_violation=float(max_cone),
        max_integrality_violation=float(int_viol.max(initial=0.0)),
        worst_rows=worst_rows,
        cone_violations=cone_viol,
    )
