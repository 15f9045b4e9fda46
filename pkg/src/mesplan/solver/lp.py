"""Thin wrapper around the HiGHS LP solver from scipy.

Only the linear part of a model is ever sent here: cone rows must arrive as
already-linearized cut rows.  Results carry the model's objective offset.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

__all__ = ["LpResult", "solve_lp"]

_STATUS = {0: "optimal", 1: "iteration-limit", 2: "infeasible",
           3: "unbounded", 4: "error"}


@dataclass
class LpResult:
    status: str
    objective: float
    x: Optional[np.ndarray]
    # reduced costs of the two bound rows (None unless optimal); in a
    # minimization these are >= 0 at the lower bound and <= 0 at the upper
    rc_lower: Optional[np.ndarray] = None
    rc_upper: Optional[np.ndarray] = None


def solve_lp(model, lb: Optional[np.ndarray] = None,
             ub: Optional[np.ndarray] = None,
             cut_matrix: Optional[sp.csr_matrix] = None,
             cut_rhs: Optional[np.ndarray] = None,
             method: str = "highs-ds", feas_tol: float = 1e-9) -> LpResult:
    """Solve the LP relaxation of ``model`` under optional bound overrides
    and extra ``<=`` cut rows.  Returns an optimal basic solution."""
    if not model.frozen:
        model.freeze()
    lb = model.lb if lb is None else lb
    ub = model.ub if ub is None else ub
    A_ub, b_ub = model.A_ub_base, model.b_ub_base
    if cut_matrix is not None and cut_matrix.shape[0]:
        A_ub = cut_matrix if A_ub is None else sp.vstack(
            [A_ub, cut_matrix], format="csr")
        b_ub = np.concatenate([b_ub, cut_rhs])
    bounds = np.column_stack([lb, ub])
    # LPs dense with near-parallel tangent rows occasionally make the solver
    # report numerical trouble, or presolve misdeclare infeasibility; retry
    # down this ladder before trusting a non-optimal verdict
    attempts = [
        (method, True, feas_tol),
        (method, False, feas_tol),
        ("highs", True, max(feas_tol, 1e-7)),
    ]
    status = "error"
    res = None
    for meth, pre, tol in attempts:
        res = linprog(
            model.obj, A_ub=A_ub, b_ub=b_ub, A_eq=model.A_eq,
            b_eq=model.b_eq, bounds=bounds, method=meth,
            options={"presolve": pre,
                     "primal_feasibility_tolerance": tol,
                     "dual_feasibility_tolerance": tol})
        status = _STATUS.get(res.status, "error")
        if status in ("optimal", "unbounded"):
            break
        if status == "infeasible" and not pre:
            break
    if status == "optimal":
        rc_lo = rc_hi = None
        if getattr(res, "lower", None) is not None:
            rc_lo = np.asarray(res.lower.marginals)
            rc_hi = np.asarray(res.upper.marginals)
        return LpResult("optimal", float(res.fun) + model.obj_offset,
                        np.asarray(res.x), rc_lo, rc_hi)
    if status == "unbounded":
        raise RuntimeError(
            "LP relaxation reported unbounded; every column carries finite "
            "bounds, so this indicates a corrupted model")
    if status != "infeasible":
        raise RuntimeError(
            f"LP solver failed with status {status!r} after retries; "
            f"refusing to treat an unresolved LP as infeasible")
    return LpResult(status, np.inf, None)
