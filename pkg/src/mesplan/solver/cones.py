"""Outer approximation of the cone rows by tangent cuts.

Tangent planes to a second-order cone are globally valid, so one pool of cuts
can be shared across all branch-and-bound nodes and across successive solves
of the same model (the hedging loop only swaps objectives).
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
import scipy.sparse as sp

from ..formulation import CIRCLE, ROTATED, ConeRow, MipModel

__all__ = ["CutPool", "ConeSystem", "seed_initial_cuts", "separate_cones"]


class CutPool:
    """Growing set of ``<=`` rows; deduplicates by (cone, rounded normal).

    Rows that stay slack for ``max_idle`` consecutive relaxations are parked
    so node LPs stay small.  A parked row returns the moment its key is
    separated again, which keeps the LP/separation loop honest: re-adding a
    parked tangent counts as a change.
    """

    def __init__(self, n_cols: int, max_idle: int = 10):
        self.n_cols = n_cols
        self.max_idle = max_idle
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []
        self._rhs: list[float] = []
        self._key_index: dict = {}
        self._active_list: list[bool] = []
        self._idle_list: list[int] = []
        self._matrix: Optional[sp.csr_matrix] = None
        self._matrix_rows: Optional[np.ndarray] = None
        self.seeded = False

    def __len__(self):
        return len(self._rhs)

    @property
    def active_count(self) -> int:
        return int(sum(self._active_list))

    def add(self, cols, vals, rhs: float, key) -> bool:
        idx = self._key_index.get(key)
        if idx is not None:
            if self._active_list[idx]:
                return False
            self._active_list[idx] = True
            self._idle_list[idx] = 0
            self._matrix = None
            return True
        self._key_index[key] = len(self._rhs)
        self._cols.append(np.asarray(cols, dtype=np.int64))
        self._vals.append(np.asarray(vals, dtype=float))
        self._rhs.append(float(rhs))
        self._active_list.append(True)
        self._idle_list.append(0)
        self._matrix = None
        return True

    def matrix(self) -> tuple[Optional[sp.csr_matrix], np.ndarray]:
        if self._matrix is None:
            rows = [i for i, on in enumerate(self._active_list) if on]
            self._matrix_rows = np.asarray(rows, dtype=np.int64)
            if not rows:
                self._matrix = sp.csr_matrix((0, self.n_cols))
            else:
                indptr = np.zeros(len(rows) + 1, dtype=np.int64)
                np.cumsum([len(self._cols[i]) for i in rows], out=indptr[1:])
                self._matrix = sp.csr_matrix(
                    (np.concatenate([self._vals[i] for i in rows]),
                     np.concatenate([self._cols[i] for i in rows]),
                     indptr), shape=(len(rows), self.n_cols))
                self._matrix.sum_duplicates()
                self._matrix.sort_indices()
        if self._matrix.shape[0] == 0:
            return None, np.zeros(0)
        return self._matrix, np.asarray(self._rhs)[self._matrix_rows]

    def age(self, x: np.ndarray) -> int:
        """Bump idle counters against ``x``; park rows idle for too long.

        Parking only loosens later relaxations, so bounds computed earlier
        stay valid lower bounds wherever they are reused.
        """
        mat, rhs = self.matrix()
        if mat is None:
            return 0
        slack = rhs - mat @ x
        loose = slack > 1e-6 * (1.0 + np.abs(rhs))
        parked = 0
        for local, idx in enumerate(self._matrix_rows):
            if loose[local]:
                self._idle_list[idx] += 1
                if self._idle_list[idx] > self.max_idle:
                    self._active_list[idx] = False
                    parked += 1
            else:
                self._idle_list[idx] = 0
        if parked:
            self._matrix = None
        return parked


class ConeSystem:
    """Compiled arrays for evaluating every cone of a model at once."""

    def __init__(self, model: MipModel):
        self.cones = model.cones
        n = model.n_cols
        circ = [c for c in self.cones if c.kind == CIRCLE]
        rot = [c for c in self.cones if c.kind == ROTATED]
        self.circles, self.rotated = circ, rot

        rows_i, cols_j, vals = [], [], []
        consts = np.zeros(2 * len(circ))
        for i, cone in enumerate(circ):
            for off, expr in ((0, cone.w1), (1, cone.w2)):
                consts[2 * i + off] = expr.const
                for cc, vv in zip(expr.cols, expr.coefs):
                    rows_i.append(2 * i + off)
                    cols_j.append(cc)
                    vals.append(vv)
        self._circ_W = sp.csr_matrix(
            (vals, (rows_i, cols_j)), shape=(2 * len(circ), n))
        self._circ_consts = consts
        self._circ_rhs = np.array([c.rhs for c in circ])

        # rotated cones are always plain coordinates in this model family
        for c in rot:
            if (len(c.w1.cols), len(c.w2.cols)) != (1, 1) or \
                    c.w1.coefs != (1.0,) or c.w2.coefs != (1.0,) or \
                    c.w1.const or c.w2.const:
                raise ValueError(f"rotated cone {c.name} is not in plain "
                                 f"coordinate form")
        self._rot_fp = np.array([c.w1.cols[0] for c in rot], dtype=np.int64)
        self._rot_fq = np.array([c.w2.cols[0] for c in rot], dtype=np.int64)
        self._rot_a = np.array([c.a_col for c in rot], dtype=np.int64)
        self._rot_v = np.array([c.v_col for c in rot], dtype=np.int64)

    def violations(self, x: np.ndarray):
        """(circle_viol, rotated_viol, circle_w, rot_coords) at ``x``."""
        w = (self._circ_W @ x + self._circ_consts).reshape(-1, 2)
        circ_norm = np.hypot(w[:, 0], w[:, 1])
        circ_viol = circ_norm - self._circ_rhs
        fp, fq = x[self._rot_fp], x[self._rot_fq]
        a, v = x[self._rot_a], x[self._rot_v]
        z_norm = np.sqrt(4 * fp * fp + 4 * fq * fq + (a - v) ** 2)
        rot_viol = z_norm - (a + v)
        return circ_viol, rot_viol, w, (fp, fq, a, v, z_norm)

    def max_violation(self, x: np.ndarray) -> float:
        if not self.cones:
            return 0.0
        cv, rv, _, _ = self.violations(x)
        return float(max(cv.max(initial=0.0), rv.max(initial=0.0)))


def _circle_cut(cone: ConeRow, n1: float, n2: float):
    """Expand ``n1*w1 + n2*w2 <= rhs`` into column space."""
    coefs: dict[int, float] = {}
    const = n1 * cone.w1.const + n2 * cone.w2.const
    for cc, vv in zip(cone.w1.cols, cone.w1.coefs):
        coefs[cc] = coefs.get(cc, 0.0) + n1 * vv
    for cc, vv in zip(cone.w2.cols, cone.w2.coefs):
        coefs[cc] = coefs.get(cc, 0.0) + n2 * vv
    cols = sorted(coefs)
    return cols, [coefs[c] for c in cols], cone.rhs - const


def seed_initial_cuts(model: MipModel, pool: CutPool, count: int = 8) -> int:
    """Regular-polygon tangents for every circle cone (none for rotated ones,
    which are approximated lazily).  Idempotent per pool."""
    if pool.seeded:
        return 0
    added = 0
    for cone in model.cones:
        if cone.kind != CIRCLE:
            continue
        for i in range(count):
            theta = 2.0 * math.pi * i / count
            n1, n2 = math.cos(theta), math.sin(theta)
            cols, vals, rhs = _circle_cut(cone, n1, n2)
            key = (cone.name, round(n1, 9), round(n2, 9))
            added += pool.add(cols, vals, rhs, key)
    pool.seeded = True
    return added


def separate_cones(system: ConeSystem, x: np.ndarray, pool: CutPool,
                   tol: float = 1e-6) -> int:
    """Add one tangent cut per cone violated at ``x`` by more than ``tol``.

    Returns the number of new rows (after deduplication).
    """
    if not system.cones:
        return 0
    circ_viol, rot_viol, w, rot = system.violations(x)
    added = 0
    for i in np.flatnonzero(circ_viol > tol):
        cone = system.circles[i]
        norm = math.hypot(w[i, 0], w[i, 1])
        n1, n2 = w[i, 0] / norm, w[i, 1] / norm
        cols, vals, rhs = _circle_cut(cone, n1, n2)
        key = (cone.name, round(n1, 9), round(n2, 9))
        added += pool.add(cols, vals, rhs, key)
    fp, fq, a, v, z_norm = rot
    for i in np.flatnonzero(rot_viol > tol):
        cone = system.rotated[i]
        zn = z_norm[i]
        n1, n2, n3 = 2 * fp[i] / zn, 2 * fq[i] / zn, (a[i] - v[i]) / zn
        # n . (2 fp, 2 fq, a - v) <= a + v
        cols = [cone.w1.cols[0], cone.w2.cols[0], cone.a_col, cone.v_col]
        vals = [2 * n1, 2 * n2, n3 - 1.0, -n3 - 1.0]
        key = (cone.name, round(n1, 9), round(n2, 9), round(n3, 9))
        added += pool.add(cols, vals, 0.0, key)
    return added
