"""LP- and MPS-format model files, plus readers for the same dialect.

Cone rows cannot be expressed in either text format, so a model is exported
as its linear part plus the *current* tangent cuts (when a pool is passed),
and every cone's exact definition rides along in a comment block.  The
readers parse exactly the dialect the writers emit; writing a model, reading
it back and writing again reproduces the first file byte for byte (names are
mangled once on the first write and are stable afterwards).

Numbers are fixed-point with 12 significant digits, never exponent form.
"""

from __future__ import annotations

import numpy as np

from ..formulation import (CIRCLE, MipModel, SENSE_EQ, SENSE_GE, SENSE_LE,
                           AffineExpr)

__all__ = ["export_model", "read_lp", "read_mps"]

_MANGLE = str.maketrans({c: "_" for c in "[](),:;*^<>= \t"})
_SENSE_TXT = {SENSE_LE: "<=", SENSE_GE: ">=", SENSE_EQ: "="}
_TXT_SENSE = {v: k for k, v in _SENSE_TXT.items()}
_WRAP = 72


def _num(v: float) -> str:
    v = float(v)
    if v == 0.0:                      # normalize -0.0
        v = 0.0
    return np.format_float_positional(v, precision=12, unique=False,
                                      fractional=False, trim="-")


def _signed(v: float) -> tuple[str, str]:
    return ("-" if v < 0 else "+"), _num(abs(v))


def mangle(name: str) -> str:
    return name.translate(_MANGLE)


def _mangled_names(names) -> list[str]:
    out, seen = [], set()
    for n in names:
        m = mangle(n)
        if m in seen:
            raise ValueError(f"name mangling collision on {n!r} -> {m!r}")
        seen.add(m)
        out.append(m)
    return out


def _wrap_terms(head: str, parts: list[str], indent: str = "   ") -> list[str]:
    lines, cur = [], head
    for p in parts:
        if len(cur) + 1 + len(p) > _WRAP and cur.strip():
            lines.append(cur)
            cur = indent + p
        else:
            cur = cur + " " + p if cur else p
    lines.append(cur)
    return lines


def _expr_comment(expr: AffineExpr, names: list[str]) -> str:
    bits = [_num(expr.const)]
    for c, v in zip(expr.cols, expr.coefs):
        bits.append(f"{_num(v)}*{names[c]}")
    return " ".join(bits)


def _cone_comments(model: MipModel, names: list[str], prefix: str) -> list[str]:
    out = []
    for cone in model.cones:
        if cone.kind == CIRCLE:
            out.append(f"{prefix} cone circle {mangle(cone.name)} rhs "
                       f"{_num(cone.rhs)} w1 {_expr_comment(cone.w1, names)} "
                       f"w2 {_expr_comment(cone.w2, names)}")
        else:
            out.append(f"{prefix} cone rotated {mangle(cone.name)} a "
                       f"{names[cone.a_col]} v {names[cone.v_col]} w1 "
                       f"{_expr_comment(cone.w1, names)} w2 "
                       f"{_expr_comment(cone.w2, names)}")
    return out


def _rows_with_cuts(model: MipModel, cut_pool):
    """(name, cols, vals, sense, rhs) for model rows then pool cuts."""
    _mangled_names(model.row_names)     # collision guard
    A = model.A
    for i in range(model.n_rows):
        s, e = A.indptr[i], A.indptr[i + 1]
        yield (model.row_names[i], A.indices[s:e], A.data[s:e],
               int(model.row_sense[i]), float(model.row_rhs[i]))
    if cut_pool is not None:
        mat, rhs = cut_pool.matrix()
        if mat is not None:
            for i in range(mat.shape[0]):
                s, e = mat.indptr[i], mat.indptr[i + 1]
                yield (f"cut_{i}", mat.indices[s:e], mat.data[s:e],
                       SENSE_LE, float(rhs[i]))


def _write_lp(model: MipModel, path: str, cut_pool) -> None:
    names = _mangled_names(model.varindex.name(i)
                           for i in range(model.n_cols))
    lines = _cone_comments(model, names, "\\")
    lines.append("Minimize")
    parts = []
    for j in range(model.n_cols):
        v = model.obj[j]
        if v != 0.0:
            sg, nm = _signed(v)
            parts.append(f"{sg} {nm} {names[j]}")
    if model.obj_offset != 0.0:
        sg, nm = _signed(model.obj_offset)
        parts.append(f"{sg} {nm}")
    lines.extend(_wrap_terms(" obj:", parts))
    lines.append("Subject To")
    for rname, cols, vals, sense, rhs in _rows_with_cuts(model, cut_pool):
        parts = []
        for c, v in zip(cols, vals):
            sg, nm = _signed(v)
            parts.append(f"{sg} {nm} {names[c]}")
        parts.append(_SENSE_TXT[sense])
        parts.append(_num(rhs))
        lines.extend(_wrap_terms(f" {mangle(rname)}:", parts))
    lines.append("Bounds")
    for j in range(model.n_cols):
        lines.append(f" {_num(model.lb[j])} <= {names[j]} <= "
                     f"{_num(model.ub[j])}")
    if model.is_binary.any():
        lines.append("Binaries")
        lines.extend(_wrap_terms(" ", [names[j] for j in
                                       np.flatnonzero(model.is_binary)]))
    lines.append("End")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_mps(model: MipModel, path: str, cut_pool) -> None:
    names = _mangled_names(model.varindex.name(i)
                           for i in range(model.n_cols))
    rows = list(_rows_with_cuts(model, cut_pool))
    lines = _cone_comments(model, names, "*")
    lines.append("NAME mesplan")
    lines.append("ROWS")
    lines.append(" N obj")
    sense_code = {SENSE_LE: "L", SENSE_GE: "G", SENSE_EQ: "E"}
    for rname, _, _, sense, _ in rows:
        lines.append(f" {sense_code[sense]} {mangle(rname)}")
    # column-major entries; an explicit objective entry (even when zero)
    # pins the column order for the reader
    by_col: list[list[tuple[str, float]]] = [[] for _ in range(model.n_cols)]
    for rname, cols, vals, _, _ in rows:
        rm = mangle(rname)
        for c, v in zip(cols, vals):
            by_col[c].append((rm, float(v)))
    lines.append("COLUMNS")
    integral = False
    marker = 0
    for j in range(model.n_cols):
        want = bool(model.is_binary[j])
        if want != integral:
            kind = "INTORG" if want else "INTEND"
            lines.append(f" M{marker} 'MARKER' '{kind}'")
            marker += 1
            integral = want
        lines.append(f" {names[j]} obj {_num(model.obj[j])}")
        for rm, v in by_col[j]:
            lines.append(f" {names[j]} {rm} {_num(v)}")
    if integral:
        lines.append(f" M{marker} 'MARKER' 'INTEND'")
    lines.append("RHS")
    if model.obj_offset != 0.0:
        lines.append(f" rhs obj {_num(-model.obj_offset)}")
    for rname, _, _, _, rhs in rows:
        lines.append(f" rhs {mangle(rname)} {_num(rhs)}")
    lines.append("BOUNDS")
    for j in range(model.n_cols):
        lines.append(f" LO bnd {names[j]} {_num(model.lb[j])}")
        lines.append(f" UP bnd {names[j]} {_num(model.ub[j])}")
    lines.append("ENDATA")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def export_model(model: MipModel, format: str, path: str,
                 cut_pool=None) -> None:
    """Write ``model`` to ``path`` as ``"lp-file"`` or ``"mps-file"``.

    ``cut_pool`` (optional) appends the pool's active tangent rows, giving
    external solvers the same polyhedral relaxation the built-in solver saw.
    """
    if not model.frozen:
        model.freeze()
    if format == "lp-file":
        _write_lp(model, path, cut_pool)
    elif format == "mps-file":
        _write_mps(model, path, cut_pool)
    else:
        raise ValueError(f"unknown export format {format!r}; expected "
                         f"'lp-file' or 'mps-file'")


# ---------------------------------------------------------------------------
# readers (for the writer dialect above only)
# ---------------------------------------------------------------------------


def _parse_terms(tokens: list[str]):
    """[(coef, name)], offset from '+ 1.5 x - 2 y + 3' style token runs."""
    terms, offset, i = [], 0.0, 0
    while i < len(tokens):
        sign = tokens[i]
        if sign not in ("+", "-"):
            raise ValueError(f"expected sign, got {sign!r}")
        mag = float(tokens[i + 1])
        val = -mag if sign == "-" else mag
        if i + 2 < len(tokens) and tokens[i + 2] not in ("+", "-"):
            terms.append((val, tokens[i + 2]))
            i += 3
        else:
            offset += val
            i += 2
    return terms, offset


def read_lp(path: str) -> MipModel:
    sections: dict[str, list[str]] = {k: [] for k in
                                      ("Minimize", "Subject To", "Bounds",
                                       "Binaries")}
    current = None
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("\\"):
                continue
            if line in ("Minimize", "Subject To", "Bounds", "Binaries"):
                current = line
                continue
            if line == "End":
                break
            if current is None:
                raise ValueError(f"content before first section: {line!r}")
            sec = sections[current]
            if line.startswith("   ") and sec:
                sec[-1] += " " + line.strip()   # wrapped continuation
            else:
                sec.append(line.strip())

    bounds = []
    for entry in sections["Bounds"]:
        lo, le1, name, le2, hi = entry.split()
        if (le1, le2) != ("<=", "<="):
            raise ValueError(f"malformed bound {entry!r}")
        bounds.append((name, float(lo), float(hi)))
    binary = set()
    for entry in sections["Binaries"]:
        binary.update(entry.split())

    obj_terms, offset = [], 0.0
    for entry in sections["Minimize"]:
        if not entry.startswith("obj:"):
            raise ValueError(f"unexpected objective line {entry!r}")
        obj_terms, offset = _parse_terms(entry[4:].split())

    model = MipModel()
    col_of = {}
    obj_val = {n: v for v, n in obj_terms}
    for name, lo, hi in bounds:
        col_of[name] = model.add_col(name, lo, hi, obj=obj_val.get(name, 0.0),
                                     binary=name in binary)
    model.obj_offset = offset
    for entry in sections["Subject To"]:
        rname, _, rest = entry.partition(":")
        tokens = rest.split()
        sense = _TXT_SENSE[tokens[-2]]
        rhs = float(tokens[-1])
        terms, extra = _parse_terms(tokens[:-2])
        if extra:
            rhs -= extra
        model.add_row([col_of[n] for _, n in terms],
                      [v for v, _ in terms], sense, rhs, rname)
    return model.freeze()


def read_mps(path: str) -> MipModel:
    section = None
    row_sense: dict[str, int] = {}
    row_order: list[str] = []
    col_order: list[str] = []
    col_entries: dict[str, list[tuple[str, float]]] = {}
    col_binary: dict[str, bool] = {}
    rhs_map: dict[str, float] = {}
    lo_map: dict[str, float] = {}
    hi_map: dict[str, float] = {}
    code_sense = {"L": SENSE_LE, "G": SENSE_GE, "E": SENSE_EQ}
    integral = False
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("*"):
                continue
            head = line.split(None, 1)[0]
            if head in ("NAME", "ROWS", "COLUMNS", "RHS", "BOUNDS",
                        "ENDATA"):
                section = head
                continue
            tok = line.split()
            if section == "ROWS":
                if tok[0] == "N":
                    continue
                row_sense[tok[1]] = code_sense[tok[0]]
                row_order.append(tok[1])
            elif section == "COLUMNS":
                if len(tok) == 3 and tok[1] == "'MARKER'":
                    integral = tok[2] == "'INTORG'"
                    continue
                name, row, val = tok
                if name not in col_entries:
                    col_entries[name] = []
                    col_order.append(name)
                    col_binary[name] = integral
                col_entries[name].append((row, float(val)))
            elif section == "RHS":
                rhs_map[tok[1]] = float(tok[2])
            elif section == "BOUNDS":
                (lo_map if tok[0] == "LO" else hi_map)[tok[2]] = float(tok[3])

    model = MipModel()
    col_of = {}
    for name in col_order:
        obj = next((v for r, v in col_entries[name] if r == "obj"), 0.0)
        col_of[name] = model.add_col(name, lo_map[name], hi_map[name],
                                     obj=obj, binary=col_binary[name])
    model.obj_offset = -rhs_map.get("obj", 0.0)
    per_row: dict[str, list[tuple[int, float]]] = {r: [] for r in row_order}
    for name in col_order:
        for row, val in col_entries[name]:
            if row != "obj":
                per_row[row].append((col_of[name], val))
    for rname in row_order:
        entries = per_row[rname]
        model.add_row([c for c, _ in entries], [v for _, v in entries],
                      row_sense[rname], rhs_map.get(rname, 0.0), rname)
    return model.freeze()
