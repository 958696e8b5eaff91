"""Fixed-column MPS export and import.

Names longer than eight characters are replaced by
``name[:2] + "~" + base36(ordinal).rjust(5, "0")`` where ``ordinal`` is the
variable or constraint index. The mapping back to the original names is
written as ``* NAME <short> <original>`` comment lines, which
:func:`parse_mps` honours. A shortened name that clashes with another name is
an error.
"""
from __future__ import annotations

import numpy as np

from .model import BINARY, CONTINUOUS, MilpModel

OBJ_ROW = "COST"
_B36 = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ"


class MpsNameError(ValueError):
    """Names cannot be made unique within the format width."""


def _base36(k: int, width: int = 5) -> str:
    s = ""
    while True:
        k, r = divmod(k, 36)
        s = _B36[r] + s
        if k == 0:
            break
    if len(s) > width:
        raise MpsNameError(f"ordinal {k} too large for the shortening scheme")
    return s.rjust(width, "0")


def short_name(name: str, ordinal: int) -> str:
    clean = name.replace(" ", "_")
    if len(clean) <= 8 and clean == name:
        return name
    return clean[:2] + "~" + _base36(ordinal)


def _shorten(names, kind, reserved=()):
    out = [short_name(n, k) for k, n in enumerate(names)]
    seen = set(reserved)
    for s, n in zip(out, names):
        if s in seen:
            raise MpsNameError(f"{kind} name '{n}' shortens to '{s}', which is already taken")
        seen.add(s)
    return out


def _num(v: float) -> str:
    """Render a number in at most 12 characters, as precisely as fits."""
    v = float(v)
    if v == int(v) and abs(v) < 1e11:
        return str(int(v))
    r = repr(v)
    if len(r) <= 12:
        return r
    for prec in range(12, 0, -1):
        s = f"{v:.{prec}g}"
        if len(s) <= 12:
            return s
    raise ValueError(f"cannot format {v}")


def _line(f1="", f2="", f3="", f4="", f5="", f6=""):
    # fields start at columns 2, 5, 15, 25, 40, 50
    s = " " + f1.ljust(2) + " " + f2.ljust(8) + "  " + f3.ljust(8) + "  " + f4.rjust(12)
    if f5:
        s += "   " + f5.ljust(8) + "  " + f6.rjust(12)
    return s.rstrip()


def export_mps(model: MilpModel) -> str:
    """Render ``model`` as fixed-format MPS text."""
    vnames = _shorten(model.var_names, "variable")
    cnames = _shorten(model.con_names, "constraint", reserved=(OBJ_ROW,))
    full = model.name or "MODEL"
    name = short_name(full, 0)
    L = [f"NAME          {name}"]
    if name != full:
        L.append(f"* NAME {name} {full.replace(' ', '_')}")
    for s, n in zip(vnames, model.var_names):
        if s != n:
            L.append(f"* NAME {s} {n}")
    for s, n in zip(cnames, model.con_names):
        if s != n:
            L.append(f"* NAME {s} {n}")
    L.append("ROWS")
    L.append(_line("N", OBJ_ROW))
    tag = {"<=": "L", ">=": "G", "=": "E"}
    for s, sense in zip(cnames, model.senses):
        L.append(_line(tag[sense], s))
    # column-major coefficient lists
    cols = [[] for _ in range(model.n_vars)]
    for r, (idx, val) in enumerate(zip(model.con_idx, model.con_val)):
        for j, v in zip(idx.tolist(), val.tolist()):
            cols[j].append((cnames[r], v))
    L.append("COLUMNS")
    in_int = False
    marker = 0
    for j in range(model.n_vars):
        isb = model.kinds[j] == BINARY
        if isb and not in_int:
            L.append(_line("", f"M{marker:07d}", "'MARKER'", "", "'INTORG'"))
            in_int, marker = True, marker + 1
        elif not isb and in_int:
            L.append(_line("", f"M{marker:07d}", "'MARKER'", "", "'INTEND'"))
            in_int, marker = False, marker + 1
        entries = []
        if model.obj[j] != 0.0:
            entries.append((OBJ_ROW, model.obj[j]))
        entries += cols[j]
        if not entries:
            # keep the column visible to readers
            entries = [(OBJ_ROW, 0.0)]
        for rname, v in entries:
            L.append(_line("", vnames[j], rname, _num(v)))
    if in_int:
        L.append(_line("", f"M{marker:07d}", "'MARKER'", "", "'INTEND'"))
    L.append("RHS")
    if model.obj_offset != 0.0:
        L.append(_line("", "RHS", OBJ_ROW, _num(-model.obj_offset)))
    for s, v in zip(cnames, model.rhs):
        if v != 0.0:
            L.append(_line("", "RHS", s, _num(v)))
    L.append("BOUNDS")
    for j in range(model.n_vars):
        lo, hi, s = model.lb[j], model.ub[j], vnames[j]
        if model.kinds[j] == BINARY:
            if lo == 0.0 and hi == 1.0:
                L.append(_line("BV", "BND", s))
            else:
                L.append(_line("LO", "BND", s, _num(lo)))
                L.append(_line("UP", "BND", s, _num(hi)))
            continue
        if lo == hi:
            L.append(_line("FX", "BND", s, _num(lo)))
            continue
        if np.isneginf(lo) and np.isposinf(hi):
            L.append(_line("FR", "BND", s))
            continue
        if np.isneginf(lo):
            L.append(_line("MI", "BND", s))
        elif lo != 0.0:
            L.append(_line("LO", "BND", s, _num(lo)))
        if np.isfinite(hi):
            L.append(_line("UP", "BND", s, _num(hi)))
    L.append("ENDATA")
    return "\n".join(L) + "\n"


def parse_mps(text: str) -> MilpModel:
    """Read a fixed- or free-format MPS document written by :func:`export_mps`."""
    names = {}
    section = None
    model = None
    obj_row = None
    row_sense, row_order = {}, []
    col_entries: dict[str, list] = {}
    col_order: list[str] = []
    col_kind: dict[str, str] = {}
    rhs: dict[str, float] = {}
    bounds: dict[str, list] = {}
    in_int = False
    mname = "MODEL"
    for raw in text.splitlines():
        if raw.startswith("*"):
            parts = raw[1:].split()
            if len(parts) == 3 and parts[0] == "NAME":
                names[parts[1]] = parts[2]
            continue
        if not raw.strip():
            continue
        if not raw[0].isspace():
            head = raw.split()
            section = head[0].upper()
            if section == "NAME" and len(head) > 1:
                mname = head[1]
            if section == "ENDATA":
                break
            continue
        f = raw.split()
        if section == "ROWS":
            sense, r = f[0].upper(), f[1]
            if sense == "N":
                if obj_row is None:
                    obj_row = r
                continue
            row_sense[r] = {"L": "<=", "G": ">=", "E": "="}[sense]
            row_order.append(r)
        elif section == "COLUMNS":
            if len(f) >= 3 and f[1] == "'MARKER'":
                in_int = f[2] == "'INTORG'"
                continue
            c = f[0]
            if c not in col_entries:
                col_entries[c] = []
                col_order.append(c)
                col_kind[c] = BINARY if in_int else CONTINUOUS
            for k in range(1, len(f) - 1, 2):
                col_entries[c].append((f[k], float(f[k + 1])))
        elif section == "RHS":
            for k in range(1, len(f) - 1, 2):
                rhs[f[k]] = float(f[k + 1])
        elif section == "BOUNDS":
            kind, col = f[0].upper(), f[2]
            val = float(f[3]) if len(f) > 3 else None
            bounds.setdefault(col, []).append((kind, val))
    model = MilpModel(names.get(mname, mname))
    vidx = {}
    for c in col_order:
        lo, hi = 0.0, np.inf
        kind = col_kind[c]
        if kind == BINARY:
            hi = 1.0
        for bkind, val in bounds.get(c, []):
            if bkind == "UP":
                hi = val
            elif bkind == "LO":
                lo = val
            elif bkind == "FX":
                lo = hi = val
            elif bkind == "MI":
                lo = -np.inf
            elif bkind == "PL":
                hi = np.inf
            elif bkind == "FR":
                lo, hi = -np.inf, np.inf
            elif bkind == "BV":
                lo, hi, kind = 0.0, 1.0, BINARY
        obj = sum(v for r, v in col_entries[c] if r == obj_row)
        vidx[c] = model.add_var(names.get(c, c), lo, hi, kind, obj)
    rows = {r: {} for r in row_order}
    for c in col_order:
        for r, v in col_entries[c]:
            if r == obj_row:
                continue
            rows[r][vidx[c]] = rows[r].get(vidx[c], 0.0) + v
    for r in row_order:
        model.add_constr(names.get(r, r), rows[r], row_sense[r], rhs.get(r, 0.0))
    if obj_row in rhs:
        model.obj_offset = -rhs[obj_row]
    return model
