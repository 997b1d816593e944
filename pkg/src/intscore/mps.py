"""Fixed-format MPS export of the training problem for external MILP solvers.

Three variants of the integer program are emitted:

  general     one loss row per data row, symmetric margin 1 on both classes
  aggregated  one loss row per distinct pattern with multiplicity-weighted
              objective, margin 1 on positives and 0 on negatives, and an
              equality row per conflicting label pair
  polish      the aggregated loss structure restricted to an active set,
              with no penalty terms

Variables: LAMnnnnn integer coefficients (LAM00000 is the intercept),
ZSnnnnnn / ZTnnnnnn binary loss indicators, Annnnnnn binary feature-use
indicators, Bnnnnnnn coefficient magnitudes and Fnnnnnnn per-feature
penalties (continuous). All names stay within 8 characters and numeric
fields within 12, per the fixed layout.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .common import frac_float
from .data import AggregatedDataset
from .model import LatticeSpec, PenaltyConfig, big_m_loss

VARIANTS = ("general", "aggregated", "polish")


def _num(x) -> str:
    """Shortest representation that fits the 12-character value field."""
    if isinstance(x, Fraction):
        x = frac_float(x)
    if x == int(x) and abs(x) < 1e11:
        return str(int(x))
    text = repr(float(x))
    if len(text) <= 12:
        return text
    text = format(float(x), ".6e")
    if len(text) <= 12:
        return text
    return format(float(x), ".5e")


class _Builder:
    def __init__(self, name: str):
        self.name = name
        self.rows = []      # (sense, row_name)
        self.cols = {}      # col -> list of (row, value)
        self.col_order = []
        self.integer = set()
        self.binary = set()
        self.bounds = {}    # col -> (lo, up)
        self.rhs = {}

    def row(self, sense, name):
        self.rows.append((sense, name))

    def put(self, col, row, value):
        if col not in self.cols:
            self.cols[col] = []
            self.col_order.append(col)
        self.cols[col].append((row, value))

    def emit(self) -> str:
        out = [f"NAME          {self.name}"]
        out.append("ROWS")
        out.append(" N  COST")
        for sense, name in self.rows:
            out.append(f" {sense}  {name}")
        out.append("COLUMNS")

        def col_lines(col):
            entries = self.cols[col]
            for i in range(0, len(entries), 2):
                chunk = entries[i:i + 2]
                line = f"    {col:<8}  {chunk[0][0]:<8}  {_num(chunk[0][1]):<12}"
                if len(chunk) == 2:
                    line += f"   {chunk[1][0]:<8}  {_num(chunk[1][1]):<12}"
                out.append(line.rstrip())

        marker = 0
        in_int = False
        for col in self.col_order:
            want_int = col in self.integer
            if want_int and not in_int:
                out.append(f"    MARKER{marker:<4}              'MARKER'                 'INTORG'")
                marker += 1
                in_int = True
            elif not want_int and in_int:
                out.append(f"    MARKER{marker:<4}              'MARKER'                 'INTEND'")
                marker += 1
                in_int = False
            col_lines(col)
        if in_int:
            out.append(f"    MARKER{marker:<4}              'MARKER'                 'INTEND'")

        out.append("RHS")
        items = [(r, v) for r, v in self.rhs.items() if v != 0]
        for i in range(0, len(items), 2):
            chunk = items[i:i + 2]
            line = f"    RHS       {chunk[0][0]:<8}  {_num(chunk[0][1]):<12}"
            if len(chunk) == 2:
                line += f"   {chunk[1][0]:<8}  {_num(chunk[1][1]):<12}"
            out.append(line.rstrip())

        out.append("BOUNDS")
        for col in self.col_order:
            if col in self.binary:
                out.append(f" BV BND       {col:<8}")
                continue
            if col in self.bounds:
                lo, up = self.bounds[col]
                if lo is not None:
                    out.append(f" LO BND       {col:<8}  {_num(lo)}")
                if up is not None:
                    out.append(f" UP BND       {col:<8}  {_num(up)}")
        out.append("ENDATA")
        return "\n".join(out) + "\n"


def export_mps(agg: AggregatedDataset, cfg: PenaltyConfig, lattice: LatticeSpec,
               variant: str = "aggregated", active_set=None) -> str:
    """Render the training IP as fixed-format MPS text."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    if variant == "polish" and active_set is None:
        raise ValueError("the polish variant requires an active set")

    p = agg.p
    n = agg.source_n
    bounds = lattice.bounds_for(p)
    b = _Builder(f"SCORE{variant[:3].upper()}")

    if variant == "polish":
        active = sorted(int(j) for j in active_set.indices)
    else:
        active = list(range(p))
    lam_cols = {j: f"LAM{j + 1:05d}" for j in active}
    lam0 = "LAM00000"
    with_penalties = variant != "polish"

    for j in [0] + [j + 1 for j in active]:
        b.integer.add(f"LAM{j:05d}")
    b.bounds[lam0] = (-lattice.intercept_bound, lattice.intercept_bound)
    for j in active:
        b.bounds[lam_cols[j]] = (-int(bounds[j]), int(bounds[j]))

    def lam_entries(pattern, col_rows, sign):
        """Spread the score term sign*(lam0 + sum_j lam_j x_j) over a row."""
        b.put(lam0, col_rows, float(sign))
        for j in active:
            if pattern[j]:
                b.put(lam_cols[j], col_rows, float(sign))

    # loss structure
    if variant == "general":
        rows = []
        for pats, counts, label in ((agg.pos_patterns, agg.pos_counts, 1),
                                    (agg.neg_patterns, agg.neg_counts, -1)):
            for pattern, count in zip(pats, counts):
                for _ in range(int(count)):
                    rows.append((pattern, label))
        for i, (pattern, label) in enumerate(rows):
            row = f"LS{i + 1:06d}"
            b.row("G", row)
            zcol = f"ZS{i + 1:06d}" if label == 1 else f"ZT{i + 1:06d}"
            weight = cfg.w_plus if label == 1 else cfg.w_minus
            b.put(zcol, "COST", frac_float(weight / n))
            # symmetric margin 1: big-M z + y*(score) >= 1
            big_m = big_m_loss(pattern, 1, lattice)
            b.put(zcol, row, float(big_m))
            lam_entries(pattern, row, label)
            b.rhs[row] = 1
            b.binary.add(zcol)
    else:
        if variant == "polish":
            from .polish import project_active
            data = project_active(agg, active_set)
        else:
            data = agg
        proj_pattern = {}
        for s, (pattern, count) in enumerate(zip(data.pos_patterns, data.pos_counts)):
            row = f"LP{s + 1:06d}"
            zcol = f"ZS{s + 1:06d}"
            b.row("G", row)
            b.put(zcol, "COST", frac_float(cfg.w_plus * Fraction(int(count), n)))
            full = pattern if variant != "polish" else _expand(pattern, active, p)
            b.put(zcol, row, float(big_m_loss(full, 1, lattice)))
            lam_entries(full, row, 1)
            b.rhs[row] = 1
            b.binary.add(zcol)
        for t, (pattern, count) in enumerate(zip(data.neg_patterns, data.neg_counts)):
            row = f"LN{t + 1:06d}"
            zcol = f"ZT{t + 1:06d}"
            b.row("G", row)
            b.put(zcol, "COST", frac_float(cfg.w_minus * Fraction(int(count), n)))
            full = pattern if variant != "polish" else _expand(pattern, active, p)
            b.put(zcol, row, float(big_m_loss(full, -1, lattice)))
            lam_entries(full, row, -1)
            b.rhs[row] = 0
            b.binary.add(zcol)
        for c, (s, t) in enumerate(data.conflict_pairs):
            row = f"CF{c + 1:06d}"
            b.row("E", row)
            b.put(f"ZS{int(s) + 1:06d}", row, 1)
            b.put(f"ZT{int(t) + 1:06d}", row, 1)
            b.rhs[row] = 1

    # penalty structure and the term cap
    if with_penalties:
        b.row("L", "CAP")
        b.rhs["CAP"] = cfg.max_terms
        for j in active:
            acol, bcol, fcol = f"A{j + 1:07d}", f"B{j + 1:07d}", f"F{j + 1:07d}"
            b.binary.add(acol)
            b.put(fcol, "COST", 1)
            pen = f"PE{j + 1:06d}"
            b.row("E", pen)
            b.put(fcol, pen, 1)
            b.put(acol, pen, -frac_float(cfg.c0))
            b.put(bcol, pen, -frac_float(cfg.epsilon))
            b.rhs[pen] = 0

            up_row, lo_row = f"L0U{j + 1:05d}", f"L0L{j + 1:05d}"
            b.row("L", up_row)
            b.put(lam_cols[j], up_row, 1)
            b.put(acol, up_row, -int(bounds[j]))
            b.row("G", lo_row)
            b.put(lam_cols[j], lo_row, 1)
            b.put(acol, lo_row, int(bounds[j]))

            up1, lo1 = f"L1U{j + 1:05d}", f"L1L{j + 1:05d}"
            b.row("L", up1)
            b.put(lam_cols[j], up1, 1)
            b.put(bcol, up1, -1)
            b.row("G", lo1)
            b.put(lam_cols[j], lo1, 1)
            b.put(bcol, lo1, 1)

            b.put(acol, "CAP", 1)
            b.bounds[bcol] = (None, int(bounds[j]))

    return b.emit()


def _expand(pattern, active, p):
    full = np.zeros(p, dtype=np.uint8)
    for pos, j in enumerate(active):
        full[j] = pattern[pos]
    return full
